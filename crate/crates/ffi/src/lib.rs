#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! C ABI over the `sjde` library.
//!
//! Every fallible function returns an [`SjdeStatus`]; on failure a message is
//! available from [`sjde_last_error`] on the calling thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sjde::baselines::SprtConfig;
use sjde::calibration::{interference_from_outage, OutageSpec};
use sjde::channel::{ChannelPrior, Hypothesis, RealObservationPair, NUM_PU};
use sjde::config::ScenarioConfig;
use sjde::lt::{solve_delta, LtMessage, LtSampler, Quantizer};
use sjde::sim::{compute_artifacts, run_trial, Artifacts, OperatingPoint, Scenario};
use sjde::sjde::{decide, llr, mmse_estimate, CostWeights, SjdeState};
use sjde::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SjdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    OutOfRange = 3,
    MalformedMessage = 4,
    Unattainable = 5,
    Infeasible = 6,
    UndefinedThreshold = 7,
    BufferTooSmall = 8,
    Config = 9,
    Internal = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SjdeStatus {
    match e {
        Error::IndexOutOfRange { .. } | Error::UnknownProcess { .. } => SjdeStatus::OutOfRange,
        Error::MalformedMessage(_) => SjdeStatus::MalformedMessage,
        Error::DegenerateRate(_) | Error::UnattainableRate(_) => SjdeStatus::Unattainable,
        Error::InfeasibleOutage { .. } | Error::NoFeasiblePoint(_) => SjdeStatus::Infeasible,
        Error::UndefinedThreshold => SjdeStatus::UndefinedThreshold,
        Error::Config(_) | Error::CalibrationParse(_) | Error::CalibrationMismatch { .. } => {
            SjdeStatus::Config
        }
        Error::Io(_) | Error::Csv(_) => SjdeStatus::Internal,
        _ => SjdeStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SjdeStatus, String)>) -> SjdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SjdeStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            SjdeStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (SjdeStatus, String)>;
}

impl<T> IntoFfi<T> for sjde::Result<T> {
    fn ffi(self) -> Result<T, (SjdeStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (SjdeStatus, String) {
    (SjdeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SjdeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SjdeStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(
    p: *const T,
    len: usize,
    what: &str,
) -> Result<&'a [T], (SjdeStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sjde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Gaussian prior of one real channel component.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SjdePrior {
    pub mean_re: f64,
    pub variance_re: f64,
    pub noise_var: f64,
}

impl SjdePrior {
    fn to_prior(self) -> Result<ChannelPrior, (SjdeStatus, String)> {
        ChannelPrior::new(self.mean_re, self.variance_re, self.noise_var).ffi()
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SjdeObservation {
    pub y1: f64,
    pub y2: f64,
    pub pilot_power: f64,
}

/// Opaque per-SU sufficient statistics.
pub struct SjdeStateHandle(SjdeState);

#[no_mangle]
pub extern "C" fn sjde_state_new() -> *mut SjdeStateHandle {
    Box::into_raw(Box::new(SjdeStateHandle(SjdeState::new())))
}

/// # Safety
/// `h` must come from `sjde_state_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sjde_state_free(h: *mut SjdeStateHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Consumes one time step: `obs` points to one observation per PU.
///
/// # Safety
/// `h` must be a live handle; `obs` must point to two observations.
#[no_mangle]
pub unsafe extern "C" fn sjde_state_push_step(
    h: *mut SjdeStateHandle,
    obs: *const SjdeObservation,
) -> SjdeStatus {
    guard(|| {
        let h = out(h, "state")?;
        let o = slice(obs, NUM_PU, "observations")?;
        if o.iter()
            .any(|x| !(x.pilot_power >= 0.0) || !x.y1.is_finite() || !x.y2.is_finite())
        {
            return Err((
                SjdeStatus::InvalidParameter,
                "observation must be finite with pilot power >= 0".into(),
            ));
        }
        let pair = |x: &SjdeObservation| RealObservationPair {
            y1: x.y1,
            y2: x.y2,
            pilot_power: x.pilot_power,
        };
        h.0.push_step(&[pair(&o[0]), pair(&o[1])]);
        Ok(())
    })
}

/// Samples consumed so far.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sjde_state_time(h: *const SjdeStateHandle, t: *mut u64) -> SjdeStatus {
    guard(|| {
        *out(t, "t")? = input(h, "state")?.0.t();
        Ok(())
    })
}

fn check_channel(pu: u32, component: u32) -> Result<(usize, usize), (SjdeStatus, String)> {
    if pu as usize >= NUM_PU || component >= 2 {
        return Err((
            SjdeStatus::OutOfRange,
            format!("no channel (pu {pu}, component {component})"),
        ));
    }
    Ok((pu as usize, component as usize))
}

/// MMSE estimate and marginal LLR of one real channel.
///
/// # Safety
/// Pointers must be valid; `estimate` and `llr_out` may not be null.
#[no_mangle]
pub unsafe extern "C" fn sjde_state_channel(
    h: *const SjdeStateHandle,
    prior: SjdePrior,
    pu: u32,
    component: u32,
    estimate: *mut f64,
    llr_out: *mut f64,
) -> SjdeStatus {
    guard(|| {
        let s = &input(h, "state")?.0;
        let p = prior.to_prior()?;
        let (i, n) = check_channel(pu, component)?;
        *out(estimate, "estimate")? = mmse_estimate(s, &p, i, n);
        *out(llr_out, "llr")? = llr(s, &p, i, n);
        Ok(())
    })
}

/// Pilot energy `U` seen for PU `pu`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_state_fisher(
    h: *const SjdeStateHandle,
    pu: u32,
    u: *mut f64,
) -> SjdeStatus {
    guard(|| {
        let (i, _) = check_channel(pu, 0)?;
        *out(u, "u")? = input(h, "state")?.0.fisher(i);
        Ok(())
    })
}

/// Joint decision: `decision` is 1 when `llr >= log(c0 / (c1 + ce Σ ĥ²))`.
///
/// # Safety
/// `estimates` must hold `n` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_decide(
    llr_value: f64,
    estimates: *const f64,
    n: usize,
    c0: f64,
    c1: f64,
    ce: f64,
    decision: *mut u8,
    threshold: *mut f64,
) -> SjdeStatus {
    guard(|| {
        let w = CostWeights::new(c0, c1, ce).ffi()?;
        let d = decide(llr_value, slice(estimates, n, "estimates")?, &w).ffi()?;
        *out(decision, "decision")? = d.decision as u8;
        if let Some(t) = threshold.as_mut() {
            *t = d.threshold;
        }
        Ok(())
    })
}

/// Positive root of `Δ tanh(Δ/2) = Σ mean_abs / target_rate`.
///
/// # Safety
/// `mean_abs` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn sjde_solve_delta(
    target_rate: f64,
    mean_abs: *const f64,
    n: usize,
    delta: *mut f64,
) -> SjdeStatus {
    guard(|| {
        *out(delta, "delta")? = solve_delta(target_rate, slice(mean_abs, n, "mean_abs")?).ffi()?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SjdeOutageSpec {
    pub p_out: f64,
    pub pu_rate: f64,
    pub pu_power: f64,
    pub eta: f64,
    /// Prior of the PU link per real component.
    pub g_prior: SjdePrior,
    pub safety_margin: f64,
}

impl SjdeOutageSpec {
    fn to_spec(self) -> Result<OutageSpec, (SjdeStatus, String)> {
        Ok(OutageSpec {
            p_out: self.p_out,
            pu_rate: self.pu_rate,
            pu_power: self.pu_power,
            eta: self.eta,
            g_prior: self.g_prior.to_prior()?,
            safety_margin: self.safety_margin,
        })
    }
}

/// PU outage probability at SU interference `interference`.
///
/// # Safety
/// `p` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_outage_probability(
    spec: SjdeOutageSpec,
    interference: f64,
    p: *mut f64,
) -> SjdeStatus {
    guard(|| {
        if !(interference >= 0.0) {
            return Err((
                SjdeStatus::InvalidParameter,
                "interference must be >= 0".into(),
            ));
        }
        *out(p, "p")? = spec.to_spec()?.outage_probability(interference);
        Ok(())
    })
}

/// Largest interference keeping outage at the margin-reduced target.
///
/// # Safety
/// `interference` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_interference_cap(
    spec: SjdeOutageSpec,
    interference: *mut f64,
) -> SjdeStatus {
    guard(|| {
        *out(interference, "interference")? = interference_from_outage(&spec.to_spec()?).ffi()?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SjdeLtMessage {
    pub su_id: u8,
    pub pu_index: u8,
    pub component: u8,
    /// 1 for a positive increment.
    pub positive: u8,
    pub index: u32,
    pub t: u64,
}

impl From<LtMessage> for SjdeLtMessage {
    fn from(m: LtMessage) -> Self {
        SjdeLtMessage {
            su_id: m.su_id,
            pu_index: m.pu_index,
            component: m.component,
            positive: m.positive as u8,
            index: m.index,
            t: m.t,
        }
    }
}

/// Serializes a message with `r` payload bits. On `BufferTooSmall`,
/// `written` holds the required size.
///
/// # Safety
/// `buf` must hold `cap` bytes; `msg` and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_encode(
    msg: *const SjdeLtMessage,
    r: u32,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> SjdeStatus {
    guard(|| {
        let m = input(msg, "message")?;
        let msg = LtMessage {
            su_id: m.su_id,
            pu_index: m.pu_index,
            component: m.component,
            positive: m.positive != 0,
            index: m.index,
            t: m.t,
        };
        let bytes = msg.encode(r).ffi()?;
        let w = out(written, "written")?;
        *w = bytes.len();
        if bytes.len() > cap || buf.is_null() {
            return Err((
                SjdeStatus::BufferTooSmall,
                format!("need {} bytes", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Parses a message with `r` payload bits received at time `t`.
///
/// # Safety
/// `buf` must hold `len` bytes; `msg` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_decode(
    buf: *const u8,
    len: usize,
    r: u32,
    t: u64,
    msg: *mut SjdeLtMessage,
) -> SjdeStatus {
    guard(|| {
        let m = LtMessage::decode(slice(buf, len, "buffer")?, r, t).ffi()?;
        *out(msg, "message")? = m.into();
        Ok(())
    })
}

/// Opaque level-triggered sampler of one process.
pub struct SjdeLtSamplerHandle(LtSampler);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SjdeTrigger {
    pub positive: u8,
    pub overflow: u8,
    pub index: u32,
    pub increment: f64,
}

/// # Safety
/// `out_handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_sampler_new(
    delta: f64,
    phi: f64,
    r: u32,
    out_handle: *mut *mut SjdeLtSamplerHandle,
) -> SjdeStatus {
    guard(|| {
        let slot = out(out_handle, "handle")?;
        let s = LtSampler::new(delta, Quantizer::new(phi, r).ffi()?).ffi()?;
        *slot = Box::into_raw(Box::new(SjdeLtSamplerHandle(s)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `sjde_lt_sampler_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_sampler_free(h: *mut SjdeLtSamplerHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Feeds one sample; `fired` is set to 1 and `trigger` filled on a trigger.
///
/// # Safety
/// Pointers must be valid; `trigger` may be null.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_sampler_update(
    h: *mut SjdeLtSamplerHandle,
    y: f64,
    fired: *mut u8,
    trigger: *mut SjdeTrigger,
) -> SjdeStatus {
    guard(|| {
        let s = &mut out(h, "sampler")?.0;
        let f = out(fired, "fired")?;
        match s.update(y) {
            Some(t) => {
                *f = 1;
                if let Some(o) = trigger.as_mut() {
                    *o = SjdeTrigger {
                        positive: t.positive as u8,
                        overflow: t.overflow as u8,
                        index: t.index,
                        increment: t.increment,
                    };
                }
            }
            None => *f = 0,
        }
        Ok(())
    })
}

/// Increment accumulated since the last trigger.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_lt_sampler_pending(
    h: *const SjdeLtSamplerHandle,
    pending: *mut f64,
) -> SjdeStatus {
    guard(|| {
        *out(pending, "pending")? = input(h, "sampler")?.0.pending();
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SjdeScheme {
    DsaSjde = 0,
    DsaSprt = 1,
    Opportunistic = 2,
    Underlay = 3,
}

/// Scheme plus the parameters it reads: `gamma` (DSA-SJDE), the SPRT
/// thresholds (DSA-SPRT), or `tau` and `theta` (opportunistic).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SjdeOperatingPoint {
    pub scheme: SjdeScheme,
    pub gamma: f64,
    pub sprt_lower: f64,
    pub sprt_upper: f64,
    pub tau: u64,
    pub theta: f64,
}

impl SjdeOperatingPoint {
    fn to_op(self) -> Result<OperatingPoint, (SjdeStatus, String)> {
        Ok(match self.scheme {
            SjdeScheme::DsaSjde => OperatingPoint::DsaSjde { gamma: self.gamma },
            SjdeScheme::DsaSprt => {
                OperatingPoint::DsaSprt(SprtConfig::new(self.sprt_lower, self.sprt_upper).ffi()?)
            }
            SjdeScheme::Opportunistic => OperatingPoint::Opportunistic {
                tau: self.tau,
                theta: self.theta,
            },
            SjdeScheme::Underlay => OperatingPoint::Underlay,
        })
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SjdeTrialSummary {
    /// 1 when the PUs were active.
    pub active: u8,
    /// 0 or 1; -1 when no sensing took place.
    pub decision: i8,
    pub tau: u64,
    pub selected_su: u32,
    pub power: f64,
    pub rate: f64,
    pub messages: u64,
    pub interference: [f64; 2],
    pub outage: [u8; 2],
}

/// Opaque calibrated scenario.
pub struct SjdeSimulatorHandle {
    scn: Scenario,
    art: Artifacts,
}

/// Builds a simulator from scenario TOML (null or empty for defaults) and
/// runs the scenario calibration.
///
/// # Safety
/// `toml` must be null or NUL-terminated; `out_handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_simulator_new(
    toml: *const c_char,
    out_handle: *mut *mut SjdeSimulatorHandle,
) -> SjdeStatus {
    guard(|| {
        let slot = out(out_handle, "handle")?;
        let cfg = if toml.is_null() {
            ScenarioConfig::default()
        } else {
            let text = CStr::from_ptr(toml)
                .to_str()
                .map_err(|_| (SjdeStatus::Config, "config is not UTF-8".to_string()))?;
            ScenarioConfig::from_toml(text).ffi()?
        };
        let scn = Scenario::new(cfg).ffi()?;
        let art = compute_artifacts(&scn).ffi()?;
        *slot = Box::into_raw(Box::new(SjdeSimulatorHandle { scn, art }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `sjde_simulator_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sjde_simulator_free(h: *mut SjdeSimulatorHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Level-triggered threshold Δ chosen by calibration.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_simulator_delta(
    h: *const SjdeSimulatorHandle,
    delta: *mut f64,
) -> SjdeStatus {
    guard(|| {
        *out(delta, "delta")? = input(h, "simulator")?.art.delta;
        Ok(())
    })
}

/// Simulates frame `index` of stream `seed` at operating point `op`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sjde_simulator_run_trial(
    h: *const SjdeSimulatorHandle,
    op: SjdeOperatingPoint,
    seed: u64,
    index: u64,
    summary: *mut SjdeTrialSummary,
) -> SjdeStatus {
    guard(|| {
        let sim = input(h, "simulator")?;
        let r = run_trial(&sim.scn, &sim.art, &op.to_op()?, seed, index).ffi()?;
        *out(summary, "summary")? = SjdeTrialSummary {
            active: (r.hypothesis == Hypothesis::H1) as u8,
            decision: r.decision.map_or(-1, |d| d as i8),
            tau: r.tau,
            selected_su: r.selected_su as u32,
            power: r.power,
            rate: r.rate,
            messages: r.messages,
            interference: r.interference,
            outage: [r.outage[0] as u8, r.outage[1] as u8],
        };
        Ok(())
    })
}
