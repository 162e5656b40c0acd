//! Cooperative sensing protocol: SU agents, the fusion center, SU selection
//! and transmit-power computation.
//!
//! Within a time step every SU consumes its observations first and the FC
//! then applies all reports emitted in that step (zero reporting latency).
//! The FC sees the pilots too, so its `U` sequence and stopping time match
//! the SUs' exactly; only the `V` statistics travel over the reporting links.

use crate::baselines::capped_power;
use crate::channel::{ChannelPrior, RealObservationPair, NUM_COMPONENTS, NUM_PU};
use crate::error::{Error, Result};
use crate::lt::{
    reconstruct_increment, reconstruct_uniform, FcAccumulator, LtMessage, LtSampler, Quantizer,
    Trigger, UniformSampler,
};
use crate::sjde::{self, CostWeights, JointDecision, SjdeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Role {
    Tx,
    Rx,
}

/// Pairs are `(2j, 2j+1)`; the even member transmits.
pub fn role_of(su: usize) -> Role {
    if su.is_multiple_of(2) {
        Role::Tx
    } else {
        Role::Rx
    }
}

/// Receiver paired with transmitter `tx`.
pub fn partner_of(tx: usize) -> usize {
    tx ^ 1
}

/// How SUs convey their `V` statistics to the FC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReportingMode {
    LevelTriggered {
        delta: f64,
        quantizer: Quantizer,
    },
    Uniform {
        period: u64,
        quantizer: Quantizer,
    },
    /// Lossless, unquantized per-sample reporting.
    Exact,
}

#[derive(Debug, Clone)]
enum Reporter {
    Level(LtSampler),
    Uniform(UniformSampler),
    Exact,
}

/// A report as delivered to the FC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Report {
    Message(LtMessage),
    Exact {
        su_id: u8,
        pu_index: u8,
        component: u8,
        value: f64,
    },
}

impl Report {
    fn route(&self) -> (usize, usize, usize) {
        match *self {
            Report::Message(m) => (m.su_id as usize, m.pu_index as usize, m.component as usize),
            Report::Exact {
                su_id,
                pu_index,
                component,
                ..
            } => (su_id as usize, pu_index as usize, component as usize),
        }
    }
}

/// One SU: local sufficient statistics plus a reporter per process.
#[derive(Debug, Clone)]
pub struct SuAgent {
    id: u8,
    role: Role,
    state: SjdeState,
    reporters: [[Reporter; NUM_COMPONENTS]; NUM_PU],
}

impl SuAgent {
    pub fn new(id: usize, mode: &ReportingMode) -> Result<Self> {
        let id8 = u8::try_from(id)
            .map_err(|_| Error::InvalidParameter(format!("SU id {id} does not fit 8 bits")))?;
        let make = || -> Result<Reporter> {
            Ok(match *mode {
                ReportingMode::LevelTriggered { delta, quantizer } => {
                    Reporter::Level(LtSampler::new(delta, quantizer)?)
                }
                ReportingMode::Uniform { period, quantizer } => {
                    Reporter::Uniform(UniformSampler::new(period, quantizer)?)
                }
                ReportingMode::Exact => Reporter::Exact,
            })
        };
        Ok(SuAgent {
            id: id8,
            role: role_of(id),
            state: SjdeState::new(),
            reporters: [[make()?, make()?], [make()?, make()?]],
        })
    }

    pub fn id(&self) -> usize {
        self.id as usize
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn state(&self) -> &SjdeState {
        &self.state
    }

    /// Local MMSE estimates `ĥ_i^n`.
    pub fn local_estimates(
        &self,
        priors: &[ChannelPrior; NUM_PU],
    ) -> [[f64; NUM_COMPONENTS]; NUM_PU] {
        let mut out = [[0.0; NUM_COMPONENTS]; NUM_PU];
        for (i, row) in out.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                *v = sjde::mmse_estimate(&self.state, &priors[i], i, n);
            }
        }
        out
    }

    /// `|ĥ_i|²` per PU from local statistics.
    pub fn local_gains(&self, priors: &[ChannelPrior; NUM_PU]) -> [f64; NUM_PU] {
        let est = self.local_estimates(priors);
        [sq_norm(&est[0]), sq_norm(&est[1])]
    }

    /// Consumes step `t` (1-based) and appends any reports to `out`.
    pub fn step(&mut self, obs: &[RealObservationPair; NUM_PU], t: u64, out: &mut Vec<Report>) {
        self.state.push_step(obs);
        for (i, o) in obs.iter().enumerate() {
            for n in 0..NUM_COMPONENTS {
                let y = o.component(n);
                let trig = match &mut self.reporters[i][n] {
                    Reporter::Level(s) => s.update(y),
                    Reporter::Uniform(u) => u.update(y, t),
                    Reporter::Exact => {
                        out.push(Report::Exact {
                            su_id: self.id,
                            pu_index: i as u8,
                            component: n as u8,
                            value: y,
                        });
                        None
                    }
                };
                if let Some(tr) = trig {
                    out.push(self.message(i, n, &tr, t));
                }
            }
        }
    }

    /// Forces uniform reporters to send their residual increments.
    pub fn flush(&mut self, t: u64, out: &mut Vec<Report>) {
        for i in 0..NUM_PU {
            for n in 0..NUM_COMPONENTS {
                let trig = match &mut self.reporters[i][n] {
                    Reporter::Uniform(u) if !t.is_multiple_of(u.period()) => Some(u.flush()),
                    _ => None,
                };
                if let Some(tr) = trig {
                    out.push(self.message(i, n, &tr, t));
                }
            }
        }
    }

    /// Overshoot overflows seen by the level-triggered samplers.
    pub fn overflows(&self) -> u64 {
        self.reporters
            .iter()
            .flatten()
            .map(|r| match r {
                Reporter::Level(s) => s.overflows(),
                _ => 0,
            })
            .sum()
    }

    fn message(&self, i: usize, n: usize, tr: &Trigger, t: u64) -> Report {
        Report::Message(LtMessage {
            su_id: self.id,
            pu_index: i as u8,
            component: n as u8,
            positive: tr.positive,
            index: tr.index,
            t,
        })
    }
}

/// Convenience wrapper matching the per-SU procedure's step.
pub fn su_step(agent: &mut SuAgent, obs: &[RealObservationPair; NUM_PU], t: u64) -> Vec<Report> {
    let mut out = Vec::new();
    agent.step(obs, t, &mut out);
    out
}

fn sq_norm(v: &[f64; NUM_COMPONENTS]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Fusion-center state.
#[derive(Debug, Clone)]
pub struct FcState {
    mode: ReportingMode,
    acc: Vec<[[FcAccumulator; NUM_COMPONENTS]; NUM_PU]>,
    fisher: [f64; NUM_PU],
    t: u64,
    stopped: bool,
    messages: u64,
}

impl FcState {
    pub fn new(num_su: usize, mode: ReportingMode) -> Self {
        FcState {
            mode,
            acc: vec![Default::default(); num_su],
            fisher: [0.0; NUM_PU],
            t: 0,
            stopped: false,
            messages: 0,
        }
    }

    pub fn num_su(&self) -> usize {
        self.acc.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn fisher(&self, i: usize) -> f64 {
        self.fisher[i]
    }

    pub fn fisher_total(&self) -> f64 {
        self.fisher.iter().sum()
    }

    /// Reports received so far (exact reports count one per sample).
    pub fn messages(&self) -> u64 {
        self.messages
    }

    /// `Ṽ` for process `(k, i, n)`.
    pub fn v_tilde(&self, k: usize, i: usize, n: usize) -> f64 {
        self.acc[k][i][n].v_tilde_sum
    }

    pub fn accumulator(&self, k: usize, i: usize, n: usize) -> &FcAccumulator {
        &self.acc[k][i][n]
    }

    /// Applies one report without advancing time.
    pub fn apply(&mut self, report: &Report) -> Result<()> {
        let (k, i, n) = report.route();
        if k >= self.acc.len() || i >= NUM_PU || n >= NUM_COMPONENTS {
            return Err(Error::UnknownProcess {
                su: k,
                pu: i,
                component: n,
            });
        }
        let inc = match (report, &self.mode) {
            (Report::Message(m), ReportingMode::LevelTriggered { delta, quantizer }) => {
                reconstruct_increment(m, *delta, quantizer)?
            }
            (Report::Message(m), ReportingMode::Uniform { quantizer, .. }) => {
                reconstruct_uniform(m, quantizer)?
            }
            (Report::Exact { value, .. }, ReportingMode::Exact) => *value,
            _ => {
                return Err(Error::MalformedMessage(
                    "report kind does not match the FC decoder".into(),
                ))
            }
        };
        self.acc[k][i][n].apply(inc);
        self.messages += 1;
        Ok(())
    }

    /// Advances one time step; returns whether the FC has stopped.
    pub fn advance(&mut self, pilot_powers: [f64; NUM_PU], gamma: f64, tp: u64) -> bool {
        for (u, p) in self.fisher.iter_mut().zip(pilot_powers) {
            *u += p;
        }
        self.t += 1;
        if sjde::should_stop(self.fisher_total(), gamma) || self.t >= tp {
            self.stopped = true;
        }
        self.stopped
    }

    /// Reconstructed estimates `h̃` indexed `[k][i][n]`.
    pub fn estimates(
        &self,
        priors: &[[ChannelPrior; NUM_PU]],
    ) -> Vec<[[f64; NUM_COMPONENTS]; NUM_PU]> {
        self.acc
            .iter()
            .zip(priors)
            .map(|(a, pr)| {
                let mut out = [[0.0; NUM_COMPONENTS]; NUM_PU];
                for i in 0..NUM_PU {
                    for n in 0..NUM_COMPONENTS {
                        out[i][n] =
                            sjde::estimate_from_stats(a[i][n].v_tilde_sum, self.fisher[i], &pr[i]);
                    }
                }
                out
            })
            .collect()
    }

    /// `|h̃_i|²` per PU for SU `k`.
    pub fn gains_of(&self, k: usize, priors: &[ChannelPrior; NUM_PU]) -> [f64; NUM_PU] {
        let mut g = [0.0; NUM_PU];
        for (i, slot) in g.iter_mut().enumerate() {
            for n in 0..NUM_COMPONENTS {
                let h = sjde::estimate_from_stats(
                    self.acc[k][i][n].v_tilde_sum,
                    self.fisher[i],
                    &priors[i],
                );
                *slot += h * h;
            }
        }
        g
    }

    /// Global LLR with `Ṽ` in place of `V`.
    pub fn llr(&self, priors: &[[ChannelPrior; NUM_PU]]) -> f64 {
        let mut total = 0.0;
        for (a, pr) in self.acc.iter().zip(priors) {
            for i in 0..NUM_PU {
                for n in 0..NUM_COMPONENTS {
                    total += sjde::llr_from_stats(a[i][n].v_tilde_sum, self.fisher[i], &pr[i]);
                }
            }
        }
        total
    }
}

/// One FC time step: apply this step's reports, then account the pilots.
pub fn fc_step(
    fc: &mut FcState,
    reports: &[Report],
    pilot_powers: [f64; NUM_PU],
    gamma: f64,
    tp: u64,
) -> Result<bool> {
    for r in reports {
        fc.apply(r)?;
    }
    Ok(fc.advance(pilot_powers, gamma, tp))
}

pub fn fc_estimate(
    fc: &FcState,
    priors: &[[ChannelPrior; NUM_PU]],
) -> Vec<[[f64; NUM_COMPONENTS]; NUM_PU]> {
    fc.estimates(priors)
}

pub fn fc_llr(fc: &FcState, priors: &[[ChannelPrior; NUM_PU]]) -> f64 {
    fc.llr(priors)
}

/// Estimate-aware decision from reconstructed statistics.
pub fn fc_decide(
    fc: &FcState,
    priors: &[[ChannelPrior; NUM_PU]],
    w: &CostWeights,
) -> Result<JointDecision> {
    let est: Vec<f64> = fc
        .estimates(priors)
        .into_iter()
        .flatten()
        .flatten()
        .collect();
    sjde::decide(fc.llr(priors), &est, w)
}

/// `|h̃_i|²` per SU and PU from `[k][i][n]` estimates.
pub fn gains(estimates: &[[[f64; NUM_COMPONENTS]; NUM_PU]]) -> Vec<[f64; NUM_PU]> {
    estimates
        .iter()
        .map(|e| [sq_norm(&e[0]), sq_norm(&e[1])])
        .collect()
}

/// Transmitter maximizing `min_i I_i / |h̃_i|²`; ties go to the lowest id.
pub fn select_su(gains: &[[f64; NUM_PU]], caps: [f64; NUM_PU]) -> Result<usize> {
    select_tx(gains.iter().step_by(2).copied(), caps)
        .map(|j| 2 * j)
        .ok_or(Error::NoTransmitter)
}

/// Same as [`select_su`] over transmitter gains only; returns the
/// transmitter's position in `tx_gains`.
pub fn select_tx(
    tx_gains: impl Iterator<Item = [f64; NUM_PU]>,
    caps: [f64; NUM_PU],
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, g) in tx_gains.enumerate() {
        let s = g
            .iter()
            .zip(caps)
            .map(|(g, c)| if *g > 0.0 { c / g } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// Round-robin choice among transmitters for frame `frame`.
pub fn round_robin(num_su: usize, frame: u64) -> Result<usize> {
    let tx = num_su.div_ceil(2);
    if tx == 0 {
        return Err(Error::NoTransmitter);
    }
    Ok(2 * (frame % tx as u64) as usize)
}

/// Transmit power of the selected SU from its local gains and α-scaled caps.
pub fn compute_power(
    decision: bool,
    local_gains: [f64; NUM_PU],
    caps: [f64; NUM_PU],
    pmax: f64,
) -> f64 {
    if decision {
        capped_power(local_gains, caps, pmax)
    } else {
        pmax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransmissionPlan {
    pub su_id: usize,
    pub power: f64,
    pub decision: bool,
}
