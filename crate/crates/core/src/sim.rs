//! Frame simulation, scheme evaluation and parameter sweeps.
//!
//! A sweep first simulates every frame once and caches, per candidate
//! operating point, what the SU transmission depends on: stopping time,
//! decision, reconstructed and local channel gains, message count. Grid
//! points then only differ in caps, power limit, prior and frame length, so
//! re-tuning and evaluation run on the cache.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{capped_power, opportunistic_power, sprt_step, SprtConfig, SprtOutcome};
use crate::calibration::{
    alpha_grid, alpha_percentile, best_feasible, interference_from_outage, realized_rate,
    AlphaTable, Calibration, OperatingStats, OutageSpec,
};
use crate::channel::{
    gen_pilot, sample_channel, ChannelPrior, Constellation, Hypothesis, PreambleGenerator,
    PreambleStep, NUM_COMPONENTS, NUM_PU,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lt::{calibrate_delta_mc, IncrementBank, Quantizer};
use crate::protocol::{
    fc_decide, partner_of, round_robin, select_tx, FcState, Report, ReportingMode, SuAgent,
};
use crate::rng::{stream, Purpose, RandomStream};
use crate::stats::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    DsaSjde,
    DsaSprt,
    Opportunistic,
    Underlay,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::DsaSjde,
        Scheme::DsaSprt,
        Scheme::Opportunistic,
        Scheme::Underlay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::DsaSjde => "dsa-sjde",
            Scheme::DsaSprt => "dsa-sprt",
            Scheme::Opportunistic => "opportunistic",
            Scheme::Underlay => "underlay",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme {s}")))
    }
}

/// Tuned parameters of one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingPoint {
    DsaSjde { gamma: f64 },
    DsaSprt(SprtConfig),
    Opportunistic { tau: u64, theta: f64 },
    Underlay,
}

impl OperatingPoint {
    pub fn scheme(&self) -> Scheme {
        match self {
            OperatingPoint::DsaSjde { .. } => Scheme::DsaSjde,
            OperatingPoint::DsaSprt(_) => Scheme::DsaSprt,
            OperatingPoint::Opportunistic { .. } => Scheme::Opportunistic,
            OperatingPoint::Underlay => Scheme::Underlay,
        }
    }

    /// Reads the operating point of `scheme` from a calibration file.
    pub fn from_calibration(scheme: Scheme, cal: &Calibration) -> Result<Self> {
        Ok(match scheme {
            Scheme::DsaSjde => OperatingPoint::DsaSjde {
                gamma: cal.gamma.ok_or(Error::MissingCalibration("gamma"))?,
            },
            Scheme::DsaSprt => {
                OperatingPoint::DsaSprt(cal.sprt.ok_or(Error::MissingCalibration("sprt_lower"))?)
            }
            Scheme::Opportunistic => {
                let (tau, theta) = cal
                    .opportunistic
                    .ok_or(Error::MissingCalibration("opportunistic_tau"))?;
                OperatingPoint::Opportunistic { tau, theta }
            }
            Scheme::Underlay => OperatingPoint::Underlay,
        })
    }
}

/// Validated scenario with derived priors and constellation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub priors: Vec<[ChannelPrior; NUM_PU]>,
    pub beta: ChannelPrior,
    pub g: ChannelPrior,
    pub constellation: Constellation,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Scenario {
            priors: cfg.priors()?,
            beta: cfg.beta_prior()?,
            g: cfg.g_prior()?,
            constellation: cfg.constellation.build()?,
            cfg,
        })
    }

    pub fn num_su(&self) -> usize {
        self.cfg.num_su
    }

    pub fn num_tx(&self) -> usize {
        self.cfg.num_su / 2
    }

    pub fn tx_priors(&self) -> Vec<[ChannelPrior; NUM_PU]> {
        self.priors.iter().step_by(2).copied().collect()
    }

    pub fn outage(&self) -> OutageSpec {
        OutageSpec {
            p_out: self.cfg.p_out,
            pu_rate: self.cfg.pu_rate,
            pu_power: self.cfg.pu_power,
            eta: self.cfg.pu_noise_var,
            g_prior: self.g,
            safety_margin: self.cfg.safety_margin,
        }
    }
}

/// Scenario-level calibration shared by all operating points.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub phi: f64,
    pub phi_uniform: f64,
    pub delta: f64,
    pub alpha: AlphaTable,
}

impl Artifacts {
    pub fn lt_mode(&self, scn: &Scenario) -> Result<ReportingMode> {
        Ok(ReportingMode::LevelTriggered {
            delta: self.delta,
            quantizer: Quantizer::new(self.phi, scn.cfg.bits)?,
        })
    }

    pub fn uniform_mode(&self, scn: &Scenario) -> Result<ReportingMode> {
        Ok(ReportingMode::Uniform {
            period: scn.cfg.uniform_period,
            quantizer: Quantizer::new(self.phi_uniform, scn.cfg.bits)?,
        })
    }

    pub fn from_calibration(cal: &Calibration) -> Self {
        Artifacts {
            phi: cal.phi,
            phi_uniform: cal.phi_uniform,
            delta: cal.delta,
            alpha: cal.alpha.clone(),
        }
    }
}

/// Which hypotheses feed a calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisMix {
    Only(Hypothesis),
    /// Alternating H0/H1 frames.
    Balanced,
}

impl HypothesisMix {
    fn pick(self, j: u64) -> Hypothesis {
        match self {
            HypothesisMix::Only(h) => h,
            HypothesisMix::Balanced => stratified_hypothesis(j),
        }
    }
}

/// Even frames are idle, odd frames active.
pub fn stratified_hypothesis(j: u64) -> Hypothesis {
    if j.is_multiple_of(2) {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

/// Raw per-process observation paths of `frames` frames over `horizon` steps.
pub fn observation_bank(
    scn: &Scenario,
    mix: HypothesisMix,
    frames: usize,
    horizon: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<IncrementBank> {
    let k = scn.num_su();
    let paths: Vec<Vec<Vec<f64>>> = (0..frames as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, purpose, j);
            let hyp = mix.pick(j);
            let frame = draw_frame(scn, j, hyp, &mut rng);
            let mut gen =
                PreambleGenerator::new(&scn.constellation, &scn.priors, &frame.h, hyp, rng);
            (0..horizon)
                .map(|_| flatten_obs(gen.next_step(), k))
                .collect()
        })
        .collect();
    let mut bank = IncrementBank::new(4 * k, horizon)?;
    for f in &paths {
        bank.push_frame(f)?;
    }
    Ok(bank)
}

fn flatten_obs(step: &PreambleStep, k: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(4 * k);
    for row in &step.obs {
        for o in row {
            v.push(o.y1);
            v.push(o.y2);
        }
    }
    v
}

/// Per-sample φ and per-report φ_u percentiles from a balanced bank.
fn overshoot_ranges(bank_paths: &IncrementBank, period: usize, pct: f64) -> Result<(f64, f64)> {
    let (mut abs_y, mut abs_block) = (Vec::new(), Vec::new());
    bank_paths.for_each_path(|path| {
        abs_y.extend(path.iter().map(|y| y.abs()));
        abs_block.extend(
            path.chunks_exact(period)
                .map(|c| c.iter().sum::<f64>().abs()),
        );
    });
    let phi = percentile(&mut abs_y, pct).ok_or(Error::Empty("phi samples"))?;
    let phi_u = percentile(&mut abs_block, pct).ok_or(Error::Empty("phi samples"))?;
    Ok((phi, phi_u))
}

/// Computes φ, φ_u, Δ and the α table for a scenario.
pub fn compute_artifacts(scn: &Scenario) -> Result<Artifacts> {
    let cfg = &scn.cfg;
    let bank = observation_bank(
        scn,
        HypothesisMix::Balanced,
        cfg.calibration_frames,
        cfg.calibration_horizon,
        cfg.seed,
        Purpose::DeltaCalibration,
    )?;
    let (phi, phi_uniform) =
        overshoot_ranges(&bank, cfg.uniform_period as usize, cfg.phi_percentile)?;
    let delta = calibrate_delta_mc(&bank, cfg.target_msg_rate())?;
    let alpha = alpha_percentile(
        &scn.constellation,
        &scn.tx_priors(),
        &alpha_grid(cfg.tp),
        cfg.alpha_trials,
        cfg.alpha_percentile,
        cfg.seed,
    )?;
    Ok(Artifacts {
        phi,
        phi_uniform,
        delta,
        alpha,
    })
}

/// Per-grid-point quantities that do not affect the preamble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub caps: [f64; NUM_PU],
    pub pmax: f64,
    pub pi0: f64,
    /// Frame length T, samples.
    pub frame_len: f64,
    pub pm_limit: f64,
}

impl EvalParams {
    pub fn from_config(scn: &Scenario) -> Result<Self> {
        let i = interference_from_outage(&scn.outage())?;
        Ok(EvalParams {
            caps: [i; NUM_PU],
            pmax: scn.cfg.pmax(),
            pi0: scn.cfg.pi0,
            frame_len: scn.cfg.frame_len(),
            pm_limit: scn.cfg.pm_limit(),
        })
    }
}

/// Channel realizations of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub hypothesis: Hypothesis,
    /// Cross links `[su][pu]`.
    pub h: Vec<[Complex64; NUM_PU]>,
    /// SU Tx→Rx gain per pair.
    pub beta: Vec<Complex64>,
    /// PU Tx→Rx gain per PU.
    pub g: [Complex64; NUM_PU],
}

pub fn draw_frame(scn: &Scenario, index: u64, hyp: Hypothesis, rng: &mut RandomStream) -> Frame {
    let h = scn
        .priors
        .iter()
        .map(|p| [sample_channel(&p[0], rng), sample_channel(&p[1], rng)])
        .collect();
    let beta = (0..scn.num_tx())
        .map(|_| sample_channel(&scn.beta, rng))
        .collect();
    let g = [sample_channel(&scn.g, rng), sample_channel(&scn.g, rng)];
    Frame {
        index,
        hypothesis: hyp,
        h,
        beta,
        g,
    }
}

/// Squared magnitudes of a frame's links.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSummary {
    pub index: u64,
    pub hypothesis: Hypothesis,
    pub h2: Vec<[f64; NUM_PU]>,
    pub beta2: Vec<f64>,
    pub g2: [f64; NUM_PU],
}

impl From<&Frame> for FrameSummary {
    fn from(f: &Frame) -> Self {
        FrameSummary {
            index: f.index,
            hypothesis: f.hypothesis,
            h2: f
                .h
                .iter()
                .map(|r| [r[0].norm_sqr(), r[1].norm_sqr()])
                .collect(),
            beta2: f.beta.iter().map(|b| b.norm_sqr()).collect(),
            g2: [f.g[0].norm_sqr(), f.g[1].norm_sqr()],
        }
    }
}

/// Outcome of the sensing phase as far as transmission is concerned.
#[derive(Debug, Clone, Copy)]
enum Sensing<'a> {
    /// Estimate-based power control; `gains` holds, per transmitter,
    /// `[fc_1, fc_2, local_1, local_2]`.
    Sequential {
        decision: bool,
        gains: &'a [f64],
    },
    Opportunistic {
        decision: bool,
    },
    Underlay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub selected_su: usize,
    pub power: f64,
    /// `|h_i,Tx|² P` at each PU receiver.
    pub interference: [f64; NUM_PU],
    pub outage: [bool; NUM_PU],
    pub rate: f64,
}

fn transmit(
    scn: &Scenario,
    alpha: &AlphaTable,
    fs: &FrameSummary,
    params: &EvalParams,
    tau: u64,
    sensing: Sensing<'_>,
) -> Transmission {
    let (tx, power) = match sensing {
        Sensing::Sequential {
            decision: true,
            gains,
        } => {
            let j =
                select_tx(gains.chunks_exact(4).map(|c| [c[0], c[1]]), params.caps).unwrap_or(0);
            let local = [gains[4 * j + 2], gains[4 * j + 3]];
            let caps = [
                alpha.get(0, tau) * params.caps[0],
                alpha.get(1, tau) * params.caps[1],
            ];
            (2 * j, capped_power(local, caps, params.pmax))
        }
        Sensing::Sequential {
            decision: false, ..
        } => (
            round_robin(scn.num_su(), fs.index).unwrap_or(0),
            params.pmax,
        ),
        Sensing::Opportunistic { decision } => (
            round_robin(scn.num_su(), fs.index).unwrap_or(0),
            opportunistic_power(decision, params.pmax),
        ),
        Sensing::Underlay => {
            let j = select_tx(fs.h2.iter().step_by(2).copied(), params.caps).unwrap_or(0);
            (2 * j, capped_power(fs.h2[2 * j], params.caps, params.pmax))
        }
    };
    let active = fs.hypothesis.is_active();
    let rx = partner_of(tx);
    let rx_interference = if active {
        (fs.h2[rx][0] + fs.h2[rx][1]) * scn.cfg.pu_power
    } else {
        0.0
    };
    let rate = realized_rate(
        params.frame_len,
        tau as f64,
        fs.beta2[tx / 2],
        power,
        scn.cfg.su_noise_var,
        rx_interference,
        scn.cfg.log_base,
    );
    let interference = [fs.h2[tx][0] * power, fs.h2[tx][1] * power];
    let spec = scn.outage();
    let outage = [
        active && spec.in_outage(fs.g2[0], interference[0]),
        active && spec.in_outage(fs.g2[1], interference[1]),
    ];
    Transmission {
        selected_su: tx,
        power,
        interference,
        outage,
        rate,
    }
}

/// One simulated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub frame: u64,
    pub hypothesis: Hypothesis,
    pub channels: Vec<[Complex64; NUM_PU]>,
    pub tau: u64,
    pub decision: Option<bool>,
    /// FC estimates `[su][pu][component]` at τ (empty when unused).
    pub estimates: Vec<[[f64; NUM_COMPONENTS]; NUM_PU]>,
    pub selected_su: usize,
    pub power: f64,
    pub interference: [f64; NUM_PU],
    pub outage: [bool; NUM_PU],
    pub rate: f64,
    pub messages: u64,
}

/// Per-step driver for one reporting mode.
struct Link {
    agents: Vec<SuAgent>,
    fc: FcState,
    reports: Vec<Report>,
    flush_at: Option<u64>,
}

impl Link {
    fn new(scn: &Scenario, mode: ReportingMode) -> Result<Self> {
        let agents = (0..scn.num_su())
            .map(|k| SuAgent::new(k, &mode))
            .collect::<Result<_>>()?;
        let flush_at = matches!(mode, ReportingMode::Uniform { .. }).then_some(scn.cfg.tp);
        Ok(Link {
            agents,
            fc: FcState::new(scn.num_su(), mode),
            reports: Vec::with_capacity(8 * scn.num_su()),
            flush_at,
        })
    }

    fn step(&mut self, step: &PreambleStep, gamma: f64, tp: u64) -> Result<bool> {
        let t = step.t as u64;
        self.reports.clear();
        for (agent, obs) in self.agents.iter_mut().zip(&step.obs) {
            agent.step(obs, t, &mut self.reports);
            if self.flush_at == Some(t) {
                agent.flush(t, &mut self.reports);
            }
        }
        for r in &self.reports {
            self.fc.apply(r)?;
        }
        Ok(self.fc.advance(step.pilot_powers(), gamma, tp))
    }

    /// Appends `[fc_1, fc_2, local_1, local_2]` for every transmitter.
    fn push_gains(&self, priors: &[[ChannelPrior; NUM_PU]], out: &mut Vec<f64>) {
        for k in (0..self.agents.len()).step_by(2) {
            out.extend(self.fc.gains_of(k, &priors[k]));
            out.extend(self.agents[k].local_gains(&priors[k]));
        }
    }
}

fn is_report_time(t: u64, period: u64, tp: u64) -> bool {
    t.is_multiple_of(period) || t == tp
}

fn frame_rng(scn: &Scenario, purpose: Purpose, index: u64) -> RandomStream {
    stream(scn.cfg.seed, purpose, index)
}

/// Runs one frame of one scheme end to end on `rng` (channels first, then
/// the preamble).
pub fn run_frame(
    scn: &Scenario,
    art: &Artifacts,
    params: &EvalParams,
    op: &OperatingPoint,
    index: u64,
    hyp: Hypothesis,
    mut rng: RandomStream,
) -> Result<TrialRecord> {
    let frame = draw_frame(scn, index, hyp, &mut rng);
    let fs = FrameSummary::from(&frame);
    let tp = scn.cfg.tp;
    let mut gen = PreambleGenerator::new(&scn.constellation, &scn.priors, &frame.h, hyp, rng);
    let mut gains = Vec::new();
    let (tau, decision, estimates, messages, tx) = match *op {
        OperatingPoint::DsaSjde { gamma } => {
            let mut link = Link::new(scn, art.lt_mode(scn)?)?;
            while !link.step(gen.next_step(), gamma, tp)? {}
            let d = fc_decide(&link.fc, &scn.priors, &scn.cfg.costs)?.decision;
            link.push_gains(&scn.priors, &mut gains);
            let tau = link.fc.t();
            let tx = transmit(
                scn,
                &art.alpha,
                &fs,
                params,
                tau,
                Sensing::Sequential {
                    decision: d,
                    gains: &gains,
                },
            );
            (
                tau,
                Some(d),
                link.fc.estimates(&scn.priors),
                link.fc.messages(),
                tx,
            )
        }
        OperatingPoint::DsaSprt(cfg) => {
            let mut link = Link::new(scn, art.uniform_mode(scn)?)?;
            let period = scn.cfg.uniform_period;
            let d = loop {
                let done = link.step(gen.next_step(), f64::INFINITY, tp)?;
                let t = link.fc.t();
                if !is_report_time(t, period, tp) {
                    continue;
                }
                let l = link.fc.llr(&scn.priors);
                match sprt_step(l, &cfg) {
                    SprtOutcome::Decide1 => break true,
                    SprtOutcome::Decide0 => break false,
                    SprtOutcome::Continue if done => break l >= 0.0,
                    SprtOutcome::Continue => {}
                }
            };
            link.push_gains(&scn.priors, &mut gains);
            let tau = link.fc.t();
            let tx = transmit(
                scn,
                &art.alpha,
                &fs,
                params,
                tau,
                Sensing::Sequential {
                    decision: d,
                    gains: &gains,
                },
            );
            (
                tau,
                Some(d),
                link.fc.estimates(&scn.priors),
                link.fc.messages(),
                tx,
            )
        }
        OperatingPoint::Opportunistic { tau, theta } => {
            if tau == 0 || tau > tp || !is_report_time(tau, scn.cfg.uniform_period, tp) {
                return Err(Error::InvalidParameter(format!(
                    "opportunistic sensing time {tau} is not a report time within the preamble"
                )));
            }
            let mut link = Link::new(scn, art.uniform_mode(scn)?)?;
            while link.fc.t() < tau {
                link.step(gen.next_step(), f64::INFINITY, tp)?;
            }
            let d = link.fc.llr(&scn.priors) >= theta;
            let tx = transmit(
                scn,
                &art.alpha,
                &fs,
                params,
                tau,
                Sensing::Opportunistic { decision: d },
            );
            (tau, Some(d), Vec::new(), link.fc.messages(), tx)
        }
        OperatingPoint::Underlay => {
            let tx = transmit(scn, &art.alpha, &fs, params, 0, Sensing::Underlay);
            (0, None, Vec::new(), 0, tx)
        }
    };
    Ok(TrialRecord {
        scheme: op.scheme(),
        frame: index,
        hypothesis: hyp,
        channels: frame.h,
        tau,
        decision,
        estimates,
        selected_su: tx.selected_su,
        power: tx.power,
        interference: tx.interference,
        outage: tx.outage,
        rate: tx.rate,
        messages,
    })
}

/// One trial with the hypothesis drawn from π0.
pub fn run_trial(
    scn: &Scenario,
    art: &Artifacts,
    op: &OperatingPoint,
    seed: u64,
    index: u64,
) -> Result<TrialRecord> {
    let params = EvalParams::from_config(scn)?;
    let mut rng = stream(seed, Purpose::Trial, index);
    let hyp = if rng.random::<f64>() < scn.cfg.pi0 {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    };
    run_frame(scn, art, &params, op, index, hyp, rng)
}

/// Candidate operating points searched during tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub gammas: Vec<f64>,
    pub sprt: Vec<SprtConfig>,
    pub opp_taus: Vec<u64>,
    pub opp_thetas: Vec<f64>,
}

/// `n` log-spaced points from `a` to `b`.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let r = (b / a).ln() / (n - 1) as f64;
    (0..n).map(|j| a * (r * j as f64).exp()).collect()
}

impl CandidateGrid {
    /// Default search grid; the γ range ends at the 1st percentile of the
    /// preamble's total pilot energy.
    pub fn for_scenario(scn: &Scenario) -> Result<Self> {
        let gamma1 = pilot_energy_percentile(scn, 1.0, 2000)?;
        let gammas = geomspace(1.0, gamma1.max(1.0), 32);
        let lowers = geomspace(0.5, 500.0, 10);
        let uppers = geomspace(0.5, 2e4, 14);
        let sprt = lowers
            .iter()
            .flat_map(|a| {
                uppers.iter().map(move |b| SprtConfig {
                    lower: -a,
                    upper: *b,
                })
            })
            .collect();
        let tp = scn.cfg.tp;
        let period = scn.cfg.uniform_period;
        let opp_taus: Vec<u64> = [
            4u64, 8, 12, 16, 20, 28, 36, 48, 64, 80, 100, 128, 160, 200, 256, 320, 400, 500, 640,
            800, 1000, 1280, 1600, 2000,
        ]
        .into_iter()
        .filter(|&t| t <= tp && is_report_time(t, period, tp))
        .collect();
        let mut opp_thetas: Vec<f64> = (-8..=8).map(f64::from).collect();
        for v in [12.0, 16.0, 24.0, 32.0, 48.0, 64.0] {
            opp_thetas.push(v);
            opp_thetas.push(-v);
        }
        opp_thetas.sort_by(f64::total_cmp);
        Ok(CandidateGrid {
            gammas,
            sprt,
            opp_taus,
            opp_thetas,
        })
    }
}

/// Percentile of `Σ_i U_i` at `t = Tp`.
pub fn pilot_energy_percentile(scn: &Scenario, pct: f64, frames: usize) -> Result<f64> {
    let mut totals: Vec<f64> = (0..frames as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(scn.cfg.seed, Purpose::Percentile, j);
            (0..scn.cfg.tp * NUM_PU as u64)
                .map(|_| gen_pilot(&scn.constellation, &mut rng).power)
                .sum()
        })
        .collect();
    percentile(&mut totals, pct).ok_or(Error::Empty("pilot energy frames"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Snapshot {
    tau: u64,
    decision: bool,
    messages: u64,
}

/// Cached per-candidate sensing outcomes of one frame.
#[derive(Debug, Clone)]
pub struct FrameCache {
    summary: FrameSummary,
    sjde: Vec<Snapshot>,
    sprt: Vec<Snapshot>,
    /// Per snapshot (SJDE first, then SPRT), `4 × num_tx` gains.
    gains: Vec<f64>,
    /// `(L̃, messages)` at each opportunistic sensing time.
    opp: Vec<(f64, u64)>,
}

fn simulate_cached(
    scn: &Scenario,
    art: &Artifacts,
    grid: &CandidateGrid,
    purpose: Purpose,
    index: u64,
) -> Result<FrameCache> {
    let hyp = stratified_hypothesis(index);
    let mut rng = frame_rng(scn, purpose, index);
    let frame = draw_frame(scn, index, hyp, &mut rng);
    let tp = scn.cfg.tp;
    let period = scn.cfg.uniform_period;
    let stride = 4 * scn.num_tx();
    let mut gen = PreambleGenerator::new(&scn.constellation, &scn.priors, &frame.h, hyp, rng);
    let mut lt = Link::new(scn, art.lt_mode(scn)?)?;
    let mut uni = Link::new(scn, art.uniform_mode(scn)?)?;

    let mut sjde = Vec::with_capacity(grid.gammas.len());
    let mut sjde_gains = Vec::with_capacity(grid.gammas.len() * stride);
    let mut sprt: Vec<Option<Snapshot>> = vec![None; grid.sprt.len()];
    let mut sprt_gains = vec![0.0; grid.sprt.len() * stride];
    let mut open: Vec<usize> = (0..grid.sprt.len()).collect();
    let mut opp = Vec::with_capacity(grid.opp_taus.len());
    let mut scratch = Vec::with_capacity(stride);

    loop {
        let step = gen.next_step();
        let t = step.t as u64;
        let lt_done = sjde.len() == grid.gammas.len();
        if !lt_done {
            lt.step(step, f64::INFINITY, tp)?;
            while sjde.len() < grid.gammas.len()
                && (grid.gammas[sjde.len()] <= lt.fc.fisher_total() || t == tp)
            {
                let d = fc_decide(&lt.fc, &scn.priors, &scn.cfg.costs)?.decision;
                sjde.push(Snapshot {
                    tau: t,
                    decision: d,
                    messages: lt.fc.messages(),
                });
                lt.push_gains(&scn.priors, &mut sjde_gains);
            }
        }
        let uni_needed = !open.is_empty() || opp.len() < grid.opp_taus.len();
        if uni_needed {
            uni.step(step, f64::INFINITY, tp)?;
            if is_report_time(t, period, tp) {
                let l = uni.fc.llr(&scn.priors);
                if opp.len() < grid.opp_taus.len() && grid.opp_taus[opp.len()] == t {
                    opp.push((l, uni.fc.messages()));
                }
                let mut have_gains = false;
                open.retain(|&c| {
                    let d = match sprt_step(l, &grid.sprt[c]) {
                        SprtOutcome::Decide1 => true,
                        SprtOutcome::Decide0 => false,
                        SprtOutcome::Continue if t == tp => l >= 0.0,
                        SprtOutcome::Continue => return true,
                    };
                    if !have_gains {
                        scratch.clear();
                        uni.push_gains(&scn.priors, &mut scratch);
                        have_gains = true;
                    }
                    sprt[c] = Some(Snapshot {
                        tau: t,
                        decision: d,
                        messages: uni.fc.messages(),
                    });
                    sprt_gains[c * stride..(c + 1) * stride].copy_from_slice(&scratch);
                    false
                });
            }
        }
        let finished =
            sjde.len() == grid.gammas.len() && open.is_empty() && opp.len() == grid.opp_taus.len();
        if finished || t >= tp {
            break;
        }
    }
    sjde_gains.extend(sprt_gains);
    Ok(FrameCache {
        summary: FrameSummary::from(&frame),
        sjde,
        sprt: sprt
            .into_iter()
            .map(|s| {
                s.ok_or(Error::InvalidParameter(
                    "SPRT candidate did not resolve".into(),
                ))
            })
            .collect::<Result<_>>()?,
        gains: sjde_gains,
        opp,
    })
}

/// Running sums of per-frame outcomes split by hypothesis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    n: [f64; 2],
    rate: [f64; 2],
    rate_sq: [f64; 2],
    decide1: [f64; 2],
    tau: [f64; 2],
    msg_rate: [f64; 2],
    outage: f64,
    exceed: [f64; NUM_PU],
    exceed_n: f64,
}

impl Tally {
    fn add(
        &mut self,
        hyp: Hypothesis,
        tau: u64,
        decision: Option<bool>,
        messages: u64,
        tx: &Transmission,
        caps: [f64; NUM_PU],
    ) {
        let h = hyp.is_active() as usize;
        self.n[h] += 1.0;
        self.rate[h] += tx.rate;
        self.rate_sq[h] += tx.rate * tx.rate;
        self.decide1[h] += decision.unwrap_or(false) as u8 as f64;
        self.tau[h] += tau as f64;
        if tau > 0 {
            self.msg_rate[h] += messages as f64 / tau as f64;
        }
        if hyp.is_active() {
            self.outage += (tx.outage[0] as u8 + tx.outage[1] as u8) as f64 / NUM_PU as f64;
            if decision == Some(true) {
                self.exceed_n += 1.0;
                for i in 0..NUM_PU {
                    self.exceed[i] += (tx.interference[i] > caps[i]) as u8 as f64;
                }
            }
        }
    }

    fn stats(&self, pi0: f64) -> OperatingStats {
        let w = [pi0, 1.0 - pi0];
        let mean = |a: [f64; 2], h: usize| {
            if self.n[h] > 0.0 {
                a[h] / self.n[h]
            } else {
                0.0
            }
        };
        let var = |h: usize| {
            if self.n[h] > 1.0 {
                let m = self.rate[h] / self.n[h];
                ((self.rate_sq[h] - self.n[h] * m * m) / (self.n[h] - 1.0)).max(0.0)
            } else {
                0.0
            }
        };
        let se2: f64 = (0..2)
            .filter(|&h| self.n[h] > 0.0)
            .map(|h| w[h] * w[h] * var(h) / self.n[h])
            .sum();
        OperatingStats {
            r_bar: w[0] * mean(self.rate, 0) + w[1] * mean(self.rate, 1),
            r_bar_se: se2.sqrt(),
            pf: mean(self.decide1, 0),
            pm: 1.0 - mean(self.decide1, 1),
            etau: w[0] * mean(self.tau, 0) + w[1] * mean(self.tau, 1),
        }
    }
}

/// Result of one scheme at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub op: OperatingPoint,
    /// Held-out performance.
    pub stats: OperatingStats,
    pub msg_rate: f64,
    /// Mean per-PU outage frequency over active frames.
    pub outage_rate: f64,
    /// Per-PU fraction of `|h|²P > I` among active frames declared busy.
    pub exceedance: [f64; NUM_PU],
    /// Tuning-set performance of the chosen point.
    pub tuning: OperatingStats,
    /// Smallest feasible γ (DSA-SJDE only).
    pub gamma0: Option<f64>,
}

/// Simulated frames for tuning and evaluation.
pub struct SweepBank {
    pub scn: Scenario,
    pub art: Artifacts,
    pub grid: CandidateGrid,
    tuning: Vec<FrameCache>,
    evaluation: Vec<FrameCache>,
}

impl SweepBank {
    pub fn build(scn: Scenario, art: Artifacts, grid: CandidateGrid) -> Result<Self> {
        let sim = |purpose, n: usize| -> Result<Vec<FrameCache>> {
            (0..n as u64)
                .into_par_iter()
                .map(|j| simulate_cached(&scn, &art, &grid, purpose, j))
                .collect()
        };
        let tuning = sim(Purpose::Tuning, scn.cfg.tuning_trials)?;
        let evaluation = sim(Purpose::Evaluation, scn.cfg.trials)?;
        Ok(SweepBank {
            scn,
            art,
            grid,
            tuning,
            evaluation,
        })
    }

    pub fn evaluation_frames(&self) -> usize {
        self.evaluation.len()
    }

    fn stride(&self) -> usize {
        4 * self.scn.num_tx()
    }

    fn outcome(
        &self,
        fc: &FrameCache,
        params: &EvalParams,
        cand: Candidate,
    ) -> (u64, Option<bool>, u64, Transmission) {
        let s = self.stride();
        let scn = &self.scn;
        let alpha = &self.art.alpha;
        match cand {
            Candidate::Sjde(j) | Candidate::Sprt(j) => {
                let (snap, offset) = match cand {
                    Candidate::Sjde(_) => (fc.sjde[j], j),
                    _ => (fc.sprt[j], fc.sjde.len() + j),
                };
                let gains = &fc.gains[offset * s..(offset + 1) * s];
                let sensing = Sensing::Sequential {
                    decision: snap.decision,
                    gains,
                };
                let tx = transmit(scn, alpha, &fc.summary, params, snap.tau, sensing);
                (snap.tau, Some(snap.decision), snap.messages, tx)
            }
            Candidate::Opp(ti, theta) => {
                let tau = self.grid.opp_taus[ti];
                let (l, messages) = fc.opp[ti];
                let d = l >= theta;
                let tx = transmit(
                    scn,
                    alpha,
                    &fc.summary,
                    params,
                    tau,
                    Sensing::Opportunistic { decision: d },
                );
                (tau, Some(d), messages, tx)
            }
            Candidate::Underlay => (
                0,
                None,
                0,
                transmit(scn, alpha, &fc.summary, params, 0, Sensing::Underlay),
            ),
        }
    }

    fn tally(&self, frames: &[FrameCache], params: &EvalParams, cand: Candidate) -> Tally {
        let mut t = Tally::default();
        for fc in frames {
            let (tau, d, m, tx) = self.outcome(fc, params, cand);
            t.add(fc.summary.hypothesis, tau, d, m, &tx, params.caps);
        }
        t
    }

    fn candidates(&self, scheme: Scheme) -> Vec<Candidate> {
        match scheme {
            Scheme::DsaSjde => (0..self.grid.gammas.len()).map(Candidate::Sjde).collect(),
            Scheme::DsaSprt => (0..self.grid.sprt.len()).map(Candidate::Sprt).collect(),
            Scheme::Opportunistic => (0..self.grid.opp_taus.len())
                .flat_map(|ti| {
                    self.grid
                        .opp_thetas
                        .iter()
                        .map(move |&th| Candidate::Opp(ti, th))
                })
                .collect(),
            Scheme::Underlay => vec![Candidate::Underlay],
        }
    }

    fn op_of(&self, cand: Candidate) -> OperatingPoint {
        match cand {
            Candidate::Sjde(j) => OperatingPoint::DsaSjde {
                gamma: self.grid.gammas[j],
            },
            Candidate::Sprt(j) => OperatingPoint::DsaSprt(self.grid.sprt[j]),
            Candidate::Opp(ti, theta) => OperatingPoint::Opportunistic {
                tau: self.grid.opp_taus[ti],
                theta,
            },
            Candidate::Underlay => OperatingPoint::Underlay,
        }
    }

    /// Tunes `scheme` on the tuning frames and evaluates it on held-out frames.
    pub fn evaluate(&self, scheme: Scheme, params: &EvalParams) -> Result<SchemeResult> {
        let cands = self.candidates(scheme);
        let tuning: Vec<OperatingStats> = cands
            .par_iter()
            .map(|&c| self.tally(&self.tuning, params, c).stats(params.pi0))
            .collect();
        let best = if scheme == Scheme::Underlay {
            0
        } else {
            best_feasible(&tuning, params.pm_limit).ok_or_else(|| {
                Error::NoFeasiblePoint(format!(
                    "{scheme}: no candidate with P_m < {}",
                    params.pm_limit
                ))
            })?
        };
        let gamma0 = (scheme == Scheme::DsaSjde).then(|| {
            cands
                .iter()
                .zip(&tuning)
                .filter(|(_, s)| s.pm < params.pm_limit)
                .map(|(c, _)| match c {
                    Candidate::Sjde(j) => self.grid.gammas[*j],
                    _ => f64::INFINITY,
                })
                .fold(f64::INFINITY, f64::min)
        });
        let tally = self.tally(&self.evaluation, params, cands[best]);
        let mut stats = tally.stats(params.pi0);
        if scheme == Scheme::Underlay {
            stats.pf = f64::NAN;
            stats.pm = f64::NAN;
        }
        let w = [params.pi0, 1.0 - params.pi0];
        let mean = |a: f64, h: usize| {
            if tally.n[h] > 0.0 {
                a / tally.n[h]
            } else {
                0.0
            }
        };
        let mut exceedance = [0.0; NUM_PU];
        for i in 0..NUM_PU {
            exceedance[i] = tally.exceed[i] / tally.exceed_n.max(1.0);
        }
        Ok(SchemeResult {
            scheme,
            op: self.op_of(cands[best]),
            stats,
            msg_rate: w[0] * mean(tally.msg_rate[0], 0) + w[1] * mean(tally.msg_rate[1], 1),
            outage_rate: mean(tally.outage, 1),
            exceedance,
            tuning: tuning[best],
            gamma0,
        })
    }

    /// Records for evaluation frame `j` under operating point `op`,
    /// rebuilt from the cache.
    pub fn cached_record(
        &self,
        j: usize,
        params: &EvalParams,
        op: &OperatingPoint,
    ) -> Result<CachedOutcome> {
        let cand = match *op {
            OperatingPoint::DsaSjde { gamma } => self
                .grid
                .gammas
                .iter()
                .position(|&g| g == gamma)
                .map(Candidate::Sjde),
            OperatingPoint::DsaSprt(c) => self
                .grid
                .sprt
                .iter()
                .position(|&s| s == c)
                .map(Candidate::Sprt),
            OperatingPoint::Opportunistic { tau, theta } => self
                .grid
                .opp_taus
                .iter()
                .position(|&t| t == tau)
                .map(|ti| Candidate::Opp(ti, theta)),
            OperatingPoint::Underlay => Some(Candidate::Underlay),
        }
        .ok_or_else(|| {
            Error::InvalidParameter("operating point is not on the candidate grid".into())
        })?;
        let fc = self
            .evaluation
            .get(j)
            .ok_or(Error::Empty("evaluation frame"))?;
        let (tau, decision, messages, tx) = self.outcome(fc, params, cand);
        Ok(CachedOutcome {
            tau,
            decision,
            messages,
            transmission: tx,
        })
    }

    /// The generator stream used for evaluation frame `j`.
    pub fn evaluation_stream(&self, j: u64) -> (Hypothesis, RandomStream) {
        (
            stratified_hypothesis(j),
            frame_rng(&self.scn, Purpose::Evaluation, j),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Candidate {
    Sjde(usize),
    Sprt(usize),
    Opp(usize, f64),
    Underlay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedOutcome {
    pub tau: u64,
    pub decision: Option<bool>,
    pub messages: u64,
    pub transmission: Transmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    POut,
    PmaxDb,
    Pi0,
    FrameRatio,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::POut => "p_out",
            SweepAxis::PmaxDb => "pmax_db",
            SweepAxis::Pi0 => "pi0",
            SweepAxis::FrameRatio => "frame_ratio",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::POut => vec![0.025, 0.05, 0.075, 0.1, 0.125],
            SweepAxis::PmaxDb => vec![9.0, 12.0, 15.0, 18.0, 21.0],
            SweepAxis::Pi0 => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            SweepAxis::FrameRatio => vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        }
    }

    /// Config with the axis set to `v`.
    pub fn apply(self, cfg: &ScenarioConfig, v: f64) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::POut => c.p_out = v,
            SweepAxis::PmaxDb => c.pmax_db = v,
            SweepAxis::Pi0 => c.pi0 = v,
            SweepAxis::FrameRatio => c.frame_ratio = v,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::POut,
            SweepAxis::PmaxDb,
            SweepAxis::Pi0,
            SweepAxis::FrameRatio,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown axis {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub result: SchemeResult,
}

impl SweepBank {
    pub fn sweep(&self, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
        if spec.values.is_empty() || spec.schemes.is_empty() {
            return Err(Error::Empty("sweep grid"));
        }
        let mut rows = Vec::new();
        for &v in &spec.values {
            let scn = Scenario::new(spec.axis.apply(&self.scn.cfg, v))?;
            let params = EvalParams::from_config(&scn)?;
            for &s in &spec.schemes {
                rows.push(SweepRow {
                    axis_value: v,
                    result: self.evaluate(s, &params)?,
                });
            }
        }
        Ok(rows)
    }
}

/// Full sweep: calibration, frame bank, then per-point tuning and evaluation.
pub fn run_sweep(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let scn = Scenario::new(cfg.clone())?;
    let art = compute_artifacts(&scn)?;
    let grid = CandidateGrid::for_scenario(&scn)?;
    SweepBank::build(scn, art, grid)?.sweep(spec)
}

pub const SWEEP_HEADER: [&str; 9] = [
    "axis_value",
    "scheme",
    "R_bar",
    "R_bar_se",
    "Pf",
    "Pm",
    "Etau",
    "msg_rate",
    "outage_rate",
];

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let s = &r.result;
        w.write_record([
            r.axis_value.to_string(),
            s.scheme.to_string(),
            s.stats.r_bar.to_string(),
            s.stats.r_bar_se.to_string(),
            s.stats.pf.to_string(),
            s.stats.pm.to_string(),
            s.stats.etau.to_string(),
            s.msg_rate.to_string(),
            s.outage_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct SweepCsvRow {
    pub axis_value: f64,
    pub scheme: String,
    #[serde(rename = "R_bar")]
    pub r_bar: f64,
    #[serde(rename = "R_bar_se")]
    pub r_bar_se: f64,
    #[serde(rename = "Pf")]
    pub pf: f64,
    #[serde(rename = "Pm")]
    pub pm: f64,
    #[serde(rename = "Etau")]
    pub etau: f64,
    pub msg_rate: f64,
    pub outage_rate: f64,
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepCsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Calibration plus tuning at the configured operating point.
pub fn calibrate(scn: &Scenario) -> Result<(Calibration, Vec<SchemeResult>)> {
    let art = compute_artifacts(scn)?;
    let grid = CandidateGrid::for_scenario(scn)?;
    let params = EvalParams::from_config(scn)?;
    let bank = SweepBank::build(scn.clone(), art.clone(), grid)?;
    let results: Vec<SchemeResult> = Scheme::ALL
        .iter()
        .map(|&s| bank.evaluate(s, &params))
        .collect::<Result<_>>()?;
    let mut cal = Calibration {
        scenario_hash: scn.cfg.scenario_hash()?,
        phi: art.phi,
        phi_uniform: art.phi_uniform,
        delta: art.delta,
        interference_cap: params.caps[0],
        alpha: art.alpha,
        gamma: None,
        sprt: None,
        opportunistic: None,
    };
    for r in &results {
        match r.op {
            OperatingPoint::DsaSjde { gamma } => cal.gamma = Some(gamma),
            OperatingPoint::DsaSprt(c) => cal.sprt = Some(c),
            OperatingPoint::Opportunistic { tau, theta } => cal.opportunistic = Some((tau, theta)),
            OperatingPoint::Underlay => {}
        }
    }
    Ok((cal, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            tp: 200,
            trials: 200,
            tuning_trials: 200,
            alpha_trials: 500,
            calibration_frames: 200,
            calibration_horizon: 100,
            ..Default::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("nope".parse::<Scheme>().is_err());
        assert_eq!("pi0".parse::<SweepAxis>().unwrap(), SweepAxis::Pi0);
    }

    #[test]
    fn geomspace_endpoints() {
        let g = geomspace(1.0, 100.0, 3);
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert!((g[2] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn trial_determinism_and_degenerate_prior() {
        let cfg = ScenarioConfig {
            pi0: 1.0,
            ..small_cfg()
        };
        let scn = Scenario::new(cfg).unwrap();
        let art = compute_artifacts(&scn).unwrap();
        let op = OperatingPoint::DsaSjde { gamma: 30.0 };
        for j in 0..20 {
            let a = run_trial(&scn, &art, &op, 5, j).unwrap();
            let b = run_trial(&scn, &art, &op, 5, j).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.hypothesis, Hypothesis::H0);
            assert!(a.tau <= scn.cfg.tp);
            assert!(a.power <= scn.cfg.pmax());
        }
        let u = run_trial(&scn, &art, &OperatingPoint::Underlay, 5, 0).unwrap();
        assert_eq!(u.tau, 0);
        assert_eq!(u.decision, None);
    }

    #[test]
    fn truncation_at_preamble_end() {
        let scn = Scenario::new(small_cfg()).unwrap();
        let art = compute_artifacts(&scn).unwrap();
        let r = run_trial(&scn, &art, &OperatingPoint::DsaSjde { gamma: 1e12 }, 1, 0).unwrap();
        assert_eq!(r.tau, scn.cfg.tp);
    }

    #[test]
    fn csv_round_trip() {
        let scn = Scenario::new(small_cfg()).unwrap();
        let art = compute_artifacts(&scn).unwrap();
        let grid = CandidateGrid::for_scenario(&scn).unwrap();
        let bank = SweepBank::build(scn, art, grid).unwrap();
        let rows = bank
            .sweep(&SweepSpec {
                axis: SweepAxis::Pi0,
                values: vec![0.0, 1.0],
                schemes: Scheme::ALL.to_vec(),
            })
            .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let back = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.result.scheme.name(), b.scheme);
            assert_eq!(a.result.stats.r_bar, b.r_bar);
            assert_eq!(a.result.stats.pm.is_nan(), b.pm.is_nan());
        }
    }
}
