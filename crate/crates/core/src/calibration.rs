//! Outage-driven interference caps, α factors, throughput and offline tuning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::SprtConfig;
use crate::channel::{
    sample_channel, ChannelPrior, Constellation, Hypothesis, PreambleGenerator, NUM_COMPONENTS,
    NUM_PU,
};
use crate::config::LogBase;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::sjde::{mmse_estimate, SjdeState};
use crate::stats::percentile;

/// PU outage constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageSpec {
    pub p_out: f64,
    /// R2, bits/s/Hz.
    pub pu_rate: f64,
    /// Q, PU transmit power.
    pub pu_power: f64,
    /// η, PU receiver noise variance.
    pub eta: f64,
    pub g_prior: ChannelPrior,
    pub safety_margin: f64,
}

impl OutageSpec {
    pub fn target(&self) -> f64 {
        (1.0 - self.safety_margin) * self.p_out
    }

    /// `2^R2 − 1`.
    pub fn snr_threshold(&self) -> f64 {
        self.pu_rate.exp2() - 1.0
    }

    /// Largest `|g|²` that still causes outage at interference `i`.
    pub fn gain_threshold(&self, i: f64) -> f64 {
        self.snr_threshold() * (self.eta + i) / self.pu_power
    }

    /// P(outage) at interference level `i`.
    pub fn outage_probability(&self, i: f64) -> f64 {
        gain_cdf(&self.g_prior, self.gain_threshold(i))
    }

    /// Whether a realized PU link is in outage.
    pub fn in_outage(&self, g2: f64, interference: f64) -> bool {
        g2 < self.gain_threshold(interference)
    }
}

/// CDF of `|g|²` for a complex Gaussian `g`.
pub fn gain_cdf(prior: &ChannelPrior, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let v = prior.variance_re;
    if prior.is_rayleigh() {
        return -(-x / (2.0 * v)).exp_m1();
    }
    let lambda = 2.0 * prior.mean_re * prior.mean_re / v;
    ncx2_cdf_2dof(x / v, lambda)
}

/// Noncentral chi-square CDF with two degrees of freedom (Poisson mixture).
pub fn ncx2_cdf_2dof(z: f64, lambda: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let half_l = 0.5 * lambda;
    let x = 0.5 * z;
    // Regularized lower gamma P(m, x) for m = 1, 2, ...
    let mut p_gamma = -(-x).exp_m1();
    let mut gamma_term = (-x).exp();
    let mut weight = (-half_l).exp();
    let mut total = 0.0;
    let j_max = (half_l + 12.0 * half_l.sqrt() + 60.0) as usize;
    for j in 0..=j_max {
        total += weight * p_gamma.max(0.0);
        let m = (j + 1) as f64;
        gamma_term *= x / m;
        p_gamma -= gamma_term;
        weight *= half_l / m;
    }
    total.clamp(0.0, 1.0)
}

/// Largest interference level meeting the margined outage target.
pub fn interference_from_outage(spec: &OutageSpec) -> Result<f64> {
    let target = spec.target();
    let at_zero = spec.outage_probability(0.0);
    if at_zero > target {
        return Err(Error::InfeasibleOutage { at_zero, target });
    }
    if spec.g_prior.is_rayleigh() {
        let mean_gain = spec.g_prior.sigma2();
        let x = -mean_gain * (-target).ln_1p();
        return Ok((x * spec.pu_power / spec.snr_threshold() - spec.eta).max(0.0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while spec.outage_probability(hi) <= target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidParameter(
                "outage CDF never reaches target".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.outage_probability(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Calibration factors `α_i^τ` on a τ grid, interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTable {
    grid: Vec<u64>,
    values: Vec<[f64; NUM_PU]>,
}

impl AlphaTable {
    pub fn new(grid: Vec<u64>, values: Vec<[f64; NUM_PU]>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidParameter(
                "alpha grid and values must match".into(),
            ));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
            return Err(Error::InvalidParameter(
                "alpha grid must be strictly increasing from 1".into(),
            ));
        }
        if values.iter().flatten().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidParameter(
                "alpha values must lie in (0, 1]".into(),
            ));
        }
        Ok(AlphaTable { grid, values })
    }

    /// A table of ones (no calibration).
    pub fn unity() -> Self {
        AlphaTable {
            grid: vec![1],
            values: vec![[1.0; NUM_PU]],
        }
    }

    pub fn grid(&self) -> &[u64] {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; NUM_PU]] {
        &self.values
    }

    pub fn get(&self, i: usize, tau: u64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= tau);
        if k == 0 {
            return self.values[0][i];
        }
        if k == self.grid.len() {
            return self.values[k - 1][i];
        }
        let (t0, t1) = (self.grid[k - 1] as f64, self.grid[k] as f64);
        let (a0, a1) = (self.values[k - 1][i], self.values[k][i]);
        a0 + (a1 - a0) * (tau as f64 - t0) / (t1 - t0)
    }
}

/// `1..=10`, every 5 to 50, then every 50 up to `tp` (and `tp` itself).
pub fn alpha_grid(tp: u64) -> Vec<u64> {
    let mut g: Vec<u64> = (1..=10)
        .chain((15..=50).step_by(5))
        .chain((100..=tp).step_by(50))
        .collect();
    g.retain(|&t| t <= tp);
    if g.last() != Some(&tp) {
        g.push(tp);
    }
    g
}

/// `|ĥ_i[τ]|² / |h_i|²` of one SU under H1 at each grid τ.
fn estimate_ratios(
    constellation: &Constellation,
    prior: &[ChannelPrior; NUM_PU],
    grid: &[u64],
    seed: u64,
    purpose: Purpose,
    index: u64,
) -> Vec<[f64; NUM_PU]> {
    let mut rng = stream(seed, purpose, index);
    let h = [
        sample_channel(&prior[0], &mut rng),
        sample_channel(&prior[1], &mut rng),
    ];
    let priors = [*prior];
    let channels = [h];
    let mut gen = PreambleGenerator::new(constellation, &priors, &channels, Hypothesis::H1, rng);
    let mut state = SjdeState::new();
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() {
        state.push_step(&gen.next_step().obs[0]);
        if state.t() == grid[next] {
            let mut r = [f64::NAN; NUM_PU];
            for i in 0..NUM_PU {
                let truth = h[i].norm_sqr();
                if truth > 1e-12 {
                    let est: f64 = (0..NUM_COMPONENTS)
                        .map(|n| mmse_estimate(&state, &prior[i], i, n).powi(2))
                        .sum();
                    r[i] = est / truth;
                }
            }
            out.push(r);
            next += 1;
        }
    }
    out
}

fn ratio_samples(
    constellation: &Constellation,
    tx_priors: &[[ChannelPrior; NUM_PU]],
    grid: &[u64],
    trials: usize,
    seed: u64,
    purpose: Purpose,
) -> Vec<Vec<[f64; NUM_PU]>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|j| {
            let prior = &tx_priors[j as usize % tx_priors.len()];
            estimate_ratios(constellation, prior, grid, seed, purpose, j)
        })
        .collect()
}

/// Per-(PU, τ) percentile of `|ĥ|²/|h|²` under H1, clamped to (0, 1].
pub fn alpha_percentile(
    constellation: &Constellation,
    tx_priors: &[[ChannelPrior; NUM_PU]],
    grid: &[u64],
    trials: usize,
    pct: f64,
    seed: u64,
) -> Result<AlphaTable> {
    if tx_priors.is_empty() {
        return Err(Error::NoTransmitter);
    }
    if trials == 0 {
        return Err(Error::Empty("alpha trials"));
    }
    let samples = ratio_samples(constellation, tx_priors, grid, trials, seed, Purpose::Alpha);
    let mut values = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(trials);
    for g in 0..grid.len() {
        let mut row = [1.0; NUM_PU];
        for (i, slot) in row.iter_mut().enumerate() {
            column.clear();
            column.extend(samples.iter().map(|s| s[g][i]).filter(|r| r.is_finite()));
            let p = percentile(&mut column, pct).ok_or(Error::Empty("alpha ratios"))?;
            *slot = p.clamp(f64::MIN_POSITIVE, 1.0);
        }
        values.push(row);
    }
    AlphaTable::new(grid.to_vec(), values)
}

/// Fraction of fresh H1 trials with `|ĥ|²/|h|² < α` at each grid τ.
pub fn alpha_shortfall(
    table: &AlphaTable,
    constellation: &Constellation,
    tx_priors: &[[ChannelPrior; NUM_PU]],
    trials: usize,
    seed: u64,
) -> Vec<[f64; NUM_PU]> {
    let grid = table.grid();
    let samples = ratio_samples(
        constellation,
        tx_priors,
        grid,
        trials,
        seed,
        Purpose::Verification,
    );
    (0..grid.len())
        .map(|g| {
            let mut row = [0.0; NUM_PU];
            for (i, slot) in row.iter_mut().enumerate() {
                let valid: Vec<f64> = samples
                    .iter()
                    .map(|s| s[g][i])
                    .filter(|r| r.is_finite())
                    .collect();
                let below = valid.iter().filter(|&&r| r < table.values()[g][i]).count();
                *slot = below as f64 / valid.len().max(1) as f64;
            }
            row
        })
        .collect()
}

/// Realized SU rate over one frame.
pub fn realized_rate(
    frame_len: f64,
    tau: f64,
    beta2: f64,
    power: f64,
    noise_var: f64,
    rx_interference: f64,
    base: LogBase,
) -> f64 {
    let share = ((frame_len - tau) / frame_len).max(0.0);
    share * base.log1p(beta2 * power / (noise_var + rx_interference))
}

/// Inputs of the closed-form average throughput.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputTerms {
    pub tau: f64,
    pub pf: f64,
    pub pm: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub pi0: f64,
    pub frame_len: f64,
    pub tp: f64,
}

impl ThroughputTerms {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.pf) && prob(self.pm) && prob(self.pi0)) {
            return Err(Error::InvalidParameter(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.gamma0 >= self.gamma1 && self.gamma1 >= 0.0) {
            return Err(Error::InvalidParameter("need gamma0 >= gamma1 >= 0".into()));
        }
        if !(self.tau >= 0.0 && self.tau <= self.tp && self.tp <= self.frame_len) {
            return Err(Error::InvalidParameter("need 0 <= tau <= Tp <= T".into()));
        }
        Ok(())
    }

    pub fn average(&self) -> f64 {
        let (p0, p1) = (self.pi0, 1.0 - self.pi0);
        let w0 = p0 * (1.0 - self.pf) + p1 * self.pm;
        let w1 = p0 * self.pf + p1 * (1.0 - self.pm);
        (self.frame_len - self.tau) / self.frame_len * (w0 * self.gamma0 + w1 * self.gamma1)
    }
}

/// Plain Monte Carlo mean of realized rates.
pub fn avg_throughput(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::Empty("throughput records"));
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Aggregate performance of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatingStats {
    pub r_bar: f64,
    pub r_bar_se: f64,
    pub pf: f64,
    pub pm: f64,
    pub etau: f64,
}

/// Index of the highest-throughput candidate with `P_m < pm_limit`.
pub fn best_feasible(stats: &[OperatingStats], pm_limit: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, s) in stats.iter().enumerate() {
        if s.pm < pm_limit && best.is_none_or(|b| s.r_bar > stats[b].r_bar) {
            best = Some(j);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedGamma {
    pub gamma: f64,
    /// Smallest feasible candidate.
    pub gamma0: f64,
    pub stats: OperatingStats,
}

/// Grid search over γ under the misdetection constraint.
pub fn tune_gamma(gammas: &[f64], stats: &[OperatingStats], pm_limit: f64) -> Result<TunedGamma> {
    if gammas.is_empty() || gammas.len() != stats.len() {
        return Err(Error::InvalidParameter(
            "gamma grid and stats must match".into(),
        ));
    }
    let best = best_feasible(stats, pm_limit)
        .ok_or_else(|| Error::NoFeasiblePoint(format!("no gamma with P_m < {pm_limit}")))?;
    let gamma0 = gammas
        .iter()
        .zip(stats)
        .filter(|(_, s)| s.pm < pm_limit)
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    Ok(TunedGamma {
        gamma: gammas[best],
        gamma0,
        stats: stats[best],
    })
}

/// Persisted calibration artifacts and tuned operating points.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub scenario_hash: String,
    pub phi: f64,
    pub phi_uniform: f64,
    pub delta: f64,
    pub interference_cap: f64,
    pub alpha: AlphaTable,
    pub gamma: Option<f64>,
    pub sprt: Option<SprtConfig>,
    pub opportunistic: Option<(u64, f64)>,
}

const HEADER: &str = "# sjde calibration v1";

impl Calibration {
    /// Plain `key = value` lines; α rows are `alpha.<tau> = a1 a2`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "scenario_hash = {}", self.scenario_hash);
        let _ = writeln!(s, "phi = {:?}", self.phi);
        let _ = writeln!(s, "phi_uniform = {:?}", self.phi_uniform);
        let _ = writeln!(s, "delta = {:?}", self.delta);
        let _ = writeln!(s, "interference_cap = {:?}", self.interference_cap);
        if let Some(g) = self.gamma {
            let _ = writeln!(s, "gamma = {g:?}");
        }
        if let Some(c) = self.sprt {
            let _ = writeln!(s, "sprt_lower = {:?}", c.lower);
            let _ = writeln!(s, "sprt_upper = {:?}", c.upper);
        }
        if let Some((tau, theta)) = self.opportunistic {
            let _ = writeln!(s, "opportunistic_tau = {tau}");
            let _ = writeln!(s, "opportunistic_theta = {theta:?}");
        }
        for (t, v) in self.alpha.grid().iter().zip(self.alpha.values()) {
            let _ = writeln!(s, "alpha.{t} = {:?} {:?}", v[0], v[1]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: String| Error::CalibrationParse(m);
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut alpha: Vec<(u64, [f64; NUM_PU])> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(tau) = k.strip_prefix("alpha.") {
                let tau: u64 = tau
                    .parse()
                    .map_err(|_| perr(format!("bad alpha key {k}")))?;
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| perr(format!("bad alpha row {v}")))?;
                let row: [f64; NUM_PU] = vals
                    .try_into()
                    .map_err(|_| perr(format!("alpha row needs {NUM_PU} values")))?;
                alpha.push((tau, row));
            } else if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(perr(format!("duplicate key {k}")));
            }
        }
        let get = |k: &'static str| kv.get(k).ok_or(Error::MissingCalibration(k));
        let num = |k: &'static str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| perr(format!("bad number for {k}")))
        };
        let opt_num = |k: &'static str| -> Result<Option<f64>> {
            if kv.contains_key(k) {
                num(k).map(Some)
            } else {
                Ok(None)
            }
        };
        alpha.sort_by_key(|a| a.0);
        let (grid, values): (Vec<u64>, Vec<[f64; NUM_PU]>) = alpha.into_iter().unzip();
        let sprt = match (opt_num("sprt_lower")?, opt_num("sprt_upper")?) {
            (Some(a), Some(b)) => Some(SprtConfig::new(a, b)?),
            (None, None) => None,
            _ => {
                return Err(perr(
                    "sprt_lower and sprt_upper must appear together".into(),
                ))
            }
        };
        let opportunistic = match (kv.get("opportunistic_tau"), opt_num("opportunistic_theta")?) {
            (Some(t), Some(th)) => Some((
                t.parse()
                    .map_err(|_| perr("bad opportunistic_tau".into()))?,
                th,
            )),
            (None, None) => None,
            _ => {
                return Err(perr(
                    "opportunistic_tau and opportunistic_theta must appear together".into(),
                ))
            }
        };
        Ok(Calibration {
            scenario_hash: get("scenario_hash")?.clone(),
            phi: num("phi")?,
            phi_uniform: num("phi_uniform")?,
            delta: num("delta")?,
            interference_cap: num("interference_cap")?,
            alpha: AlphaTable::new(grid, values)?,
            gamma: opt_num("gamma")?,
            sprt,
            opportunistic,
        })
    }

    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.scenario_hash != expected {
            return Err(Error::CalibrationMismatch {
                expected: expected.to_string(),
                found: self.scenario_hash.clone(),
            });
        }
        Ok(())
    }
}
