//! Sequential joint detection and estimation.
//!
//! All inference runs on two running sums per link: the pilot energy
//! `U_i = Σ|p_i|²` (shared by every real component of PU `i`) and the
//! observation sum `V_in = Σ y_in`. Stopping depends on `U` alone; the
//! decision is a likelihood-ratio test whose threshold drops as the channel
//! estimates grow.

use crate::channel::{ChannelPrior, Hypothesis, RealObservationPair, NUM_COMPONENTS, NUM_PU};
use crate::error::{Error, Result};
use crate::stats::mean_and_var;

/// Running sufficient statistics of one SU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SjdeState {
    t: u64,
    fisher: [f64; NUM_PU],
    quartic: [f64; NUM_PU],
    sums: [[f64; NUM_COMPONENTS]; NUM_PU],
}

impl SjdeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates one observation of PU `i` without advancing time.
    pub fn update(&mut self, i: usize, obs: &RealObservationPair) {
        debug_assert!(obs.pilot_power >= 0.0);
        self.fisher[i] += obs.pilot_power;
        self.quartic[i] += obs.pilot_power * obs.pilot_power;
        self.sums[i][0] += obs.y1;
        self.sums[i][1] += obs.y2;
    }

    /// Consumes both PUs' observations of one time step.
    pub fn push_step(&mut self, obs: &[RealObservationPair; NUM_PU]) {
        for (i, o) in obs.iter().enumerate() {
            self.update(i, o);
        }
        self.t += 1;
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// U_i.
    pub fn fisher(&self, i: usize) -> f64 {
        self.fisher[i]
    }

    /// Σ_i U_i.
    pub fn fisher_total(&self) -> f64 {
        self.fisher.iter().sum()
    }

    /// Σ_m |p_i[m]|⁴.
    pub fn quartic(&self, i: usize) -> f64 {
        self.quartic[i]
    }

    /// V_in.
    pub fn sum(&self, i: usize, n: usize) -> f64 {
        self.sums[i][n]
    }
}

/// Posterior mean of one real channel component given `(V, U)`.
pub fn estimate_from_stats(v: f64, u: f64, prior: &ChannelPrior) -> f64 {
    let w = prior.prior_weight();
    (v + prior.mean_re * w) / (u + w)
}

/// Marginal log-likelihood ratio of one real channel given `(V, U)`.
pub fn llr_from_stats(v: f64, u: f64, prior: &ChannelPrior) -> f64 {
    let w = prior.prior_weight();
    let n0 = prior.noise_var;
    let shifted = v + prior.mean_re * w;
    shifted * shifted / (n0 * (u + w))
        - prior.mean_re * prior.mean_re / (2.0 * prior.variance_re)
        - 0.5 * (u / w).ln_1p()
}

pub fn mmse_estimate(state: &SjdeState, prior: &ChannelPrior, i: usize, n: usize) -> f64 {
    estimate_from_stats(state.sum(i, n), state.fisher(i), prior)
}

pub fn llr(state: &SjdeState, prior: &ChannelPrior, i: usize, n: usize) -> f64 {
    llr_from_stats(state.sum(i, n), state.fisher(i), prior)
}

/// Sum of per-channel LLRs over all SUs, PUs and components.
pub fn global_llr(states: &[SjdeState], priors: &[[ChannelPrior; NUM_PU]]) -> Result<f64> {
    if states.len() != priors.len() {
        return Err(Error::InvalidParameter(format!(
            "{} states but {} prior rows",
            states.len(),
            priors.len()
        )));
    }
    let Some(first) = states.first() else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    for (state, row) in states.iter().zip(priors) {
        if state.t() != first.t() {
            return Err(Error::MismatchedTime(first.t(), state.t()));
        }
        for (i, prior) in row.iter().enumerate() {
            for n in 0..NUM_COMPONENTS {
                total += llr(state, prior, i, n);
            }
        }
    }
    Ok(total)
}

pub fn should_stop(u_total: f64, gamma: f64) -> bool {
    u_total >= gamma
}

/// Error/estimation cost weights `(c0, c1, ce)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostWeights {
    pub c0: f64,
    pub c1: f64,
    pub ce: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            c0: 0.2,
            c1: 0.2,
            ce: 0.6,
        }
    }
}

impl CostWeights {
    pub fn new(c0: f64, c1: f64, ce: f64) -> Result<Self> {
        let w = CostWeights { c0, c1, ce };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c0, self.c1, self.ce];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cost weights must be >= 0: {self:?}"
            )));
        }
        if all.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter("cost weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDecision {
    pub decision: bool,
    pub llr: f64,
    pub threshold: f64,
    pub estimates: Vec<f64>,
}

/// `log(c0 / (c1 + ce Σ ĥ²))`, with the infinite limits made explicit.
pub fn decision_threshold(w: &CostWeights, sum_sq_estimates: f64) -> Result<f64> {
    let denom = w.c1 + w.ce * sum_sq_estimates;
    match (w.c0 == 0.0, denom == 0.0) {
        (true, true) => Err(Error::UndefinedThreshold),
        (true, false) => Ok(f64::NEG_INFINITY),
        (false, true) => Ok(f64::INFINITY),
        (false, false) => Ok(w.c0.ln() - denom.ln()),
    }
}

pub fn decide(l: f64, estimates: &[f64], w: &CostWeights) -> Result<JointDecision> {
    let sum_sq: f64 = estimates.iter().map(|h| h * h).sum();
    let threshold = decision_threshold(w, sum_sq)?;
    Ok(JointDecision {
        decision: l >= threshold,
        llr: l,
        threshold,
        estimates: estimates.to_vec(),
    })
}

/// Posterior variance of a real channel component after pilot energy `u`.
pub fn posterior_variance(u: f64, prior: &ChannelPrior) -> f64 {
    0.5 * prior.noise_var / (u + prior.prior_weight())
}

/// Quartic-sum variance expression `((σ²/2)Σ|p|⁴ + (N0/2)U) / (U + N0/σ²)²`.
///
/// This is the H1 variance of the estimate only if each pilot step sees an
/// independent channel draw. For a channel held over the preamble the
/// variance is [`estimate_variance`].
pub fn estimator_variance(u: f64, quartic: f64, prior: &ChannelPrior) -> f64 {
    let d = u + prior.prior_weight();
    (prior.variance_re * quartic + 0.5 * prior.noise_var * u) / (d * d)
}

/// H1 variance of the MMSE estimate for a channel constant over the
/// preamble: `(σ²/2) U / (U + N0/σ²)`.
pub fn estimate_variance(u: f64, prior: &ChannelPrior) -> f64 {
    prior.variance_re * u / (u + prior.prior_weight())
}

/// One trial's detection/estimation outcome for cost evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSample {
    pub hypothesis: Hypothesis,
    pub decision: bool,
    /// `(true value, estimate)` per real channel.
    pub channels: Vec<(f64, f64)>,
}

impl CostSample {
    /// Contribution to the H0 or H1 half of the combined cost.
    pub fn term(&self, w: &CostWeights) -> f64 {
        match self.hypothesis {
            Hypothesis::H0 => {
                if self.decision {
                    w.c0
                } else {
                    0.0
                }
            }
            Hypothesis::H1 => {
                let est: f64 = self
                    .channels
                    .iter()
                    .map(|&(x, xh)| {
                        if self.decision {
                            (xh - x).powi(2)
                        } else {
                            x * x
                        }
                    })
                    .sum();
                let miss = if self.decision { 0.0 } else { w.c1 };
                miss + w.ce * est
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub cost: f64,
    /// Monte Carlo standard error.
    pub se: f64,
    pub n0: usize,
    pub n1: usize,
}

/// Monte Carlo estimate of the combined cost: the H0 average of the
/// false-alarm term plus the H1 average of the miss and estimation terms.
pub fn empirical_combined_cost(samples: &[CostSample], w: &CostWeights) -> Result<CostEstimate> {
    let h0 = samples.iter().filter(|s| s.hypothesis == Hypothesis::H0);
    let h1 = samples.iter().filter(|s| s.hypothesis == Hypothesis::H1);
    let (m0, v0, n0) = mean_and_var(h0.map(|s| s.term(w)));
    let (m1, v1, n1) = mean_and_var(h1.map(|s| s.term(w)));
    if n0 == 0 {
        return Err(Error::MissingHypothesis("H0"));
    }
    if n1 == 0 {
        return Err(Error::MissingHypothesis("H1"));
    }
    Ok(CostEstimate {
        cost: m0 + m1,
        se: (v0 / n0 as f64 + v1 / n1 as f64).sqrt(),
        n0,
        n1,
    })
}
