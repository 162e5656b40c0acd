//! Scenario configuration, read from TOML.
//!
//! Every key is optional; omitted keys take the defaults below. Units:
//! powers and variances are linear, `pmax_db` is dB relative to the SU
//! receiver noise, times are in samples unless stated otherwise.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::OutageSpec;
use crate::channel::{ChannelPrior, ConstellationSpec, NUM_PU};
use crate::error::{Error, Result};
use crate::lt::MAX_BITS;
use crate::sjde::CostWeights;

/// Complex Gaussian link `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkPrior {
    /// Complex mean μ.
    pub mean: f64,
    /// Complex variance σ².
    pub variance: f64,
}

impl LinkPrior {
    pub fn rayleigh(variance: f64) -> Self {
        LinkPrior {
            mean: 0.0,
            variance,
        }
    }

    pub fn with_noise(&self, noise_var: f64) -> Result<ChannelPrior> {
        ChannelPrior::new(self.mean / 2.0, self.variance / 2.0, noise_var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    /// Natural log (nats).
    E,
    /// Base 2 (bits).
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    pub fn log1p(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln_1p(),
            LogBase::Two => x.ln_1p() / std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of SUs (even: transmitter/receiver pairs).
    pub num_su: usize,
    /// Default PU→SU cross-link prior.
    pub cross_link: LinkPrior,
    /// Per-SU overrides `[[PU1, PU2], ...]`; length must equal `num_su`.
    pub cross_links: Option<Vec<[LinkPrior; NUM_PU]>>,
    /// Noise variance N0 at every SU.
    pub su_noise_var: f64,
    /// SU Tx→Rx link β.
    pub su_link: LinkPrior,
    /// PU Tx→Rx link g.
    pub pu_link: LinkPrior,
    /// PU transmit power Q (both PUs).
    pub pu_power: f64,
    /// Noise variance η at the PU receivers.
    pub pu_noise_var: f64,
    /// PU target rate R2 in bits/s/Hz.
    pub pu_rate: f64,
    /// Fraction of the outage budget held back.
    pub safety_margin: f64,
    /// PU outage constraint P_out.
    pub p_out: f64,
    /// SU misdetection limit as a fraction of P_out.
    pub pm_fraction: f64,
    /// SU power limit, dB.
    pub pmax_db: f64,
    /// Prior probability that the PUs are idle.
    pub pi0: f64,
    /// Preamble length Tp, samples.
    pub tp: u64,
    /// Frame length as a multiple of Tp.
    pub frame_ratio: f64,
    /// Sampling rate, Hz (reporting only).
    pub fs_hz: f64,
    pub constellation: ConstellationSpec,
    pub costs: CostWeights,
    /// Bits per report.
    pub bits: u32,
    /// Target total message rate per sample; defaults to `num_su`.
    pub msg_rate: Option<f64>,
    /// Uniform reporting period, samples.
    pub uniform_period: u64,
    pub log_base: LogBase,
    pub seed: u64,
    /// Evaluation frames per grid point.
    pub trials: usize,
    /// Frames used for offline tuning.
    pub tuning_trials: usize,
    /// H1 frames for the α table.
    pub alpha_trials: usize,
    /// Percentile defining α.
    pub alpha_percentile: f64,
    /// Frames and horizon for the Δ and φ calibration.
    pub calibration_frames: usize,
    pub calibration_horizon: usize,
    /// Percentile of |y| defining φ.
    pub phi_percentile: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_su: 2,
            cross_link: LinkPrior::rayleigh(1.0),
            cross_links: None,
            su_noise_var: 1.0,
            su_link: LinkPrior::rayleigh(1.0),
            pu_link: LinkPrior::rayleigh(74.2),
            pu_power: 1.0,
            pu_noise_var: 0.807,
            pu_rate: 1.0,
            safety_margin: 0.5,
            p_out: 0.075,
            pm_fraction: 0.2,
            pmax_db: 15.0,
            pi0: 0.5,
            tp: 2000,
            frame_ratio: 10.0,
            fs_hz: 1e6,
            constellation: ConstellationSpec::default(),
            costs: CostWeights::default(),
            bits: 3,
            msg_rate: None,
            uniform_period: 4,
            log_base: LogBase::E,
            seed: 1,
            trials: 10_000,
            tuning_trials: 10_000,
            alpha_trials: 10_000,
            alpha_percentile: 5.0,
            calibration_frames: 2000,
            calibration_horizon: 200,
            phi_percentile: 99.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Preamble length at the full scale (10 ms at 1 MHz).
    pub fn full_scale(mut self) -> Self {
        self.tp = 10_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_su == 0 || !self.num_su.is_multiple_of(2) || self.num_su > 256 {
            return bad(format!(
                "num_su must be even and in 2..=256, got {}",
                self.num_su
            ));
        }
        if let Some(links) = &self.cross_links {
            if links.len() != self.num_su {
                return bad(format!(
                    "cross_links has {} rows, expected {}",
                    links.len(),
                    self.num_su
                ));
            }
        }
        for p in self.priors()? {
            for q in p {
                q.validate()?;
            }
        }
        self.beta_prior()?;
        self.g_prior()?;
        if self.tp == 0 {
            return bad("tp must be positive".into());
        }
        if !(self.frame_ratio >= 1.0 && self.frame_ratio.is_finite()) {
            return bad(format!(
                "frame_ratio must be >= 1, got {}",
                self.frame_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return bad(format!("pi0 must be in [0, 1], got {}", self.pi0));
        }
        if !(self.p_out > 0.0 && self.p_out < 1.0) {
            return bad(format!("p_out must be in (0, 1), got {}", self.p_out));
        }
        if !(0.0..1.0).contains(&self.safety_margin) {
            return bad(format!(
                "safety_margin must be in [0, 1), got {}",
                self.safety_margin
            ));
        }
        if !(self.pm_fraction > 0.0) {
            return bad("pm_fraction must be positive".into());
        }
        for (name, v) in [
            ("pu_power", self.pu_power),
            ("pu_noise_var", self.pu_noise_var),
            ("pu_rate", self.pu_rate),
            ("su_noise_var", self.su_noise_var),
            ("fs_hz", self.fs_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.pmax_db.is_finite() {
            return bad("pmax_db must be finite".into());
        }
        self.costs.validate()?;
        if !(1..=MAX_BITS).contains(&self.bits) {
            return bad(format!("bits must be in 1..={MAX_BITS}, got {}", self.bits));
        }
        if let Some(m) = self.msg_rate {
            if !(m > 0.0 && m < (4 * self.num_su) as f64) {
                return bad(format!(
                    "msg_rate must be in (0, {}), got {m}",
                    4 * self.num_su
                ));
            }
        }
        if self.uniform_period == 0 {
            return bad("uniform_period must be positive".into());
        }
        if self.trials == 0 || self.tuning_trials == 0 || self.alpha_trials == 0 {
            return bad("trial counts must be >= 1".into());
        }
        if self.calibration_frames == 0 || self.calibration_horizon == 0 {
            return bad("calibration_frames and calibration_horizon must be >= 1".into());
        }
        for (name, p) in [
            ("alpha_percentile", self.alpha_percentile),
            ("phi_percentile", self.phi_percentile),
        ] {
            if !(p > 0.0 && p < 100.0) {
                return bad(format!("{name} must be in (0, 100), got {p}"));
            }
        }
        self.constellation.build()?;
        Ok(())
    }

    /// Cross-link priors indexed `[su][pu]`.
    pub fn priors(&self) -> Result<Vec<[ChannelPrior; NUM_PU]>> {
        let n0 = self.su_noise_var;
        match &self.cross_links {
            Some(rows) => rows
                .iter()
                .map(|r| Ok([r[0].with_noise(n0)?, r[1].with_noise(n0)?]))
                .collect(),
            None => {
                let p = self.cross_link.with_noise(n0)?;
                Ok(vec![[p; NUM_PU]; self.num_su])
            }
        }
    }

    pub fn beta_prior(&self) -> Result<ChannelPrior> {
        self.su_link.with_noise(self.su_noise_var)
    }

    pub fn g_prior(&self) -> Result<ChannelPrior> {
        self.pu_link.with_noise(self.pu_noise_var)
    }

    pub fn pmax(&self) -> f64 {
        10f64.powf(self.pmax_db / 10.0)
    }

    /// Frame length T in samples.
    pub fn frame_len(&self) -> f64 {
        self.frame_ratio * self.tp as f64
    }

    pub fn target_msg_rate(&self) -> f64 {
        self.msg_rate.unwrap_or(self.num_su as f64)
    }

    pub fn pm_limit(&self) -> f64 {
        self.pm_fraction * self.p_out
    }

    pub fn outage_spec(&self) -> Result<OutageSpec> {
        Ok(OutageSpec {
            p_out: self.p_out,
            pu_rate: self.pu_rate,
            pu_power: self.pu_power,
            eta: self.pu_noise_var,
            g_prior: self.g_prior()?,
            safety_margin: self.safety_margin,
        })
    }

    /// SHA-256 of the canonical TOML with run-size keys removed.
    pub fn scenario_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.trials = 0;
        let text = c.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
