//! Reference sensing rules and power policies.

use crate::error::{Error, Result};

/// Two-threshold SPRT on the marginal LLR.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SprtConfig {
    pub lower: f64,
    pub upper: f64,
}

impl SprtConfig {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < 0.0 && upper > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "SPRT thresholds need A < 0 < B, got A={lower}, B={upper}"
            )));
        }
        Ok(SprtConfig { lower, upper })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SprtOutcome {
    Continue,
    Decide0,
    Decide1,
}

pub fn sprt_step(l: f64, cfg: &SprtConfig) -> SprtOutcome {
    if l >= cfg.upper {
        SprtOutcome::Decide1
    } else if l <= cfg.lower {
        SprtOutcome::Decide0
    } else {
        SprtOutcome::Continue
    }
}

/// Plain likelihood-ratio test used with the SJDE stopping time.
pub fn slrt_e_decide(l: f64, c0: f64, c1: f64) -> bool {
    l >= c0.ln() - c1.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicyInputs {
    /// Sensing decision, `None` when no sensing is done.
    pub decision: Option<bool>,
    /// `|h_i|²` (true or estimated) from the SU Tx to each PU.
    pub gains: [f64; 2],
    /// Interference caps, possibly already scaled by α.
    pub caps: [f64; 2],
    pub pmax: f64,
}

/// `min{Pmax, I1/g1, I2/g2}`; a zero gain leaves its cap inactive.
pub fn capped_power(gains: [f64; 2], caps: [f64; 2], pmax: f64) -> f64 {
    gains
        .iter()
        .zip(caps)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, c)| c / g)
        .fold(pmax, f64::min)
}

/// Always-on transmission under true-channel interference caps.
pub fn underlay_power(inputs: &PowerPolicyInputs) -> f64 {
    capped_power(inputs.gains, inputs.caps, inputs.pmax)
}

pub fn opportunistic_power(decision: bool, pmax: f64) -> f64 {
    if decision {
        0.0
    } else {
        pmax
    }
}
