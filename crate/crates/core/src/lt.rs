//! Level-triggered sampling, overshoot quantization and the report wire format.
//!
//! Each SU runs one sampler per `(PU, component)` process. A sampler sums
//! incoming observations and, once the running increment leaves `(−Δ, Δ)`,
//! emits its sign together with the quantized overshoot and restarts from
//! zero. The FC adds `±(Δ + q̃)` per report.

use crate::error::{Error, Result};

/// Largest supported bits per report (sign plus index).
pub const MAX_BITS: u32 = 24;
/// Header width: 8-bit SU id, 1-bit PU index, 1-bit component.
pub const HEADER_BITS: u32 = 10;

/// Mid-riser quantizer on `[0, φ]` with `2^(r−1)` bins.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Quantizer {
    phi: f64,
    r: u32,
}

impl Quantizer {
    pub fn new(phi: f64, r: u32) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "phi must be positive, got {phi}"
            )));
        }
        if !(1..=MAX_BITS).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "r must be in 1..={MAX_BITS}, got {r}"
            )));
        }
        Ok(Quantizer { phi, r })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// Quantization index width, `r − 1`.
    pub fn index_bits(&self) -> u32 {
        self.r - 1
    }

    pub fn bins(&self) -> u32 {
        1 << self.index_bits()
    }

    pub fn bin_width(&self) -> f64 {
        self.phi / self.bins() as f64
    }

    /// Worst-case error for inputs within `[0, φ]`, `φ / 2^r`.
    pub fn half_bin(&self) -> f64 {
        0.5 * self.bin_width()
    }

    /// `(index, level)`; inputs above `φ` map to the top bin.
    pub fn quantize(&self, q: f64) -> (u32, f64) {
        let top = self.bins() - 1;
        let idx = if q >= self.phi {
            top
        } else {
            ((q.max(0.0) / self.bin_width()) as u32).min(top)
        };
        (idx, self.level_unchecked(idx))
    }

    pub fn level(&self, index: u32) -> Result<f64> {
        if index >= self.bins() {
            return Err(Error::IndexOutOfRange {
                index,
                bits: self.index_bits(),
            });
        }
        Ok(self.level_unchecked(index))
    }

    fn level_unchecked(&self, index: u32) -> f64 {
        (index as f64 + 0.5) * self.bin_width()
    }
}

pub fn quantize_overshoot(q: f64, quantizer: &Quantizer) -> (u32, f64) {
    quantizer.quantize(q)
}

/// One report on the SU→FC link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LtMessage {
    pub su_id: u8,
    pub pu_index: u8,
    pub component: u8,
    pub positive: bool,
    pub index: u32,
    /// Emission time (simulation metadata, not on the wire).
    pub t: u64,
}

impl LtMessage {
    pub fn sign(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    /// The `r`-bit payload: sign bit followed by the index, MSB first.
    pub fn payload(&self, r: u32) -> Result<u32> {
        let bits = r - 1;
        if bits < 32 && self.index >> bits != 0 {
            return Err(Error::IndexOutOfRange {
                index: self.index,
                bits,
            });
        }
        Ok(((self.positive as u32) << bits) | self.index)
    }

    /// Header plus payload packed big-endian, zero-padded to whole bytes.
    pub fn encode(&self, r: u32) -> Result<Vec<u8>> {
        if !(1..=MAX_BITS).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "r must be in 1..={MAX_BITS}, got {r}"
            )));
        }
        if self.pu_index > 1 || self.component > 1 {
            return Err(Error::MalformedMessage(format!(
                "pu_index {} / component {} do not fit one bit",
                self.pu_index, self.component
            )));
        }
        let header =
            ((self.su_id as u64) << 2) | ((self.pu_index as u64) << 1) | self.component as u64;
        let total = HEADER_BITS + r;
        let word = (header << r) | self.payload(r)? as u64;
        let nbytes = total.div_ceil(8);
        let shifted = word << (nbytes * 8 - total);
        Ok((0..nbytes)
            .map(|b| (shifted >> (8 * (nbytes - 1 - b))) as u8)
            .collect())
    }

    pub fn decode(bytes: &[u8], r: u32, t: u64) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "r must be in 1..={MAX_BITS}, got {r}"
            )));
        }
        let total = HEADER_BITS + r;
        let nbytes = total.div_ceil(8) as usize;
        if bytes.len() != nbytes {
            return Err(Error::MalformedMessage(format!(
                "expected {nbytes} bytes, got {}",
                bytes.len()
            )));
        }
        let shifted = bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64);
        let pad = nbytes as u32 * 8 - total;
        if shifted & ((1u64 << pad) - 1) != 0 {
            return Err(Error::MalformedMessage("nonzero padding bits".into()));
        }
        let word = shifted >> pad;
        let index_bits = r - 1;
        Ok(LtMessage {
            su_id: (word >> (r + 2)) as u8,
            pu_index: ((word >> (r + 1)) & 1) as u8,
            component: ((word >> r) & 1) as u8,
            positive: (word >> index_bits) & 1 == 1,
            index: (word & ((1u64 << index_bits) - 1)) as u32,
            t,
        })
    }
}

/// Sign and quantized magnitude emitted by a sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub positive: bool,
    pub index: u32,
    /// Exact increment since the previous trigger.
    pub increment: f64,
    /// True when the overshoot exceeded φ.
    pub overflow: bool,
}

/// Level-triggered sampler of one scalar process.
#[derive(Debug, Clone, PartialEq)]
pub struct LtSampler {
    delta: f64,
    quantizer: Quantizer,
    pending: f64,
    total: f64,
    last_sample_value: f64,
    triggers: u64,
    overflows: u64,
}

impl LtSampler {
    pub fn new(delta: f64, quantizer: Quantizer) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(LtSampler {
            delta,
            quantizer,
            pending: 0.0,
            total: 0.0,
            last_sample_value: 0.0,
            triggers: 0,
            overflows: 0,
        })
    }

    pub fn update(&mut self, y: f64) -> Option<Trigger> {
        self.pending += y;
        self.total += y;
        if self.pending.abs() < self.delta {
            return None;
        }
        let v = self.pending;
        let q = v.abs() - self.delta;
        let (index, _) = self.quantizer.quantize(q);
        let overflow = q > self.quantizer.phi();
        self.pending = 0.0;
        self.last_sample_value = self.total;
        self.triggers += 1;
        self.overflows += overflow as u64;
        Some(Trigger {
            positive: v > 0.0,
            index,
            increment: v,
            overflow,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn pending(&self) -> f64 {
        self.pending
    }

    /// Local running sum `V_t`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `V` at the last trigger.
    pub fn last_sample_value(&self) -> f64 {
        self.last_sample_value
    }

    pub fn triggers(&self) -> u64 {
        self.triggers
    }

    pub fn overflows(&self) -> u64 {
        self.overflows
    }
}

/// FC-side value of a level-triggered report: `±(Δ + q̃)`.
pub fn reconstruct_increment(m: &LtMessage, delta: f64, quantizer: &Quantizer) -> Result<f64> {
    Ok(m.sign() * (delta + quantizer.level(m.index)?))
}

/// FC-side value of a uniform report: `±q̃`.
pub fn reconstruct_uniform(m: &LtMessage, quantizer: &Quantizer) -> Result<f64> {
    Ok(m.sign() * quantizer.level(m.index)?)
}

/// Running reconstruction `Ṽ` of one process at the FC.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FcAccumulator {
    pub v_tilde_sum: f64,
    pub message_count: u64,
}

impl FcAccumulator {
    pub fn apply(&mut self, increment: f64) {
        self.v_tilde_sum += increment;
        self.message_count += 1;
    }
}

/// Periodic reporter: every `period` steps sends the quantized raw
/// increment since its previous report.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSampler {
    period: u64,
    quantizer: Quantizer,
    pending: f64,
}

impl UniformSampler {
    pub fn new(period: u64, quantizer: Quantizer) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidParameter(
                "uniform period must be positive".into(),
            ));
        }
        Ok(UniformSampler {
            period,
            quantizer,
            pending: 0.0,
        })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Adds the sample of step `t` (1-based); reports when `t` is a multiple
    /// of the period.
    pub fn update(&mut self, y: f64, t: u64) -> Option<Trigger> {
        self.pending += y;
        if t.is_multiple_of(self.period) {
            Some(self.flush())
        } else {
            None
        }
    }

    /// Reports whatever has accumulated.
    pub fn flush(&mut self) -> Trigger {
        let v = self.pending;
        let (index, _) = self.quantizer.quantize(v.abs());
        self.pending = 0.0;
        Trigger {
            positive: v >= 0.0,
            index,
            increment: v,
            overflow: v.abs() > self.quantizer.phi(),
        }
    }

    pub fn has_pending(&self) -> bool {
        self.pending != 0.0
    }
}

/// Unique positive root of `Δ tanh(Δ/2) = Σ|E[V_1]| / M`.
pub fn solve_delta(target_rate: f64, mean_abs_increments: &[f64]) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    let rhs = mean_abs_increments.iter().map(|v| v.abs()).sum::<f64>() / target_rate;
    if !(rhs > 0.0 && rhs.is_finite()) {
        return Err(Error::DegenerateRate(rhs));
    }
    let f = |d: f64| d * (0.5 * d).tanh() - rhs;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1e-3) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Stored observation paths for message-rate calibration, laid out as
/// `[frame][process][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBank {
    processes: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl IncrementBank {
    pub fn new(processes: usize, horizon: usize) -> Result<Self> {
        if processes == 0 || horizon == 0 {
            return Err(Error::InvalidParameter(
                "increment bank needs processes and steps".into(),
            ));
        }
        Ok(IncrementBank {
            processes,
            horizon,
            data: Vec::new(),
        })
    }

    /// Appends one frame given as `steps[t][process]`.
    pub fn push_frame(&mut self, steps: &[Vec<f64>]) -> Result<()> {
        if steps.len() != self.horizon || steps.iter().any(|s| s.len() != self.processes) {
            return Err(Error::InvalidParameter(
                "frame shape does not match bank".into(),
            ));
        }
        for p in 0..self.processes {
            self.data.extend(steps.iter().map(|s| s[p]));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.data.len() / (self.processes * self.horizon)
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    /// Visits every stored per-process path.
    pub fn for_each_path(&self, mut f: impl FnMut(&[f64])) {
        for path in self.data.chunks_exact(self.horizon) {
            f(path);
        }
    }

    /// Messages per unit time summed over all processes.
    pub fn rate(&self, delta: f64) -> f64 {
        let mut count = 0u64;
        for path in self.data.chunks_exact(self.horizon) {
            let mut pending = 0.0;
            for &y in path {
                pending += y;
                if pending.abs() >= delta {
                    count += 1;
                    pending = 0.0;
                }
            }
        }
        count as f64 / (self.frames() * self.horizon) as f64
    }
}

/// Threshold whose simulated total message rate matches `target_rate`,
/// by bisection on `log Δ` over the stored paths.
pub fn calibrate_delta_mc(bank: &IncrementBank, target_rate: f64) -> Result<f64> {
    if bank.frames() == 0 {
        return Err(Error::Empty("increment bank"));
    }
    if !(target_rate > 0.0 && target_rate < bank.processes() as f64) {
        return Err(Error::UnattainableRate(target_rate));
    }
    let scale = bank.data.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::UnattainableRate(target_rate));
    }
    let mut lo = scale * 1e-9;
    if bank.rate(lo) < target_rate {
        return Err(Error::UnattainableRate(target_rate));
    }
    let mut hi = scale;
    while bank.rate(hi) >= target_rate {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if bank.rate(mid) >= target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-9 {
            break;
        }
    }
    let (rl, rh) = (bank.rate(lo), bank.rate(hi));
    Ok(if (rl - target_rate).abs() <= (rh - target_rate).abs() {
        lo
    } else {
        hi
    })
}
