//! Channels, pilots and preamble observations.
//!
//! Cross-link coefficients are proper complex Gaussians whose real and
//! imaginary parts are i.i.d. `N(mean_re, variance_re)`. During the preamble
//! an SU receives `y = w` when the PU is idle and `y = h p + w` when it is
//! active, and works with the paired real model
//! `y1 = Re(conj(p) y)`, `y2 = Im(conj(p) y)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of primary users (the PU pair).
pub const NUM_PU: usize = 2;
/// Real components per complex link.
pub const NUM_COMPONENTS: usize = 2;

pub type ChannelCoeff = Complex64;
pub type ComplexSample = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// PU idle.
    H0,
    /// PU transmitting.
    H1,
}

impl Hypothesis {
    pub fn is_active(self) -> bool {
        self == Hypothesis::H1
    }

    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }
}

/// Gaussian prior of one complex link, stored per real component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPrior {
    /// Mean of each real component (half the complex mean).
    pub mean_re: f64,
    /// Variance of each real component (half the complex variance).
    pub variance_re: f64,
    /// Complex noise variance at the receiver of this link.
    pub noise_var: f64,
}

impl ChannelPrior {
    pub fn new(mean_re: f64, variance_re: f64, noise_var: f64) -> Result<Self> {
        let prior = ChannelPrior {
            mean_re,
            variance_re,
            noise_var,
        };
        prior.validate()?;
        Ok(prior)
    }

    /// Zero-mean prior with complex variance `sigma2`.
    pub fn rayleigh(sigma2: f64, noise_var: f64) -> Result<Self> {
        Self::new(0.0, sigma2 / 2.0, noise_var)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance_re > 0.0 && self.variance_re.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "channel variance must be positive, got {}",
                self.variance_re
            )));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {}",
                self.noise_var
            )));
        }
        if !self.mean_re.is_finite() {
            return Err(Error::InvalidParameter(
                "channel mean must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Complex mean μ.
    pub fn mu(&self) -> f64 {
        2.0 * self.mean_re
    }

    /// Complex variance σ².
    pub fn sigma2(&self) -> f64 {
        2.0 * self.variance_re
    }

    /// N0 / σ², the prior's weight in pilot-energy units.
    pub fn prior_weight(&self) -> f64 {
        self.noise_var / self.sigma2()
    }

    pub fn is_rayleigh(&self) -> bool {
        self.mean_re == 0.0
    }
}

pub fn sample_channel<R: Rng + ?Sized>(prior: &ChannelPrior, rng: &mut R) -> ChannelCoeff {
    let sd = prior.variance_re.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(prior.mean_re + sd * re, prior.mean_re + sd * im)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotSymbol {
    pub re: f64,
    pub im: f64,
    /// |p|², cached.
    pub power: f64,
}

impl PilotSymbol {
    pub fn new(re: f64, im: f64) -> Self {
        PilotSymbol {
            re,
            im,
            power: re * re + im * im,
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    /// Square 16-QAM on the {±1, ±3}² grid.
    Qam16,
    /// Constant-modulus {±1, ±i}.
    Qpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub kind: ConstellationKind,
    /// Target E[|p|²].
    pub average_power: f64,
}

impl Default for ConstellationSpec {
    fn default() -> Self {
        ConstellationSpec {
            kind: ConstellationKind::Qam16,
            average_power: 1.0,
        }
    }
}

impl ConstellationSpec {
    pub fn build(&self) -> Result<Constellation> {
        let points = match self.kind {
            ConstellationKind::Qam16 => {
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels
                    .iter()
                    .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
                    .collect()
            }
            ConstellationKind::Qpsk => vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
            ],
        };
        Constellation::normalized(points, self.average_power)
    }
}

/// A finite pilot alphabet drawn uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<PilotSymbol>,
}

impl Constellation {
    /// Scales `points` so their mean power equals `average_power`.
    pub fn normalized(points: Vec<Complex64>, average_power: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyConstellation);
        }
        if !(average_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pilot average power must be positive, got {average_power}"
            )));
        }
        let mean_power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        if !(mean_power > 0.0) {
            return Err(Error::InvalidParameter(
                "constellation has zero energy".into(),
            ));
        }
        let scale = (average_power / mean_power).sqrt();
        Ok(Constellation {
            points: points
                .into_iter()
                .map(|p| PilotSymbol::new(p.re * scale, p.im * scale))
                .collect(),
        })
    }

    pub fn points(&self) -> &[PilotSymbol] {
        &self.points
    }

    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.power).sum::<f64>() / self.points.len() as f64
    }
}

pub fn gen_pilot<R: Rng + ?Sized>(constellation: &Constellation, rng: &mut R) -> PilotSymbol {
    let idx = rng.random_range(0..constellation.points.len());
    constellation.points[idx]
}

fn complex_noise<R: Rng + ?Sized>(noise_var: f64, rng: &mut R) -> Complex64 {
    let sd = (noise_var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

pub fn observe<R: Rng + ?Sized>(
    hyp: Hypothesis,
    h: ChannelCoeff,
    p: &PilotSymbol,
    prior: &ChannelPrior,
    rng: &mut R,
) -> ComplexSample {
    let w = complex_noise(prior.noise_var, rng);
    match hyp {
        Hypothesis::H0 => w,
        Hypothesis::H1 => h * p.as_complex() + w,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RealObservationPair {
    pub y1: f64,
    pub y2: f64,
    pub pilot_power: f64,
}

impl RealObservationPair {
    pub fn component(&self, n: usize) -> f64 {
        if n == 0 {
            self.y1
        } else {
            self.y2
        }
    }
}

pub fn realify(y: ComplexSample, p: &PilotSymbol) -> RealObservationPair {
    let z = p.as_complex().conj() * y;
    RealObservationPair {
        y1: z.re,
        y2: z.im,
        pilot_power: p.power,
    }
}

/// One preamble time step as seen by every SU.
#[derive(Debug, Clone)]
pub struct PreambleStep {
    pub t: usize,
    pub pilots: [PilotSymbol; NUM_PU],
    /// `obs[k][i]`: SU k's paired observation of PU i.
    pub obs: Vec<[RealObservationPair; NUM_PU]>,
}

impl PreambleStep {
    pub fn pilot_powers(&self) -> [f64; NUM_PU] {
        [self.pilots[0].power, self.pilots[1].power]
    }
}

/// Streams preamble observations for all SUs of one frame.
///
/// Per step the draw order is: one pilot per PU, then one complex noise
/// sample per (SU, PU) in SU-major order. Runs that consume a prefix of the
/// frame see exactly the same samples as runs that consume all of it.
pub struct PreambleGenerator<'a, R: Rng> {
    constellation: &'a Constellation,
    priors: &'a [[ChannelPrior; NUM_PU]],
    channels: &'a [[ChannelCoeff; NUM_PU]],
    hypothesis: Hypothesis,
    rng: R,
    step: PreambleStep,
}

impl<'a, R: Rng> PreambleGenerator<'a, R> {
    pub fn new(
        constellation: &'a Constellation,
        priors: &'a [[ChannelPrior; NUM_PU]],
        channels: &'a [[ChannelCoeff; NUM_PU]],
        hypothesis: Hypothesis,
        rng: R,
    ) -> Self {
        assert_eq!(priors.len(), channels.len());
        let zero = PilotSymbol::new(0.0, 0.0);
        PreambleGenerator {
            constellation,
            priors,
            channels,
            hypothesis,
            rng,
            step: PreambleStep {
                t: 0,
                pilots: [zero; NUM_PU],
                obs: vec![[RealObservationPair::default(); NUM_PU]; priors.len()],
            },
        }
    }

    pub fn next_step(&mut self) -> &PreambleStep {
        self.step.t += 1;
        for i in 0..NUM_PU {
            self.step.pilots[i] = gen_pilot(self.constellation, &mut self.rng);
        }
        for (k, row) in self.step.obs.iter_mut().enumerate() {
            for i in 0..NUM_PU {
                let p = &self.step.pilots[i];
                let y = observe(
                    self.hypothesis,
                    self.channels[k][i],
                    p,
                    &self.priors[k][i],
                    &mut self.rng,
                );
                row[i] = realify(y, p);
            }
        }
        &self.step
    }
}
