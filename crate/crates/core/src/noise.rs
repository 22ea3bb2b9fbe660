//! Middleton Class-A impulsive noise.
//!
//! Conditioned on the Poisson impulse state `m`, a noise sample is circularly
//! symmetric complex Gaussian with variance `β_m N0`. The infinite mixture is
//! truncated to `M` states and the state probabilities are renormalised over
//! the retained states, so sampling and analytical sums see the same law.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Gaussian factor used for the AWGN reference case; every `β_m` is within
/// `~M/(A·1e9)` of one.
pub const AWGN_LIMIT_DELTA: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct McaParams {
    impulsive_index: f64,
    gaussian_factor: f64,
    truncation: usize,
    mean_power: f64,
    probabilities: Vec<f64>,
    variance_factors: Vec<f64>,
}

impl McaParams {
    pub fn new(impulsive_index: f64, gaussian_factor: f64, truncation: usize, mean_power: f64) -> Result<Self> {
        if !(impulsive_index > 0.0 && impulsive_index.is_finite()) {
            return Err(Error::invalid("A", format!("impulsive index must be > 0, got {impulsive_index}")));
        }
        if !(gaussian_factor > 0.0 && gaussian_factor.is_finite()) {
            return Err(Error::invalid("delta", format!("Gaussian factor must be > 0, got {gaussian_factor}")));
        }
        if truncation == 0 {
            return Err(Error::invalid("M", "truncation must keep at least one state"));
        }
        if !(mean_power > 0.0 && mean_power.is_finite()) {
            return Err(Error::invalid("N0", format!("mean noise power must be > 0, got {mean_power}")));
        }

        let raw: Vec<f64> = (0..truncation)
            .map(|m| raw_state_probability(impulsive_index, m))
            .collect();
        let total: f64 = raw.iter().sum();
        let probabilities = raw.iter().map(|p| p / total).collect();
        let variance_factors = (0..truncation)
            .map(|m| (m as f64 / impulsive_index + gaussian_factor) / (1.0 + gaussian_factor))
            .collect();

        Ok(Self {
            impulsive_index,
            gaussian_factor,
            truncation,
            mean_power,
            probabilities,
            variance_factors,
        })
    }

    /// Same impulse statistics at a different mean noise power.
    pub fn with_mean_power(&self, mean_power: f64) -> Result<Self> {
        Self::new(self.impulsive_index, self.gaussian_factor, self.truncation, mean_power)
    }

    pub fn impulsive_index(&self) -> f64 {
        self.impulsive_index
    }

    pub fn gaussian_factor(&self) -> f64 {
        self.gaussian_factor
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn mean_power(&self) -> f64 {
        self.mean_power
    }

    /// Renormalised `α_m`, `m = 0..M-1`.
    pub fn state_probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `β_m` for every retained state.
    pub fn variance_factors(&self) -> &[f64] {
        &self.variance_factors
    }

    /// `β_m = (m/A + δ)/(1 + δ)`.
    pub fn variance_factor(&self, m: usize) -> Result<f64> {
        self.variance_factors.get(m).copied().ok_or_else(|| {
            Error::domain("variance_factor", format!("state {m} outside 0..{}", self.truncation))
        })
    }

    /// `Σ α_m β_m N0`, the variance of the truncated mixture.
    pub fn mixture_variance(&self) -> f64 {
        self.mean_power
            * self
                .probabilities
                .iter()
                .zip(&self.variance_factors)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Density of a complex noise sample under the truncated mixture.
    pub fn pdf(&self, n: Complex64) -> f64 {
        let r2 = n.norm_sqr();
        self.probabilities
            .iter()
            .zip(&self.variance_factors)
            .map(|(a, b)| {
                let var = b * self.mean_power;
                a / (std::f64::consts::PI * var) * (-r2 / var).exp()
            })
            .sum()
    }

    /// Draws an impulse state from the renormalised `α` distribution.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return m;
            }
        }
        self.truncation - 1
    }

    /// Draws the frame's impulse states for `D`, `R1`, `R2`. States are held
    /// for all four slots of the frame.
    pub fn sample_frame_states<R: Rng + ?Sized>(&self, spatial: SpatialModel, rng: &mut R) -> FrameNoiseStates {
        match spatial {
            SpatialModel::Dependent => FrameNoiseStates::shared(self.sample_state(rng)),
            SpatialModel::Independent => FrameNoiseStates {
                destination: self.sample_state(rng),
                relays: [self.sample_state(rng), self.sample_state(rng)],
            },
        }
    }
}

/// Unnormalised Poisson weight `e^{-A} A^m / m!`.
pub fn raw_state_probability(impulsive_index: f64, m: usize) -> f64 {
    let mut p = (-impulsive_index).exp();
    for k in 1..=m {
        p *= impulsive_index / k as f64;
    }
    p
}

/// Zero-mean circularly-symmetric complex Gaussian with total variance
/// `variance` (half per dimension).
#[inline]
pub fn sample_complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let scale = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

/// One noise sample at a node in state `m` whose mean noise power is
/// `node_power`.
pub fn sample_noise<R: Rng + ?Sized>(params: &McaParams, m: usize, node_power: f64, rng: &mut R) -> Result<Complex64> {
    let beta = params.variance_factor(m)?;
    Ok(sample_complex_gaussian(beta * node_power, rng))
}

/// Frame-average variance factor used when the three nodes see different
/// impulse states: `(2(β_r1 + β_r2) + 4β_d)/8`.
pub fn mean_variance_factor(beta_destination: f64, beta_relay1: f64, beta_relay2: f64) -> f64 {
    (2.0 * (beta_relay1 + beta_relay2) + 4.0 * beta_destination) / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseEnvironment {
    HighlyImpulsive,
    ModeratelyImpulsive,
    NearGaussian,
    AwgnLimit,
}

impl NoiseEnvironment {
    pub const ALL: [NoiseEnvironment; 4] = [
        NoiseEnvironment::HighlyImpulsive,
        NoiseEnvironment::ModeratelyImpulsive,
        NoiseEnvironment::NearGaussian,
        NoiseEnvironment::AwgnLimit,
    ];

    /// `(A, δ)` of the preset.
    pub fn parameters(self) -> (f64, f64) {
        match self {
            NoiseEnvironment::HighlyImpulsive => (0.001, 0.1),
            NoiseEnvironment::ModeratelyImpulsive => (0.1, 0.1),
            NoiseEnvironment::NearGaussian => (1.0, 0.1),
            NoiseEnvironment::AwgnLimit => (1.0, AWGN_LIMIT_DELTA),
        }
    }

    pub fn params(self, truncation: usize, mean_power: f64) -> Result<McaParams> {
        let (a, delta) = self.parameters();
        McaParams::new(a, delta, truncation, mean_power)
    }

    pub fn tag(self) -> &'static str {
        match self {
            NoiseEnvironment::HighlyImpulsive => "HI",
            NoiseEnvironment::ModeratelyImpulsive => "MI",
            NoiseEnvironment::NearGaussian => "NG",
            NoiseEnvironment::AwgnLimit => "AWGN",
        }
    }
}

impl fmt::Display for NoiseEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NoiseEnvironment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HI" => Ok(NoiseEnvironment::HighlyImpulsive),
            "MI" => Ok(NoiseEnvironment::ModeratelyImpulsive),
            "NG" => Ok(NoiseEnvironment::NearGaussian),
            "AWGN" | "AWGN_LIMIT" => Ok(NoiseEnvironment::AwgnLimit),
            other => Err(Error::Config(format!("unknown noise environment `{other}` (expected HI, MI, NG or AWGN)"))),
        }
    }
}

/// Whether the relays and the destination share impulse states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SpatialModel {
    /// Model I: one state per frame shared by `R1`, `R2` and `D`.
    #[default]
    Dependent,
    /// Model II: independent states per node.
    Independent,
}

impl SpatialModel {
    pub fn tag(self) -> &'static str {
        match self {
            SpatialModel::Dependent => "model1",
            SpatialModel::Independent => "model2",
        }
    }
}

impl fmt::Display for SpatialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SpatialModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model1" | "i" | "dependent" => Ok(SpatialModel::Dependent),
            "model2" | "ii" | "independent" => Ok(SpatialModel::Independent),
            other => Err(Error::Config(format!("unknown spatial model `{other}` (expected model1 or model2)"))),
        }
    }
}

/// Impulse states of the destination and the two relays for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameNoiseStates {
    pub destination: usize,
    pub relays: [usize; 2],
}

impl FrameNoiseStates {
    pub fn shared(m: usize) -> Self {
        Self {
            destination: m,
            relays: [m, m],
        }
    }
}
