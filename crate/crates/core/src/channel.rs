//! Relay placement, path loss and Rayleigh block fading for the five links.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::sample_complex_gaussian;

/// Relays on the source–destination segment; distances are normalised to
/// `d_sd = 1`, so `d_rd,n = 1 - d_sr,n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Topology {
    source_relay: [f64; 2],
    path_loss_exponent: f64,
}

impl Topology {
    pub fn new(source_relay: [f64; 2], path_loss_exponent: f64) -> Result<Self> {
        for d in source_relay {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::invalid("d_sr", format!("relay distance must lie in (0, 1), got {d}")));
            }
        }
        if !(path_loss_exponent > 2.0 && path_loss_exponent.is_finite()) {
            return Err(Error::invalid("lambda", format!("path-loss exponent must exceed 2, got {path_loss_exponent}")));
        }
        Ok(Self {
            source_relay,
            path_loss_exponent,
        })
    }

    pub fn source_relay(&self) -> [f64; 2] {
        self.source_relay
    }

    pub fn relay_destination(&self) -> [f64; 2] {
        self.source_relay.map(|d| 1.0 - d)
    }

    pub fn path_loss_exponent(&self) -> f64 {
        self.path_loss_exponent
    }

    pub fn path_loss_gains(&self) -> PathLoss {
        let lambda = self.path_loss_exponent;
        PathLoss {
            source_relay: self.source_relay.map(|d| d.powf(lambda)),
            relay_destination: self.relay_destination().map(|d| d.powf(lambda)),
        }
    }
}

/// Relative gains `L_sr,n = d_sr,n^λ` and `L_rd,n = d_rd,n^λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub source_relay: [f64; 2],
    pub relay_destination: [f64; 2],
}

/// One block-fading draw; constant over the four slots of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingRealization {
    pub source_destination: Complex64,
    pub source_relay: [Complex64; 2],
    pub relay_destination: [Complex64; 2],
}

impl FadingRealization {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            source_destination: sample_complex_gaussian(1.0, rng),
            source_relay: [sample_complex_gaussian(1.0, rng), sample_complex_gaussian(1.0, rng)],
            relay_destination: [sample_complex_gaussian(1.0, rng), sample_complex_gaussian(1.0, rng)],
        }
    }

    /// `|h_sr,n|²`.
    pub fn sr_power(&self, n: usize) -> f64 {
        self.source_relay[n].norm_sqr()
    }

    /// `|h_rd,n|²`.
    pub fn rd_power(&self, n: usize) -> f64 {
        self.relay_destination[n].norm_sqr()
    }
}
