//! Photon and detection-threshold energy arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant in J s (exact SI value).
pub const PLANCK: f64 = 6.62607015e-34;
/// Fractional step from threshold to just-noticeable increment.
pub const SHA_FRACTION: f64 = 0.04;
/// Single-photon detection probability and its uncertainty.
pub const TINSLEY_PROBABILITY: (f64, f64) = (0.516, 0.010);
/// Frequency used for the visual-threshold comparison, in Hz.
pub const REFERENCE_FREQUENCY: f64 = 5.88e14;
/// Human threshold energy range, in J.
pub const HSP_RANGE: (f64, f64) = (2.1e-17, 5.7e-17);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonSpec {
    pub nu: f64,
    #[serde(default = "planck")]
    pub h: f64,
}

fn planck() -> f64 {
    PLANCK
}

impl PhotonSpec {
    pub fn new(nu: f64) -> Result<Self> {
        Self::with_h(nu, PLANCK)
    }

    pub fn with_h(nu: f64, h: f64) -> Result<Self> {
        if !(nu > 0.0 && h > 0.0 && nu.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput(format!("need nu > 0 and h > 0, got {nu}, {h}")));
        }
        Ok(Self { nu, h })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRange {
    pub low: f64,
    pub high: f64,
}

impl EnergyRange {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return Err(Error::InvalidInput(format!("need 0 < low <= high, got {low}, {high}")));
        }
        Ok(Self { low, high })
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

pub fn photon_energy(spec: &PhotonSpec) -> f64 {
    spec.h * spec.nu
}

pub fn sha_gap(threshold: f64) -> f64 {
    SHA_FRACTION * threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HspReport {
    #[serde(rename = "E_photon")]
    pub e_photon: f64,
    #[serde(rename = "E_HSP_mean")]
    pub mean: f64,
    pub gap: f64,
    pub ratio: f64,
}

pub fn hsp_estimate(range: &EnergyRange, photon: &PhotonSpec) -> HspReport {
    let mean = range.mean();
    let gap = sha_gap(mean);
    let e_photon = photon_energy(photon);
    HspReport {
        e_photon,
        mean,
        gap,
        ratio: gap / e_photon,
    }
}

pub fn reference_estimate() -> HspReport {
    let range = EnergyRange::new(HSP_RANGE.0, HSP_RANGE.1).expect("valid constant range");
    let photon = PhotonSpec::new(REFERENCE_FREQUENCY).expect("valid constant frequency");
    hsp_estimate(&range, &photon)
}
