//! Fiber links: attenuation, group delay and chromatic dispersion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ensure, InvalidParameter};
use crate::units::{db_to_transmittance, fwhm_to_sigma, SPEED_OF_LIGHT, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispersionMode {
    /// Delay offset linear in the photon's detuning, scaled so that the
    /// per-photon spread has the configured FWHM.
    Lumped,
    /// Quadratic group delay around the zero-dispersion wavelength,
    /// `(slope/2)·L·(λ - λ0)²`.
    Analytic,
}

impl DispersionMode {
    pub fn name(self) -> &'static str {
        match self {
            DispersionMode::Lumped => "lumped",
            DispersionMode::Analytic => "analytic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "lumped" => Some(DispersionMode::Lumped),
            "analytic" => Some(DispersionMode::Analytic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberChannel {
    pub length_km: f64,
    pub loss_db: f64,
    pub group_index: f64,
    pub dispersion_mode: DispersionMode,
    pub lumped_jitter_fwhm_ps: f64,
    /// ps / (nm² · km)
    pub dispersion_slope: f64,
    pub zero_dispersion_wavelength_nm: f64,
}

impl Default for FiberChannel {
    fn default() -> Self {
        FiberChannel {
            length_km: 0.0,
            loss_db: 0.0,
            group_index: 1.468,
            dispersion_mode: DispersionMode::Lumped,
            lumped_jitter_fwhm_ps: 0.0,
            dispersion_slope: 0.09,
            zero_dispersion_wavelength_nm: 1310.0,
        }
    }
}

/// A photon entering a fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonInFlight {
    pub emission_ps: i64,
    pub wavelength_nm: f64,
    /// Detuning from the degenerate wavelength in units of the spectral
    /// sigma, signed (the two photons of a pair carry opposite signs).
    pub standardized_detuning: f64,
}

impl FiberChannel {
    pub fn validate(&self) -> Result<(), InvalidParameter> {
        ensure(self.length_km.is_finite() && self.length_km >= 0.0, "length_km", || {
            format!("must be >= 0, got {}", self.length_km)
        })?;
        ensure(self.loss_db.is_finite() && self.loss_db >= 0.0, "loss_db", || {
            format!("must be >= 0, got {}", self.loss_db)
        })?;
        ensure(self.group_index.is_finite() && self.group_index >= 1.0, "group_index", || {
            format!("must be >= 1, got {}", self.group_index)
        })?;
        ensure(self.lumped_jitter_fwhm_ps.is_finite() && self.lumped_jitter_fwhm_ps >= 0.0, "lumped_jitter_fwhm_ps", || {
            format!("must be >= 0, got {}", self.lumped_jitter_fwhm_ps)
        })?;
        ensure(self.dispersion_slope.is_finite(), "dispersion_slope", || "must be finite".into())?;
        ensure(
            self.zero_dispersion_wavelength_nm.is_finite() && self.zero_dispersion_wavelength_nm > 0.0,
            "zero_dispersion_wavelength_nm",
            || format!("must be > 0, got {}", self.zero_dispersion_wavelength_nm),
        )
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.loss_db)
    }

    /// `L·n_g/c` in picoseconds.
    pub fn nominal_delay_ps(&self) -> f64 {
        self.length_km * 1e3 * self.group_index / SPEED_OF_LIGHT * PS_PER_S
    }

    /// Chromatic part of the transit time, relative to the nominal delay.
    pub fn dispersion_offset_ps(&self, photon: &PhotonInFlight) -> f64 {
        match self.dispersion_mode {
            DispersionMode::Lumped => photon.standardized_detuning * fwhm_to_sigma(self.lumped_jitter_fwhm_ps),
            DispersionMode::Analytic => {
                let d = photon.wavelength_nm - self.zero_dispersion_wavelength_nm;
                0.5 * self.dispersion_slope * self.length_km * d * d
            }
        }
    }
}

/// Arrival time of a photon at the far end, or `None` if it is absorbed.
pub fn propagate<R: Rng + ?Sized>(channel: &FiberChannel, photon: &PhotonInFlight, rng: &mut R) -> Option<i64> {
    let t = channel.transmittance();
    if t < 1.0 && rng.random::<f64>() >= t {
        return None;
    }
    let transit = channel.nominal_delay_ps() + channel.dispersion_offset_ps(photon);
    Some(photon.emission_ps + transit.round() as i64)
}
