//! Closed-form resonator calculator for a two-mirror standing-wave cavity.
//!
//! All observables are derived from the mirror/length geometry and the
//! per-mirror loss budget. Finesse is never stored independently.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Mirror spacing, curvature, transverse degeneracy order and wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    /// Mirror spacing in meters.
    pub length: f64,
    /// Mirror radius of curvature in meters.
    pub mirror_radius: f64,
    /// Transverse-mode degeneracy order `p`.
    pub degeneracy_order: u32,
    /// Operating wavelength in meters.
    pub wavelength: f64,
}

impl CavityGeometry {
    /// Potassium D1 two-photon laser resonator: 5 cm mirrors, 1.464 cm spacing, p = 4, 770 nm.
    pub const fn reference() -> Self {
        Self {
            length: 0.01464,
            mirror_radius: 0.05,
            degeneracy_order: 4,
            wavelength: 770e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::constraint("cavity length must be positive"));
        }
        if !(self.mirror_radius > 0.0 && self.mirror_radius.is_finite()) {
            return Err(Error::constraint("mirror radius must be positive"));
        }
        if self.length >= 2.0 * self.mirror_radius {
            return Err(Error::constraint(
                "cavity length must be below twice the mirror radius (stable resonator)",
            ));
        }
        if self.degeneracy_order < 2 {
            return Err(Error::constraint("degeneracy order p must be at least 2"));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::constraint("wavelength must be positive"));
        }
        Ok(())
    }
}

/// Per-mirror transmission and parasitic loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityLoss {
    pub transmissivity: f64,
    pub absorption: f64,
}

impl CavityLoss {
    /// Manufacturer transmissivity with the ring-down loss estimate (no pinholes).
    pub const fn reference_bare() -> Self {
        Self {
            transmissivity: 2e-4,
            absorption: 4e-6,
        }
    }

    /// Loss budget reproducing the finesse measured with the intracavity pinholes in place.
    pub const fn reference_with_pinholes() -> Self {
        Self {
            transmissivity: 2e-4,
            absorption: 7.5e-6,
        }
    }

    pub fn total(&self) -> f64 {
        self.transmissivity + self.absorption
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.transmissivity;
        let a = self.absorption;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::constraint("transmissivity T must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&a) {
            return Err(Error::constraint("absorption A must lie in [0, 1)"));
        }
        if t + a >= 1.0 {
            return Err(Error::constraint("T + A must be below 1"));
        }
        Ok(())
    }
}

/// Derived resonator observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavitySummary {
    pub finesse: f64,
    /// Hz
    pub fsr: f64,
    /// Hz
    pub mode_linewidth_fwhm: f64,
    /// Field energy decay rate, s⁻¹.
    pub kappa: f64,
    /// Hz
    pub cluster_spacing: f64,
}

/// π/(T + A). Only the sum of the losses enters, so unit transmissivity is accepted here.
pub fn finesse(loss: &CavityLoss) -> Result<f64> {
    let total = loss.total();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("finesse needs a positive total loss T + A"));
    }
    Ok(PI / total)
}

/// c/2L in hertz.
pub fn free_spectral_range(geom: &CavityGeometry) -> f64 {
    SPEED_OF_LIGHT / (2.0 * geom.length)
}

/// FSR/ℱ in hertz.
pub fn mode_linewidth(geom: &CavityGeometry, loss: &CavityLoss) -> Result<f64> {
    Ok(free_spectral_range(geom) / finesse(loss)?)
}

/// κ = 2π·FSR/ℱ in s⁻¹.
pub fn decay_rate(geom: &CavityGeometry, loss: &CavityLoss) -> Result<f64> {
    Ok(2.0 * PI * mode_linewidth(geom, loss)?)
}

/// Both solutions of L = R[1 ± cos(π/p)], short branch first.
pub fn subconfocal_lengths(mirror_radius: f64, p: u32) -> (f64, f64) {
    let c = (PI / p as f64).cos();
    (mirror_radius * (1.0 - c), mirror_radius * (1.0 + c))
}

/// FSR/p in hertz. Accepts p = 1, for which this is the FSR itself.
pub fn cluster_spacing(geom: &CavityGeometry) -> f64 {
    free_spectral_range(geom) / geom.degeneracy_order as f64
}

pub fn photon_energy(geom: &CavityGeometry) -> f64 {
    PLANCK * SPEED_OF_LIGHT / geom.wavelength
}

/// Total power leaking through the transmissive channel of both mirrors, in watts.
///
/// n·(hc/λ)·κ·T/(T + A). The power leaving a single mirror is half of this.
pub fn photon_number_to_output_power(n: f64, geom: &CavityGeometry, loss: &CavityLoss) -> Result<f64> {
    if n < 0.0 {
        return Err(Error::invalid("photon number must be non-negative"));
    }
    let kappa = decay_rate(geom, loss)?;
    Ok(n * photon_energy(geom) * kappa * loss.transmissivity / loss.total())
}

pub fn summarize(geom: &CavityGeometry, loss: &CavityLoss) -> Result<CavitySummary> {
    geom.validate()?;
    loss.validate()?;
    let finesse = finesse(loss)?;
    let fsr = free_spectral_range(geom);
    let mode_linewidth_fwhm = fsr / finesse;
    Ok(CavitySummary {
        finesse,
        fsr,
        mode_linewidth_fwhm,
        kappa: 2.0 * PI * mode_linewidth_fwhm,
        cluster_spacing: cluster_spacing(geom),
    })
}

impl CavitySummary {
    fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("finesse", self.finesse),
            ("fsr_hz", self.fsr),
            ("linewidth_hz", self.mode_linewidth_fwhm),
            ("kappa_per_s", self.kappa),
            ("cluster_spacing_hz", self.cluster_spacing),
        ]
    }

    /// Single-line `key=value,key=value` record.
    pub fn to_record(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k}={v:e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for CavitySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k:<20} {v:.6e}")?;
        }
        Ok(())
    }
}
