//! Field + inversion equations of motion for the two polarization modes.
//!
//! Internal units: time in microseconds, rates in μs⁻¹, field amplitudes in
//! √photons. Atomic coherences are adiabatically eliminated; they survive only
//! through the complex pathway lineshapes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathways::{lorentzian, pathway_detuning, PathwayId, PathwayTable, ZeemanEnvironment};

/// Instantaneous cavity field (two polarization amplitudes) and inversion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaserState {
    pub a_z: Complex64,
    pub a_x: Complex64,
    pub inversion: f64,
}

impl LaserState {
    pub fn off(inversion: f64) -> Self {
        Self {
            a_z: Complex64::new(0.0, 0.0),
            a_x: Complex64::new(0.0, 0.0),
            inversion,
        }
    }

    pub fn n_z(&self) -> f64 {
        self.a_z.norm_sqr()
    }

    pub fn n_x(&self) -> f64 {
        self.a_x.norm_sqr()
    }

    pub fn photon_number(&self) -> f64 {
        self.n_z() + self.n_x()
    }

    pub(crate) fn to_array(self) -> [f64; 5] {
        [self.a_z.re, self.a_z.im, self.a_x.re, self.a_x.im, self.inversion]
    }

    pub(crate) fn from_array(y: &[f64; 5]) -> Self {
        Self {
            a_z: Complex64::new(y[0], y[1]),
            a_x: Complex64::new(y[2], y[3]),
            inversion: y[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub d_a_z: Complex64,
    pub d_a_x: Complex64,
    pub d_inversion: f64,
}

impl Derivative {
    pub fn is_finite(&self) -> bool {
        self.d_a_z.is_finite() && self.d_a_x.is_finite() && self.d_inversion.is_finite()
    }
}

/// Full set of model coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Cavity field energy decay rate κ, μs⁻¹.
    pub kappa: f64,
    /// Two-photon gain coefficient per unit inversion, μs⁻¹ per photon.
    pub gain: f64,
    /// Saturation photon number n_s.
    pub sat_photons: f64,
    /// Inversion pump rate, μs⁻¹.
    pub pump: f64,
    /// Inversion relaxation rate γ, μs⁻¹.
    pub inversion_decay: f64,
    /// Effective number of atoms sharing the inversion.
    pub atoms: f64,
    pub pathways: PathwayTable,
    pub zeeman: ZeemanEnvironment,
    /// Raman coherence time T₂, μs.
    pub coherence_time: f64,
    /// Weight of the phase-sensitive cross terms; geometric mean of the ZX/XZ weights when unset.
    pub coherent_weight: Option<f64>,
    /// Phase of the phase-sensitive cross terms, radians.
    pub coherent_phase: f64,
    /// Fraction of each same-polarization pathway's half-detuning that pulls
    /// the corresponding mode frequency.
    pub mode_pulling: f64,
    /// Cavity detuning from the zero-field two-photon resonance, MHz.
    pub cavity_detuning_mhz: f64,
    /// Spontaneous seeding rate, photons per μs per mode.
    pub seed_rate: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 4.249_107_584_357_923,
            gain: 1.0e-5,
            sat_photons: 8.0e5,
            pump: 20.0,
            inversion_decay: 20.0,
            atoms: 7.0e6,
            pathways: PathwayTable::default(),
            zeeman: ZeemanEnvironment::default(),
            coherence_time: 1.0 / (PI * 6.0),
            coherent_weight: None,
            coherent_phase: 0.0,
            mode_pulling: 0.0,
            cavity_detuning_mhz: 0.0,
            seed_rate: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::constraint(format!("{name} must be positive (got {v})")))
            }
        };
        let non_negative = |v: f64, name: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::constraint(format!("{name} must be non-negative (got {v})")))
            }
        };
        positive(self.kappa, "kappa")?;
        positive(self.gain, "gain")?;
        positive(self.sat_photons, "sat_photons")?;
        positive(self.inversion_decay, "inversion_decay")?;
        positive(self.atoms, "atoms")?;
        positive(self.coherence_time, "coherence_time")?;
        non_negative(self.pump, "pump")?;
        non_negative(self.seed_rate, "seed_rate")?;
        if let Some(w) = self.coherent_weight {
            non_negative(w, "coherent_weight")?;
        }
        for (v, name) in [
            (self.coherent_phase, "coherent_phase"),
            (self.mode_pulling, "mode_pulling"),
            (self.cavity_detuning_mhz, "cavity_detuning"),
        ] {
            if !v.is_finite() {
                return Err(Error::constraint(format!("{name} must be finite")));
            }
        }
        self.zeeman.validate()
    }

    /// Inversion the pump sustains with no light in the cavity.
    pub fn off_state_inversion(&self) -> f64 {
        self.pump / (self.pump + self.inversion_decay)
    }

    pub fn effective_coherent_weight(&self) -> f64 {
        self.coherent_weight.unwrap_or_else(|| {
            (self.pathways.get(PathwayId::ZX).weight * self.pathways.get(PathwayId::XZ).weight).sqrt()
        })
    }

    /// Precomputes lineshapes and mode frequencies for repeated evaluation.
    pub fn coefficients(&self) -> Coefficients {
        let t2_s = self.coherence_time * 1e-6;
        let line = |id| {
            let p = self.pathways.get(id);
            (p.weight, lorentzian(pathway_detuning(p, &self.zeeman), t2_s))
        };
        let (w_zz, l_zz) = line(PathwayId::ZZ);
        let (w_zx, l_zx) = line(PathwayId::ZX);
        let (w_xz, l_xz) = line(PathwayId::XZ);
        let (w_xx, l_xx) = line(PathwayId::XX);
        let coherent = Complex64::from_polar(self.effective_coherent_weight(), self.coherent_phase);
        // angular frequency offsets, rad/μs
        let shift = |id| {
            let half_detuning_mhz = 0.5 * pathway_detuning(self.pathways.get(id), &self.zeeman) * 1e-6;
            2.0 * PI * (self.cavity_detuning_mhz + self.mode_pulling * half_detuning_mhz)
        };
        Coefficients {
            half_kappa: 0.5 * self.kappa,
            gain: self.gain,
            sat_photons: self.sat_photons,
            pump: self.pump,
            inversion_decay: self.inversion_decay,
            atoms: self.atoms,
            omega_z: shift(PathwayId::ZZ),
            omega_x: shift(PathwayId::XX),
            self_z: l_zz * w_zz,
            cross_z: l_zx * w_zx,
            coherent_z: l_zx * coherent,
            self_x: l_xx * w_xx,
            cross_x: l_xz * w_xz,
            coherent_x: l_xz * coherent,
        }
    }
}

/// Evaluation-ready coefficients derived from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub half_kappa: f64,
    pub gain: f64,
    pub sat_photons: f64,
    pub pump: f64,
    pub inversion_decay: f64,
    pub atoms: f64,
    pub omega_z: f64,
    pub omega_x: f64,
    pub self_z: Complex64,
    pub cross_z: Complex64,
    pub coherent_z: Complex64,
    pub self_x: Complex64,
    pub cross_x: Complex64,
    pub coherent_x: Complex64,
}

/// Gain contributions to each mode's field derivative, before cavity loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTerms {
    pub z: Complex64,
    pub x: Complex64,
}

impl GainTerms {
    /// Total real photon emission rate, photons/μs.
    pub fn emission_rate(&self, s: &LaserState) -> f64 {
        2.0 * (s.a_z.conj() * self.z).re + 2.0 * (s.a_x.conj() * self.x).re
    }
}

impl Coefficients {
    pub fn gain_terms(&self, s: &LaserState) -> GainTerms {
        let (az, ax) = (s.a_z, s.a_x);
        let nz = az.norm_sqr();
        let nx = ax.norm_sqr();
        let ratio = (nz + nx) / self.sat_photons;
        let f = self.gain * s.inversion / (1.0 + ratio * ratio);
        GainTerms {
            z: (self.self_z * nz * az + self.cross_z * nx * az + self.coherent_z * ax * ax * az.conj()) * f,
            x: (self.self_x * nx * ax + self.cross_x * nz * ax + self.coherent_x * az * az * ax.conj()) * f,
        }
    }

    /// `pump_on = false` switches the inversion pump off (blocked pump beam).
    pub fn rhs(&self, s: &LaserState, injection: [Complex64; 2], pump_on: bool) -> Derivative {
        let g = self.gain_terms(s);
        let i = Complex64::i();
        let d_a_z = -(self.half_kappa + i * self.omega_z) * s.a_z + g.z + injection[0];
        let d_a_x = -(self.half_kappa + i * self.omega_x) * s.a_x + g.x + injection[1];
        let pump = if pump_on { self.pump } else { 0.0 };
        // net two-photon absorption can only promote atoms that are not yet inverted
        let emission = g.emission_rate(s);
        let backaction = if emission >= 0.0 { emission } else { emission * (1.0 - s.inversion) };
        let d_inversion =
            pump * (1.0 - s.inversion) - self.inversion_decay * s.inversion - backaction / (2.0 * self.atoms);
        Derivative {
            d_a_z,
            d_a_x,
            d_inversion,
        }
    }
}

/// Field and inversion time derivatives at `state` with per-mode coherent drive `injection`.
///
/// `_t` is accepted for interface symmetry with time-dependent drives; the
/// model itself is autonomous.
pub fn rhs(state: &LaserState, params: &ModelParams, _t: f64, injection: [Complex64; 2]) -> Derivative {
    params.coefficients().rhs(state, injection, true)
}

/// 2·G·D·n²/(1 + (n/n_s)²): photons are added in pairs.
pub fn two_photon_gain_rate(n: f64, inversion: f64, params: &ModelParams) -> f64 {
    let r = n / params.sat_photons;
    2.0 * params.gain * inversion * n * n / (1.0 + r * r)
}

/// Single-mode (z-polarized) effective gain coefficient G·c_ZZ·Re L_ZZ.
pub fn single_mode_gain(params: &ModelParams) -> f64 {
    let c = params.coefficients();
    params.gain * c.self_z.re
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdOutcome {
    /// Clamped inversion below D_min; only the off state exists.
    NoOnState,
    /// Both nonzero roots of the gain–loss balance.
    Bistable { n_unstable: f64, n_on: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdAnalysis {
    /// Inversion at which the unstable and on roots merge (at n = n_s).
    pub d_min: f64,
    pub outcome: ThresholdOutcome,
}

/// Roots of κ/2 = G·D·n/(1 + (n/n_s)²) for the single-mode reduction at clamped inversion.
pub fn threshold_analysis(params: &ModelParams, clamped_inversion: f64) -> Result<ThresholdAnalysis> {
    if !(clamped_inversion > 0.0 && clamped_inversion <= 1.0) {
        return Err(Error::invalid("clamped inversion must lie in (0, 1]"));
    }
    let g = single_mode_gain(params);
    if !(g > 0.0) {
        return Err(Error::invalid("single-mode gain must be positive"));
    }
    let ns = params.sat_photons;
    let d_min = params.kappa / (g * ns);
    let a = clamped_inversion / d_min * 2.0;
    let disc = a * a - 4.0;
    let outcome = if disc < 0.0 {
        ThresholdOutcome::NoOnState
    } else {
        let s = disc.sqrt();
        // x_lo · x_hi = 1; the small root via the product avoids cancellation
        let x_hi = 0.5 * (a + s);
        ThresholdOutcome::Bistable {
            n_unstable: ns / x_hi,
            n_on: ns * x_hi,
        }
    };
    Ok(ThresholdAnalysis { d_min, outcome })
}

/// Steady inversion reached while `n` photons are sustained against loss κ:
/// (P − κ·n/(2N)) / (P + γ).
pub fn loaded_inversion(params: &ModelParams, n: f64) -> f64 {
    (params.pump - params.kappa * n / (2.0 * params.atoms)) / (params.pump + params.inversion_decay)
}

/// Nonzero steady photon numbers of the z-polarized reduction with the pump on
/// and the inversion following the photon number (backaction included).
///
/// Roots of g·D(n)·n/(1 + (n/n_s)²) = κ/2 with D(n) from [`loaded_inversion`],
/// bracketed on a logarithmic grid and refined by bisection. Ascending order.
pub fn single_mode_fixed_points(params: &ModelParams) -> Vec<f64> {
    let g = single_mode_gain(params);
    let ns = params.sat_photons;
    let h = |n: f64| g * loaded_inversion(params, n) * n / (1.0 + (n / ns).powi(2)) - 0.5 * params.kappa;
    let n_max = 2.0 * params.atoms * params.pump / params.kappa;
    if !(n_max > 1.0) {
        return Vec::new();
    }
    let steps = 4000;
    let ratio = n_max.ln() / steps as f64;
    let mut roots = Vec::new();
    let mut a = 1.0;
    let mut ha = h(a);
    for i in 1..=steps {
        let b = (i as f64 * ratio).exp();
        let hb = h(b);
        if ha.signum() != hb.signum() {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if h(mid).signum() == ha.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        ha = hb;
    }
    roots
}
