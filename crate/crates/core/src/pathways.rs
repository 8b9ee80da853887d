//! The four frequency-degenerate hyper-Raman pathways from |g22⟩ to the
//! |g1M⟩ manifold, their magnetic detunings, and the emitted photon-pair state.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    Z,
    X,
}

/// Pathway label: polarizations of the first and second emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathwayId {
    ZZ,
    ZX,
    XZ,
    XX,
}

impl PathwayId {
    pub const ALL: [PathwayId; 4] = [PathwayId::ZZ, PathwayId::ZX, PathwayId::XZ, PathwayId::XX];

    pub fn pair(self) -> (Polarization, Polarization) {
        use Polarization::*;
        match self {
            PathwayId::ZZ => (Z, Z),
            PathwayId::ZX => (Z, X),
            PathwayId::XZ => (X, Z),
            PathwayId::XX => (X, X),
        }
    }

    fn index(self) -> usize {
        match self {
            PathwayId::ZZ => 0,
            PathwayId::ZX => 1,
            PathwayId::XZ => 2,
            PathwayId::XX => 3,
        }
    }
}

impl fmt::Display for PathwayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PathwayId::ZZ => "ZZ",
            PathwayId::ZX => "ZX",
            PathwayId::XZ => "XZ",
            PathwayId::XX => "XX",
        };
        f.write_str(s)
    }
}

impl FromStr for PathwayId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ZZ" => Ok(PathwayId::ZZ),
            "ZX" => Ok(PathwayId::ZX),
            "XZ" => Ok(PathwayId::XZ),
            "XX" => Ok(PathwayId::XX),
            other => Err(Error::invalid(format!("unknown pathway id `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwaySpec {
    pub id: PathwayId,
    /// Relative coupling weight `c`.
    pub weight: f64,
    /// Detuning slope in units of the base Zeeman shift per gauss.
    pub zeeman_slope: i32,
    /// Final ground sublevel, for documentation only.
    pub final_state_label: String,
}

impl PathwaySpec {
    pub fn pair_polarizations(&self) -> (Polarization, Polarization) {
        self.id.pair()
    }
}

/// Exactly one [`PathwaySpec`] per pathway id, stored in ZZ, ZX, XZ, XX order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayTable {
    rows: [PathwaySpec; 4],
}

impl Default for PathwayTable {
    /// Equal weights; cross-polarized pairs detune at the base rate, the
    /// x-polarized pair at twice the base rate.
    fn default() -> Self {
        let row = |id, zeeman_slope, label: &str| PathwaySpec {
            id,
            weight: 1.0,
            zeeman_slope,
            final_state_label: label.to_string(),
        };
        Self {
            rows: [
                row(PathwayId::ZZ, 0, "|g1 0>"),
                row(PathwayId::ZX, 1, "|g1 -1>"),
                row(PathwayId::XZ, -1, "|g1 +1>"),
                row(PathwayId::XX, 2, "|g1 0>"),
            ],
        }
    }
}

impl PathwayTable {
    /// Builds a table from four rows in any order; every id must appear once.
    pub fn from_rows(rows: Vec<PathwaySpec>) -> Result<Self> {
        if rows.len() != 4 {
            return Err(Error::constraint(format!(
                "pathway table needs exactly four rows, got {}",
                rows.len()
            )));
        }
        let mut slots: [Option<PathwaySpec>; 4] = Default::default();
        for row in rows {
            if !(row.weight >= 0.0 && row.weight.is_finite()) {
                return Err(Error::constraint(format!(
                    "pathway {} weight must be non-negative",
                    row.id
                )));
            }
            let i = row.id.index();
            if slots[i].is_some() {
                return Err(Error::constraint(format!("pathway {} listed twice", row.id)));
            }
            slots[i] = Some(row);
        }
        let [a, b, c, d] = slots;
        Ok(Self {
            rows: [a.unwrap(), b.unwrap(), c.unwrap(), d.unwrap()],
        })
    }

    pub fn get(&self, id: PathwayId) -> &PathwaySpec {
        &self.rows[id.index()]
    }

    pub fn get_mut(&mut self, id: PathwayId) -> &mut PathwaySpec {
        &mut self.rows[id.index()]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PathwaySpec> {
        self.rows.iter()
    }

    /// Every row detunes identically with field, so the z↔x exchange is a symmetry.
    pub fn is_polarization_symmetric(&self) -> bool {
        let zz = self.get(PathwayId::ZZ);
        let xx = self.get(PathwayId::XX);
        let zx = self.get(PathwayId::ZX);
        let xz = self.get(PathwayId::XZ);
        zz.weight == xx.weight && zx.weight == xz.weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanEnvironment {
    /// Magnetic field in gauss.
    pub field: f64,
    /// Shift per unit slope, in MHz per gauss.
    pub base_shift_mhz_per_gauss: f64,
}

impl Default for ZeemanEnvironment {
    fn default() -> Self {
        Self {
            field: 0.0,
            base_shift_mhz_per_gauss: 0.7,
        }
    }
}

impl ZeemanEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_shift_mhz_per_gauss > 0.0) || !self.base_shift_mhz_per_gauss.is_finite() {
            return Err(Error::constraint("base Zeeman shift rate must be positive"));
        }
        if !self.field.is_finite() {
            return Err(Error::constraint("magnetic field must be finite"));
        }
        Ok(())
    }
}

/// Pathway detuning in hertz: slope · base rate · B.
pub fn pathway_detuning(p: &PathwaySpec, env: &ZeemanEnvironment) -> f64 {
    p.zeeman_slope as f64 * env.base_shift_mhz_per_gauss * 1e6 * env.field
}

/// Complex Lorentzian 1/(1 + i·2π·δ·T₂) with T₂ in seconds.
pub fn pathway_lineshape(p: &PathwaySpec, env: &ZeemanEnvironment, coherence_time: f64) -> Complex64 {
    lorentzian(pathway_detuning(p, env), coherence_time)
}

pub(crate) fn lorentzian(detuning_hz: f64, coherence_time: f64) -> Complex64 {
    Complex64::new(1.0, 2.0 * PI * detuning_hz * coherence_time).inv()
}

/// T₂ = 1/(π·Δν) for a homogeneous FWHM linewidth Δν in hertz.
pub fn coherence_time_from_linewidth(linewidth_hz: f64) -> f64 {
    1.0 / (PI * linewidth_hz)
}

/// Emission amplitudes of the four pathways after lineshape suppression.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathwayAmplitudes {
    pub zz: Complex64,
    pub zx: Complex64,
    pub xz: Complex64,
    pub xx: Complex64,
}

impl PathwayAmplitudes {
    /// Weight × lineshape for each pathway of `table` in environment `env`.
    pub fn from_table(table: &PathwayTable, env: &ZeemanEnvironment, coherence_time: f64) -> Self {
        let amp = |id| {
            let p = table.get(id);
            pathway_lineshape(p, env, coherence_time) * p.weight
        };
        Self {
            zz: amp(PathwayId::ZZ),
            zx: amp(PathwayId::ZX),
            xz: amp(PathwayId::XZ),
            xx: amp(PathwayId::XX),
        }
    }
}

/// α₁α₂|zz⟩ + β₁β₂|xx⟩, normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub amp_zz: Complex64,
    pub amp_xx: Complex64,
}

/// The normalized pair state plus the weight of the suppressed cross pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStateReport {
    pub state: PairState,
    /// (|zx|² + |xz|²) / (|zz|² + |xx|²) before normalization.
    pub cross_pair_fraction: f64,
}

pub fn build_pair_state(amps: &PathwayAmplitudes) -> Result<PairStateReport> {
    let norm_sqr = amps.zz.norm_sqr() + amps.xx.norm_sqr();
    if !(norm_sqr > 0.0) || !norm_sqr.is_finite() {
        return Err(Error::invalid(
            "pair state needs a non-zero zz or xx amplitude",
        ));
    }
    let norm = norm_sqr.sqrt();
    Ok(PairStateReport {
        state: PairState {
            amp_zz: amps.zz / norm,
            amp_xx: amps.xx / norm,
        },
        cross_pair_fraction: (amps.zx.norm_sqr() + amps.xz.norm_sqr()) / norm_sqr,
    })
}

/// Concurrence of the pure pair state, 2·|amp_zz|·|amp_xx|.
pub fn concurrence(s: &PairState) -> f64 {
    2.0 * s.amp_zz.norm() * s.amp_xx.norm()
}
