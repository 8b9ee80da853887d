//! Scenario files, calibration of the gain model, and parameter scans.
//!
//! Scenario files are TOML with unit-suffixed keys. Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    autocorrelation_drop_time, dominant_period, modulation_depth, polarizer_projection, spectral_flatness,
};
use crate::cavity::{self, CavityGeometry, CavityLoss};
use crate::dynamics::{loaded_inversion, single_mode_fixed_points, single_mode_gain, LaserState, ModelParams};
use crate::error::{Error, Result};
use crate::integrator::{
    integrate_with, Event, EventSchedule, IntegrationOptions, PulseReference, TimeSeries, Trajectory, TriggerPulse,
};
use crate::pathways::{PathwayId, PathwaySpec, PathwayTable, ZeemanEnvironment};

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavitySection {
    pub length_cm: f64,
    pub mirror_radius_cm: f64,
    pub degeneracy_order: u32,
    pub wavelength_nm: f64,
    pub transmissivity: f64,
    pub absorption: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        let g = CavityGeometry::reference();
        let l = CavityLoss::reference_with_pinholes();
        Self {
            length_cm: g.length * 100.0,
            mirror_radius_cm: g.mirror_radius * 100.0,
            degeneracy_order: g.degeneracy_order,
            wavelength_nm: g.wavelength * 1e9,
            transmissivity: l.transmissivity,
            absorption: l.absorption,
        }
    }
}

impl CavitySection {
    pub fn geometry(&self) -> CavityGeometry {
        CavityGeometry {
            length: self.length_cm * 1e-2,
            mirror_radius: self.mirror_radius_cm * 1e-2,
            degeneracy_order: self.degeneracy_order,
            wavelength: self.wavelength_nm * 1e-9,
        }
    }

    pub fn loss(&self) -> CavityLoss {
        CavityLoss {
            transmissivity: self.transmissivity,
            absorption: self.absorption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ModelSection {
    /// Overrides the decay rate derived from `[cavity]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_per_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_per_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sat_photons: Option<f64>,
    pub pump_per_us: f64,
    pub inversion_decay_per_us: f64,
    pub atoms: f64,
    pub linewidth_MHz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_weight: Option<f64>,
    pub coherent_phase_rad: f64,
    pub mode_pulling: f64,
    pub cavity_detuning_MHz: f64,
    pub seed_rate_per_us: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kappa_per_us: None,
            gain_per_us: None,
            sat_photons: None,
            pump_per_us: 20.0,
            inversion_decay_per_us: 20.0,
            atoms: 7.0e6,
            linewidth_MHz: 6.0,
            coherent_weight: None,
            coherent_phase_rad: 0.0,
            mode_pulling: 0.0,
            cavity_detuning_MHz: 0.0,
            seed_rate_per_us: 0.0,
        }
    }
}

/// Observables the gain coefficient and saturation photon number are fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Steady on-state photon number.
    pub on_photons: f64,
    /// Unstable (trigger-threshold) photon number.
    pub unstable_photons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ZeemanSection {
    pub field_G: f64,
    pub base_shift_MHz_per_G: f64,
}

impl Default for ZeemanSection {
    fn default() -> Self {
        let z = ZeemanEnvironment::default();
        Self {
            field_G: z.field,
            base_shift_MHz_per_G: z.base_shift_mhz_per_gauss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwayRow {
    /// Coupling weight.
    pub c: f64,
    /// Zeeman slope.
    pub s: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathwaysSection {
    #[serde(rename = "ZZ")]
    pub zz: PathwayRow,
    #[serde(rename = "ZX")]
    pub zx: PathwayRow,
    #[serde(rename = "XZ")]
    pub xz: PathwayRow,
    #[serde(rename = "XX")]
    pub xx: PathwayRow,
}

impl Default for PathwaysSection {
    fn default() -> Self {
        let t = PathwayTable::default();
        let row = |id| {
            let p = t.get(id);
            PathwayRow {
                c: p.weight,
                s: p.zeeman_slope,
            }
        };
        Self {
            zz: row(PathwayId::ZZ),
            zx: row(PathwayId::ZX),
            xz: row(PathwayId::XZ),
            xx: row(PathwayId::XX),
        }
    }
}

impl PathwaysSection {
    pub fn table(&self) -> Result<PathwayTable> {
        let defaults = PathwayTable::default();
        let rows = [
            (PathwayId::ZZ, self.zz),
            (PathwayId::ZX, self.zx),
            (PathwayId::XZ, self.xz),
            (PathwayId::XX, self.xx),
        ]
        .into_iter()
        .map(|(id, r)| PathwaySpec {
            id,
            weight: r.c,
            zeeman_slope: r.s,
            final_state_label: defaults.get(id).final_state_label.clone(),
        })
        .collect();
        PathwayTable::from_rows(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "is_default")]
    pub re_az: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub im_az: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub re_ax: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub im_ax: f64,
    /// Defaults to the pump-sustained off-state inversion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub D: Option<f64>,
}

fn default_jones() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[allow(non_snake_case)]
pub enum EventSection {
    Pulse {
        t_start_us: f64,
        duration_us: f64,
        n_inj: f64,
        /// (re z, im z, re x, im x).
        #[serde(default = "default_jones")]
        jones: [f64; 4],
        #[serde(default, skip_serializing_if = "is_default")]
        carrier_detuning_MHz: f64,
        #[serde(default, skip_serializing_if = "is_default")]
        reference: PulseReference,
    },
    PumpBlock {
        start_us: f64,
        duration_us: f64,
    },
    FieldStep {
        t_us: f64,
        field_G: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Polarizer angle from ẑ.
    pub polarizer_deg: f64,
    /// Start of the stationary window used for metrics.
    pub window_start_us: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            polarizer_deg: 0.0,
            window_start_us: 0.0,
        }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub t_end_us: f64,
    #[serde(default = "default_sample_period")]
    pub sample_period_us: f64,
    #[serde(default)]
    pub cavity: CavitySection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTargets>,
    #[serde(default)]
    pub zeeman: ZeemanSection,
    #[serde(default)]
    pub pathways: PathwaysSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default, rename = "event", skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventSection>,
}

fn default_sample_period() -> f64 {
    0.005
}

/// Fully validated scenario with all derived quantities resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub geometry: CavityGeometry,
    pub loss: CavityLoss,
    pub params: ModelParams,
    pub schedule: EventSchedule,
    pub initial: LaserState,
    pub t_end: f64,
    pub sample_period: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Deserialize without resolving, so callers can patch sections first.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    Scenario::from_file(parse_scenario_file(text)?)
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let geometry = file.cavity.geometry();
        let loss = file.cavity.loss();
        geometry.validate()?;
        loss.validate()?;
        let m = &file.model;
        let kappa = match m.kappa_per_us {
            Some(k) => k,
            None => cavity::decay_rate(&geometry, &loss)? * 1e-6,
        };
        if !(file.t_end_us > 0.0) || !file.t_end_us.is_finite() {
            return Err(Error::constraint("t_end_us must be positive"));
        }
        if !(file.sample_period_us > 0.0) || !file.sample_period_us.is_finite() {
            return Err(Error::constraint("sample_period_us must be positive"));
        }
        if !(m.linewidth_MHz > 0.0) || !m.linewidth_MHz.is_finite() {
            return Err(Error::constraint("linewidth_MHz must be positive"));
        }
        let mut params = ModelParams {
            kappa,
            gain: m.gain_per_us.unwrap_or(f64::NAN),
            sat_photons: m.sat_photons.unwrap_or(f64::NAN),
            pump: m.pump_per_us,
            inversion_decay: m.inversion_decay_per_us,
            atoms: m.atoms,
            pathways: file.pathways.table()?,
            zeeman: ZeemanEnvironment {
                field: file.zeeman.field_G,
                base_shift_mhz_per_gauss: file.zeeman.base_shift_MHz_per_G,
            },
            coherence_time: 1.0 / (PI * m.linewidth_MHz),
            coherent_weight: m.coherent_weight,
            coherent_phase: m.coherent_phase_rad,
            mode_pulling: m.mode_pulling,
            cavity_detuning_mhz: m.cavity_detuning_MHz,
            seed_rate: m.seed_rate_per_us,
        };
        match (file.calibration, m.gain_per_us, m.sat_photons) {
            (Some(t), None, None) => {
                let c = calibrate(&params, &t)?;
                params.gain = c.gain;
                params.sat_photons = c.sat_photons;
            }
            (Some(_), _, _) => {
                return Err(Error::constraint(
                    "give either [calibration] or gain_per_us and sat_photons, not both",
                ))
            }
            (None, Some(_), Some(_)) => {}
            (None, _, _) => {
                return Err(Error::constraint(
                    "gain_per_us and sat_photons are required when there is no [calibration] section",
                ))
            }
        }
        params.validate()?;

        let mut events = Vec::with_capacity(file.events.len());
        for e in &file.events {
            events.push(match *e {
                EventSection::Pulse {
                    t_start_us,
                    duration_us,
                    n_inj,
                    jones,
                    carrier_detuning_MHz,
                    reference,
                } => Event::Pulse(TriggerPulse {
                    t_start: t_start_us,
                    duration: duration_us,
                    injected_photons: n_inj,
                    polarization: [Complex64::new(jones[0], jones[1]), Complex64::new(jones[2], jones[3])],
                    carrier_detuning_mhz: carrier_detuning_MHz,
                    reference,
                }),
                EventSection::PumpBlock { start_us, duration_us } => Event::PumpBlock {
                    start: start_us,
                    duration: duration_us,
                },
                EventSection::FieldStep { t_us, field_G } => Event::FieldStep { t: t_us, field: field_G },
            });
        }
        let schedule = EventSchedule::new(events)?;
        let init = file.initial.clone().unwrap_or_default();
        let initial = LaserState {
            a_z: Complex64::new(init.re_az, init.im_az),
            a_x: Complex64::new(init.re_ax, init.im_ax),
            inversion: init.D.unwrap_or_else(|| params.off_state_inversion()),
        };
        if !(0.0..=1.0).contains(&initial.inversion) {
            return Err(Error::constraint("initial D must lie in [0, 1]"));
        }
        if ![initial.a_z, initial.a_x].iter().all(|a| a.is_finite()) {
            return Err(Error::constraint("initial field amplitudes must be finite"));
        }
        if !(file.analysis.window_start_us >= 0.0) || !file.analysis.polarizer_deg.is_finite() {
            return Err(Error::constraint("analysis window must start at t >= 0"));
        }
        Ok(Self {
            t_end: file.t_end_us,
            sample_period: file.sample_period_us,
            file,
            geometry,
            loss,
            params,
            schedule,
            initial,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario files always serialize")
    }

    pub fn polarizer_angle(&self) -> f64 {
        self.file.analysis.polarizer_deg.to_radians()
    }

    pub fn run(&self, opts: &IntegrationOptions) -> Result<Trajectory> {
        integrate_with(self.initial, &self.params, &self.schedule, self.t_end, self.sample_period, opts)
    }

    /// Plain-text record of every resolved parameter.
    pub fn manifest(&self, opts: &IntegrationOptions) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "twophoton {}", env!("CARGO_PKG_VERSION"));
        if let Some(n) = &self.file.name {
            let _ = writeln!(s, "name = {n}");
        }
        let _ = writeln!(s, "t_end_us = {}", self.t_end);
        let _ = writeln!(s, "sample_period_us = {}", self.sample_period);
        let _ = writeln!(s, "rtol = {}", opts.tolerances.rel);
        let _ = writeln!(s, "atol = {}", opts.tolerances.abs);
        let _ = writeln!(s, "noise_seed = {}", opts.noise_seed);
        let c = &self.file.cavity;
        let _ = writeln!(s, "cavity length_cm = {} mirror_radius_cm = {} degeneracy_order = {}", c.length_cm, c.mirror_radius_cm, c.degeneracy_order);
        let _ = writeln!(s, "cavity wavelength_nm = {} transmissivity = {} absorption = {}", c.wavelength_nm, c.transmissivity, c.absorption);
        if let Some(t) = &self.file.calibration {
            let _ = writeln!(s, "calibrated to on_photons = {} unstable_photons = {}", t.on_photons, t.unstable_photons);
        }
        let _ = writeln!(s, "kappa_per_us = {}", p.kappa);
        let _ = writeln!(s, "gain_per_us = {}", p.gain);
        let _ = writeln!(s, "sat_photons = {}", p.sat_photons);
        let _ = writeln!(s, "pump_per_us = {}", p.pump);
        let _ = writeln!(s, "inversion_decay_per_us = {}", p.inversion_decay);
        let _ = writeln!(s, "atoms = {}", p.atoms);
        let _ = writeln!(s, "coherence_time_us = {}", p.coherence_time);
        let _ = writeln!(s, "coherent_weight = {}", p.effective_coherent_weight());
        let _ = writeln!(s, "coherent_phase_rad = {}", p.coherent_phase);
        let _ = writeln!(s, "mode_pulling = {}", p.mode_pulling);
        let _ = writeln!(s, "cavity_detuning_MHz = {}", p.cavity_detuning_mhz);
        let _ = writeln!(s, "seed_rate_per_us = {}", p.seed_rate);
        let _ = writeln!(s, "field_G = {}", p.zeeman.field);
        let _ = writeln!(s, "base_shift_MHz_per_G = {}", p.zeeman.base_shift_mhz_per_gauss);
        for row in p.pathways.iter() {
            let _ = writeln!(s, "pathway {} c = {} s = {}", row.id, row.weight, row.zeeman_slope);
        }
        let _ = writeln!(
            s,
            "initial = ({}, {}, {}, {}, {})",
            self.initial.a_z.re, self.initial.a_z.im, self.initial.a_x.re, self.initial.a_x.im, self.initial.inversion
        );
        let _ = writeln!(s, "events = {}", self.schedule.events().len());
        for (i, e) in self.schedule.events().iter().enumerate() {
            let _ = match e {
                Event::Pulse(p) => writeln!(
                    s,
                    "event {i} pulse t_start_us = {} duration_us = {} n_inj = {} jones = ({}, {}) carrier_detuning_MHz = {} reference = {:?}",
                    p.t_start, p.duration, p.injected_photons, p.polarization[0], p.polarization[1], p.carrier_detuning_mhz, p.reference
                ),
                Event::PumpBlock { start, duration } => {
                    writeln!(s, "event {i} pump_block start_us = {start} duration_us = {duration}")
                }
                Event::FieldStep { t, field } => writeln!(s, "event {i} field_step t_us = {t} field_G = {field}"),
            };
        }
        let _ = writeln!(
            s,
            "analysis polarizer_deg = {} window_start_us = {}",
            self.file.analysis.polarizer_deg, self.file.analysis.window_start_us
        );
        s
    }
}

/// Fitted gain coefficient and saturation photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub gain: f64,
    pub sat_photons: f64,
    /// Inversion at the unstable and on fixed points.
    pub inversion_unstable: f64,
    pub inversion_on: f64,
}

/// Solves for (G, n_s) so that the z-polarized reduction, with the inversion
/// depleted by the circulating light, has its unstable and on fixed points at
/// the requested photon numbers. All other fields of `base` are kept.
pub fn calibrate(base: &ModelParams, targets: &CalibrationTargets) -> Result<Calibration> {
    let (nu, non) = (targets.unstable_photons, targets.on_photons);
    if !(nu > 0.0 && non > 0.0) || !nu.is_finite() || !non.is_finite() {
        return Err(Error::invalid("calibration targets must be positive"));
    }
    let n_max = 2.0 * base.atoms * base.pump / base.kappa;
    if nu > non {
        return Err(Error::Infeasible(format!(
            "unstable_photons ({nu:e}) exceeds on_photons ({non:e}); feasible unstable_photons interval is (0, {non:e}]"
        )));
    }
    if non >= n_max {
        return Err(Error::Infeasible(format!(
            "on_photons ({non:e}) needs more pump than available; feasible on_photons interval is (0, {n_max:e})"
        )));
    }
    // lineshape and weight of the ZZ pathway scale the bare coefficient
    let probe = ModelParams {
        gain: 1.0,
        sat_photons: 1.0,
        ..base.clone()
    };
    let unit_gain = single_mode_gain(&probe);
    if !(unit_gain > 0.0) {
        return Err(Error::Infeasible("the ZZ pathway provides no gain".into()));
    }
    let du = loaded_inversion(base, nu);
    let don = loaded_inversion(base, non);
    let kappa = base.kappa;
    let (g_eff, ns) = if nu == non {
        (kappa / (du * nu), nu)
    } else {
        let r = du * nu / (don * non);
        let y = (1.0 - r) / (r * non * non - nu * nu);
        if !(y > 0.0) {
            return Err(Error::Infeasible(format!(
                "no saturation photon number reproduces unstable_photons = {nu:e} with on_photons = {non:e}"
            )));
        }
        (kappa * (1.0 + nu * nu * y) / (2.0 * du * nu), 1.0 / y.sqrt())
    };
    Ok(Calibration {
        gain: g_eff / unit_gain,
        sat_photons: ns,
        inversion_unstable: du,
        inversion_on: don,
    })
}

/// The unstable and on photon numbers implied by `params`, if both exist.
pub fn implied_targets(params: &ModelParams) -> Option<CalibrationTargets> {
    match single_mode_fixed_points(params).as_slice() {
        [u, on] => Some(CalibrationTargets {
            on_photons: *on,
            unstable_photons: *u,
        }),
        _ => None,
    }
}

/// Metrics extracted from one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub final_photons: f64,
    pub dominant_period_us: Option<f64>,
    pub modulation_depth: f64,
    pub spectral_flatness: Option<f64>,
    pub drop_time_us: Option<f64>,
    pub dropped: bool,
}

impl RunMetrics {
    pub fn lasing(&self) -> bool {
        self.final_photons >= 1.0
    }
}

/// Metrics of the polarizer-projected intensity over the analysis window.
pub fn run_metrics(scn: &Scenario, series: &TimeSeries) -> Result<RunMetrics> {
    let final_photons = series.last().map_or(0.0, |s| s.photon_number());
    let window = series.after(scn.file.analysis.window_start_us);
    let intensity: Vec<f64> = polarizer_projection(&window, scn.polarizer_angle()).into_iter().map(|p| p.1).collect();
    if intensity.is_empty() {
        return Err(Error::invalid("analysis window holds no samples"));
    }
    let dt = series.sample_period;
    let long_enough = intensity.len() >= 64;
    let drop = if long_enough {
        Some(autocorrelation_drop_time(&intensity, dt, 0.1)?)
    } else {
        None
    };
    Ok(RunMetrics {
        final_photons,
        dominant_period_us: if long_enough { dominant_period(&intensity, dt)?.period() } else { None },
        modulation_depth: modulation_depth(&intensity)?,
        spectral_flatness: if long_enough { Some(spectral_flatness(&intensity)?) } else { None },
        drop_time_us: drop.map(|d| d.time),
        dropped: drop.is_some_and(|d| d.dropped),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

/// On-disk scan layout: a scenario template and one parameter to vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanFile {
    /// Path of the template scenario, relative to the scan file.
    pub scenario: String,
    /// Dotted key into the scenario, e.g. `zeeman.field_G` or `event.0.n_inj`.
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<ScanRange>,
}

/// Resolved scan: template text, dotted parameter path and point values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub template: String,
    pub parameter: String,
    pub values: Vec<f64>,
}

impl ScanSpec {
    /// `load` resolves the template path named in the scan file.
    pub fn parse(text: &str, load: impl FnOnce(&str) -> Result<String>) -> Result<Self> {
        let f: ScanFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let values = match (f.values, f.range) {
            (Some(v), None) => v,
            (None, Some(r)) => {
                if r.steps == 0 {
                    Vec::new()
                } else if r.steps == 1 {
                    vec![r.start]
                } else {
                    (0..r.steps)
                        .map(|i| r.start + (r.stop - r.start) * i as f64 / (r.steps - 1) as f64)
                        .collect()
                }
            }
            _ => return Err(Error::invalid("a scan needs exactly one of `values` or `range`")),
        };
        let spec = Self {
            template: load(&f.scenario)?,
            parameter: f.parameter,
            values,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("a scan needs at least one point"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("scan value {v} is not finite")));
        }
        let table: toml::Table = self.template_table()?;
        if lookup(&table, &self.parameter).is_none() {
            return Err(Error::invalid(format!(
                "scan parameter `{}` is not set in the template scenario",
                self.parameter
            )));
        }
        self.point(self.values[0]).map(|_| ())
    }

    fn template_table(&self) -> Result<toml::Table> {
        self.template.parse::<toml::Table>().map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(&self.template, s.start)),
            message: e.message().to_string(),
        })
    }

    /// Template with the scan parameter set to `value`.
    pub fn point(&self, value: f64) -> Result<Scenario> {
        let mut table = self.template_table()?;
        let slot = lookup_mut(&mut table, &self.parameter)
            .ok_or_else(|| Error::invalid(format!("scan parameter `{}` not found", self.parameter)))?;
        *slot = match slot {
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            _ => toml::Value::Float(value),
        };
        let file: ScenarioFile = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(format!("scan point {value}: {}", e.message())))?;
        Scenario::from_file(file)
    }
}

fn lookup<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut parts = path.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = match cur {
            toml::Value::Table(t) => t.get(p)?,
            toml::Value::Array(a) => a.get(p.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

fn lookup_mut<'a>(table: &'a mut toml::Table, path: &str) -> Option<&'a mut toml::Value> {
    let mut parts = path.split('.');
    let mut cur = table.get_mut(parts.next()?)?;
    for p in parts {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(p)?,
            toml::Value::Array(a) => a.get_mut(p.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// One scan point; a failed point carries its error text and no metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub outcome: std::result::Result<RunMetrics, String>,
}

impl ScanRow {
    pub const CSV_HEADER: &'static str =
        "value,status,final_n_tot,state,dominant_period_us,modulation_depth,spectral_flatness,drop_time_us,dropped";

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        match &self.outcome {
            Ok(m) => format!(
                "{},ok,{},{},{},{},{},{},{}",
                self.value,
                m.final_photons,
                if m.lasing() { "on" } else { "off" },
                opt(m.dominant_period_us),
                m.modulation_depth,
                opt(m.spectral_flatness),
                opt(m.drop_time_us),
                m.dropped
            ),
            Err(e) => format!("{},\"error: {}\",,,,,,,", self.value, e.replace('"', "'")),
        }
    }
}

/// Runs every scan point on at most `jobs` worker threads. Rows come back in
/// the order of `spec.values` regardless of scheduling.
pub fn run_scan(spec: &ScanSpec, jobs: usize, opts: &IntegrationOptions) -> Result<Vec<ScanRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        spec.values
            .par_iter()
            .map(|&value| {
                let outcome = spec
                    .point(value)
                    .and_then(|scn| {
                        let tr = scn.run(opts)?;
                        run_metrics(&scn, &tr.series)
                    })
                    .map_err(|e| e.to_string());
                ScanRow { value, outcome }
            })
            .collect()
    }))
}
