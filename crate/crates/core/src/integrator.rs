//! Time integration of the laser equations with a timed event schedule.
//!
//! All times here are in microseconds. Integration restarts exactly at every
//! event edge so that pulse and pump-block boundaries never fall inside a step.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Coefficients, LaserState, ModelParams};
use crate::error::{Error, Result};
use crate::ode::{integrate_dense, StepStats, Tolerances};

/// How `injected_photons` is converted into a drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseReference {
    /// Photon number an empty lossy cavity would hold at the end of the pulse.
    #[default]
    Empty,
    /// Photon number the actual (gain-loaded) cavity holds at the end of the
    /// pulse, found by shooting on the drive amplitude.
    Loaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerPulse {
    pub t_start: f64,
    pub duration: f64,
    pub injected_photons: f64,
    /// Unit Jones vector (z, x).
    pub polarization: [Complex64; 2],
    /// Carrier detuning from the cavity mode, MHz.
    pub carrier_detuning_mhz: f64,
    pub reference: PulseReference,
}

impl TriggerPulse {
    /// z-polarized, resonant pulse with the empty-cavity reference.
    pub fn new(t_start: f64, duration: f64, injected_photons: f64) -> Self {
        Self {
            t_start,
            duration,
            injected_photons,
            polarization: [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            carrier_detuning_mhz: 0.0,
            reference: PulseReference::Empty,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::constraint("pulse duration must be positive"));
        }
        if !(self.t_start >= 0.0) || !self.t_start.is_finite() {
            return Err(Error::constraint("pulse start must be non-negative"));
        }
        if !(self.injected_photons >= 0.0) || !self.injected_photons.is_finite() {
            return Err(Error::constraint("injected photon number must be non-negative"));
        }
        let norm = self.polarization[0].norm_sqr() + self.polarization[1].norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::constraint(format!("pulse polarization must have unit norm (got {norm})")));
        }
        if !self.carrier_detuning_mhz.is_finite() {
            return Err(Error::constraint("carrier detuning must be finite"));
        }
        Ok(())
    }
}

/// Drive amplitude |η| (√photons/μs) that fills an empty cavity with decay
/// rate `kappa` to `p.injected_photons` at the end of the pulse.
pub fn empty_cavity_drive_amplitude(p: &TriggerPulse, kappa: f64) -> f64 {
    let z = Complex64::new(0.5 * kappa, 2.0 * std::f64::consts::PI * p.carrier_detuning_mhz);
    let fill = (Complex64::new(1.0, 0.0) - (-z * p.duration).exp()).norm() / z.norm();
    p.injected_photons.sqrt() / fill
}

fn drive_with_amplitude(p: &TriggerPulse, t: f64, eta: f64) -> [Complex64; 2] {
    if t < p.t_start || t > p.t_end() {
        return [Complex64::new(0.0, 0.0); 2];
    }
    let phase = Complex64::from_polar(eta, -2.0 * std::f64::consts::PI * p.carrier_detuning_mhz * (t - p.t_start));
    [p.polarization[0] * phase, p.polarization[1] * phase]
}

/// Coherent drive per mode at time `t` (μs), using the empty-cavity reference.
pub fn inject_pulse_drive(p: &TriggerPulse, t: f64, params: &ModelParams) -> [Complex64; 2] {
    drive_with_amplitude(p, t, empty_cavity_drive_amplitude(p, params.kappa))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Pulse(TriggerPulse),
    /// Raman pump switched off on `[start, start + duration)`.
    PumpBlock { start: f64, duration: f64 },
    /// Magnetic field set to `field` gauss from `t` onwards.
    FieldStep { t: f64, field: f64 },
}

impl Event {
    pub fn start(&self) -> f64 {
        match self {
            Event::Pulse(p) => p.t_start,
            Event::PumpBlock { start, .. } => *start,
            Event::FieldStep { t, .. } => *t,
        }
    }

    fn edges(&self) -> Vec<f64> {
        match self {
            Event::Pulse(p) => vec![p.t_start, p.t_end()],
            Event::PumpBlock { start, duration } => vec![*start, start + duration],
            Event::FieldStep { t, .. } => vec![*t],
        }
    }
}

/// Time-ordered list of events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for w in events.windows(2) {
            if w[1].start() < w[0].start() {
                return Err(Error::constraint("events must be listed in time order"));
            }
        }
        for e in &events {
            match e {
                Event::Pulse(p) => p.validate()?,
                Event::PumpBlock { start, duration } => {
                    if !(*start >= 0.0 && *duration >= 0.0) || !(start + duration).is_finite() {
                        return Err(Error::constraint("pump block interval must be non-negative"));
                    }
                }
                Event::FieldStep { t, field } => {
                    if !(*t >= 0.0) || !t.is_finite() || !field.is_finite() {
                        return Err(Error::constraint("field step needs a finite non-negative time and field"));
                    }
                }
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn pulses(&self) -> impl Iterator<Item = &TriggerPulse> {
        self.events.iter().filter_map(|e| match e {
            Event::Pulse(p) => Some(p),
            _ => None,
        })
    }

    fn pump_on(&self, t_mid: f64) -> bool {
        !self.events.iter().any(|e| match e {
            Event::PumpBlock { start, duration } => t_mid >= *start && t_mid < start + duration,
            _ => false,
        })
    }

    fn field_at(&self, t_mid: f64, initial: f64) -> f64 {
        let mut b = initial;
        for e in &self.events {
            if let Event::FieldStep { t, field } = e {
                if *t <= t_mid {
                    b = *field;
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub a_z: Complex64,
    pub a_x: Complex64,
    pub inversion: f64,
}

impl Sample {
    pub fn n_z(&self) -> f64 {
        self.a_z.norm_sqr()
    }

    pub fn n_x(&self) -> f64 {
        self.a_x.norm_sqr()
    }

    pub fn photon_number(&self) -> f64 {
        self.n_z() + self.n_x()
    }

    pub fn state(&self) -> LaserState {
        LaserState {
            a_z: self.a_z,
            a_x: self.a_x,
            inversion: self.inversion,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsvRow {
    t_us: f64,
    re_az: f64,
    im_az: f64,
    re_ax: f64,
    im_ax: f64,
    n_z: f64,
    n_x: f64,
    #[serde(rename = "D")]
    d: f64,
}

/// Uniformly sampled trajectory. Times in μs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub sample_period: f64,
    pub samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::photon_number).collect()
    }

    /// Samples with `t >= t0`.
    pub fn after(&self, t0: f64) -> TimeSeries {
        TimeSeries {
            sample_period: self.sample_period,
            samples: self.samples.iter().filter(|s| s.t >= t0).copied().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wr.serialize(CsvRow {
                t_us: s.t,
                re_az: s.a_z.re,
                im_az: s.a_z.im,
                re_ax: s.a_x.re,
                im_ax: s.a_x.im,
                n_z: s.n_z(),
                n_x: s.n_x(),
                d: s.inversion,
            })
            .map_err(|e| Error::invalid(format!("csv write failed: {e}")))?;
        }
        wr.flush().map_err(|e| Error::invalid(format!("csv write failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut samples = Vec::new();
        for (i, row) in rd.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            samples.push(Sample {
                t: row.t_us,
                a_z: Complex64::new(row.re_az, row.im_az),
                a_x: Complex64::new(row.re_ax, row.im_ax),
                inversion: row.d,
            });
        }
        if samples.len() < 2 {
            return Err(Error::invalid("time series needs at least two samples"));
        }
        let dt = samples[1].t - samples[0].t;
        if !(dt > 0.0) {
            return Err(Error::invalid("time series must be strictly increasing"));
        }
        for (i, w) in samples.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if !(step > 0.0) || (step - dt).abs() > 1e-6 * dt {
                return Err(Error::Parse {
                    line: i + 3,
                    message: "samples are not uniformly spaced".into(),
                });
            }
        }
        Ok(Self {
            sample_period: dt,
            samples,
        })
    }
}

/// Knobs for [`integrate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub tolerances: Tolerances,
    /// Seed for the optional spontaneous-seeding drive.
    pub noise_seed: u64,
    /// Width of the piecewise-constant seeding intervals, μs.
    pub noise_interval: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            noise_seed: 0,
            noise_interval: 1e-3,
        }
    }
}

/// Integration result with solver statistics and the drive amplitude used for each pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub series: TimeSeries,
    pub final_state: LaserState,
    pub pulse_amplitudes: Vec<f64>,
    pub stats: StepStats,
}

pub fn integrate(
    initial: LaserState,
    params: &ModelParams,
    schedule: &EventSchedule,
    t_end: f64,
    sample_period: f64,
) -> Result<TimeSeries> {
    integrate_with(initial, params, schedule, t_end, sample_period, &IntegrationOptions::default())
        .map(|tr| tr.series)
}

pub fn integrate_with(
    initial: LaserState,
    params: &ModelParams,
    schedule: &EventSchedule,
    t_end: f64,
    sample_period: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("t_end must be positive"));
    }
    if !(sample_period > 0.0) || !sample_period.is_finite() {
        return Err(Error::invalid("sample period must be positive"));
    }
    params.validate()?;
    if params.seed_rate > 0.0 && !(opts.noise_interval > 0.0) {
        return Err(Error::invalid("noise interval must be positive"));
    }
    let runner = Runner {
        params,
        schedule,
        opts,
    };
    let n_samples = (t_end / sample_period + 1e-9).floor() as usize + 1;
    let outputs: Vec<f64> = (0..n_samples).map(|k| k as f64 * sample_period).collect();

    let mut amplitudes: Vec<f64> = Vec::new();
    let mut state = initial;
    let mut samples = Vec::with_capacity(n_samples);
    let mut stats = StepStats::default();
    let mut t = 0.0;
    let mut h = None;
    let pulses: Vec<&TriggerPulse> = schedule.pulses().collect();
    for (i, p) in pulses.iter().enumerate() {
        if p.t_start >= t_end {
            break;
        }
        // advance to the pulse start with the amplitudes resolved so far
        let (s, hh) = runner.run(state, t, p.t_start, &amplitudes, &outputs, &mut samples, &mut stats, h)?;
        state = s;
        h = hh;
        t = p.t_start;
        let eta = match p.reference {
            PulseReference::Empty => empty_cavity_drive_amplitude(p, params.kappa),
            PulseReference::Loaded => runner.shoot_loaded(state, i, &amplitudes)?,
        };
        amplitudes.push(eta);
    }
    let (s, _) = runner.run(state, t, t_end, &amplitudes, &outputs, &mut samples, &mut stats, h)?;
    // the final grid point lands exactly on t_end only when it divides evenly
    while samples.len() < n_samples {
        samples.push(Sample {
            t: outputs[samples.len()],
            a_z: s.a_z,
            a_x: s.a_x,
            inversion: s.inversion,
        });
    }
    Ok(Trajectory {
        series: TimeSeries {
            sample_period,
            samples,
        },
        final_state: s,
        pulse_amplitudes: amplitudes,
        stats,
    })
}

struct Runner<'a> {
    params: &'a ModelParams,
    schedule: &'a EventSchedule,
    opts: &'a IntegrationOptions,
}

impl Runner<'_> {
    /// Integrates over `[t0, t1]`, restarting at every event edge and noise
    /// interval boundary. Pulses beyond `amplitudes.len()` are ignored.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        mut state: LaserState,
        t0: f64,
        t1: f64,
        amplitudes: &[f64],
        outputs: &[f64],
        samples: &mut Vec<Sample>,
        stats: &mut StepStats,
        mut h: Option<f64>,
    ) -> Result<(LaserState, Option<f64>)> {
        let mut edges: Vec<f64> = self
            .schedule
            .events()
            .iter()
            .flat_map(|e| e.edges())
            .filter(|&e| e > t0 && e < t1)
            .collect();
        let noisy = self.params.seed_rate > 0.0;
        if noisy {
            let w = self.opts.noise_interval;
            let first = (t0 / w).floor() as u64 + 1;
            let last = (t1 / w).ceil() as u64;
            edges.extend((first..last).map(|k| k as f64 * w).filter(|&e| e > t0 && e < t1));
        }
        edges.push(t1);
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let mut field = f64::NAN;
        let mut coeffs: Option<Coefficients> = None;
        let mut a = t0;
        for &b in &edges {
            let mid = 0.5 * (a + b);
            let b_now = self.schedule.field_at(mid, self.params.zeeman.field);
            if coeffs.is_none() || b_now != field {
                let mut p = self.params.clone();
                p.zeeman.field = b_now;
                coeffs = Some(p.coefficients());
                field = b_now;
            }
            let c = coeffs.expect("coefficients set above");
            let pump_on = self.schedule.pump_on(mid);
            let active: Vec<(&TriggerPulse, f64)> = self
                .schedule
                .pulses()
                .zip(amplitudes)
                .filter(|(p, _)| mid >= p.t_start && mid <= p.t_end())
                .map(|(p, &eta)| (p, eta))
                .collect();
            let noise = if noisy { self.noise_drive(mid) } else { [Complex64::new(0.0, 0.0); 2] };

            let lo = samples.len();
            let seg_outputs: &[f64] = {
                let start = outputs[lo..].iter().position(|&t| t >= a).map_or(outputs.len(), |k| k + lo);
                let end = outputs[start..].iter().position(|&t| t > b).map_or(outputs.len(), |k| k + start);
                // a sample sitting exactly on an edge belongs to the later segment
                let end = if b < t1 && end > start && outputs[end - 1] == b { end - 1 } else { end };
                &outputs[start..end]
            };
            let rhs = |t: f64, y: &[f64; 5]| {
                let s = LaserState::from_array(y);
                let mut inj = noise;
                for (p, eta) in &active {
                    let d = drive_with_amplitude(p, t, *eta);
                    inj[0] += d[0];
                    inj[1] += d[1];
                }
                let d = c.rhs(&s, inj, pump_on);
                [d.d_a_z.re, d.d_a_z.im, d.d_a_x.re, d.d_a_x.im, d.d_inversion]
            };
            let (y, h_next, st) =
                integrate_dense(rhs, a, state.to_array(), b, seg_outputs, self.opts.tolerances, h, |t, y| {
                    let s = LaserState::from_array(y);
                    samples.push(Sample {
                        t,
                        a_z: s.a_z,
                        a_x: s.a_x,
                        inversion: s.inversion,
                    });
                })?;
            stats.accepted += st.accepted;
            stats.rejected += st.rejected;
            state = LaserState::from_array(&y);
            h = Some(h_next).filter(|v| *v > 0.0);
            a = b;
        }
        Ok((state, h))
    }

    fn noise_drive(&self, t_mid: f64) -> [Complex64; 2] {
        let w = self.opts.noise_interval;
        let k = (t_mid / w).floor() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.noise_seed);
        rng.set_stream(k);
        let mag = (self.params.seed_rate / w).sqrt();
        let pz: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let px: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        [Complex64::from_polar(mag, pz), Complex64::from_polar(mag, px)]
    }

    /// Drive amplitude for pulse `index` such that the loaded cavity holds the
    /// requested photon number at the end of the pulse.
    fn shoot_loaded(&self, start: LaserState, index: usize, resolved: &[f64]) -> Result<f64> {
        let p = self.schedule.pulses().nth(index).expect("pulse index in range");
        if p.injected_photons == 0.0 {
            return Ok(0.0);
        }
        let end_photons = |eta: f64| -> Result<f64> {
            let mut amps = resolved.to_vec();
            amps.push(eta);
            let mut sink = Vec::new();
            let mut st = StepStats::default();
            let (s, _) = self.run(start, p.t_start, p.t_end(), &amps, &[], &mut sink, &mut st, None)?;
            Ok(s.photon_number())
        };
        let mut hi = empty_cavity_drive_amplitude(p, self.params.kappa);
        let mut lo = 0.0;
        let mut guard = 0;
        while end_photons(hi)? < p.injected_photons {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 60 {
                return Err(Error::invalid("loaded pulse calibration did not bracket the target"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if end_photons(mid)? < p.injected_photons {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
