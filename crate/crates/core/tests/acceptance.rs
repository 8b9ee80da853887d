//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process exits non-zero if any fail.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use twophoton::analysis::PolarizationSample;
use twophoton::cavity::{self, CavityGeometry, CavityLoss};
use twophoton::dynamics::{rhs, threshold_analysis, LaserState, ModelParams, ThresholdOutcome};
use twophoton::integrator::{
    integrate_with, EventSchedule, IntegrationOptions, Sample, TimeSeries,
};
use twophoton::pathways::{concurrence, PairState};
use twophoton::scenario::{parse_scenario, run_metrics, RunMetrics, Scenario, ScenarioFile};
use twophoton::Tolerances;

type Outcome = Result<String, String>;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load_file(name: &str) -> ScenarioFile {
    let text = std::fs::read_to_string(scenario_dir().join(name)).expect("golden scenario present");
    twophoton::scenario::parse_scenario_file(&text).expect("golden scenario parses")
}

fn load(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_dir().join(name)).expect("golden scenario present");
    parse_scenario(&text).expect("golden scenario is valid")
}

fn build(file: ScenarioFile) -> Scenario {
    Scenario::from_file(file).expect("variant is valid")
}

fn run(scn: &Scenario) -> (TimeSeries, RunMetrics) {
    let tr = scn.run(&IntegrationOptions::default()).expect("integration succeeds");
    let m = run_metrics(scn, &tr.series).expect("metrics");
    (tr.series, m)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cavity_golden() -> Outcome {
    let geom = CavityGeometry::reference();
    let finesse = cavity::finesse(&CavityLoss::reference_bare()).map_err(|e| e.to_string())?;
    let fsr = cavity::free_spectral_range(&geom);
    let linewidth = fsr / 15_140.0;
    let (short, _) = cavity::subconfocal_lengths(0.05, 4);
    let spacing = cavity::cluster_spacing(&geom);
    let parts = [
        ("finesse", (15_250.0..=15_550.0).contains(&finesse), format!("{finesse:.1}")),
        ("fsr", rel(fsr, 10.24e9) <= 1e-3, format!("{:.5} GHz", fsr * 1e-9)),
        ("linewidth", rel(linewidth, 680e3) <= 1e-2, format!("{:.2} kHz", linewidth * 1e-3)),
        ("subconfocal", rel(short, 0.01464) <= 1e-4, format!("{:.6} cm", short * 100.0)),
        ("cluster", rel(spacing, 2.56e9) <= 1e-3, format!("{:.5} GHz", spacing * 1e-9)),
    ];
    let detail = parts
        .iter()
        .map(|(k, ok, v)| format!("{k}={v}{}", if *ok { "" } else { " (out of tolerance)" }))
        .collect::<Vec<_>>()
        .join(", ");
    check(parts.iter().all(|p| p.1), detail)
}

/// Whether a single-mode start with `n0` photons at the off-state inversion ends lasing.
fn latches(params: &ModelParams, n0: f64) -> bool {
    let start = LaserState {
        a_z: Complex64::new(n0.sqrt(), 0.0),
        a_x: Complex64::new(0.0, 0.0),
        inversion: params.off_state_inversion(),
    };
    let schedule = EventSchedule::new(Vec::new()).unwrap();
    let tr = integrate_with(start, params, &schedule, 40.0, 1.0, &IntegrationOptions::default()).unwrap();
    tr.final_state.photon_number() >= 1.0
}

fn threshold_structure() -> Outcome {
    let params = load("paper_fig3.scn").params;
    let (mut lo, mut hi) = (1e3, 2.2e6);
    if latches(&params, lo) || !latches(&params, hi) {
        return Err("bracket does not straddle the separatrix".into());
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if latches(&params, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let n_star = 0.5 * (lo + hi);
    let ta = threshold_analysis(&params, params.off_state_inversion()).map_err(|e| e.to_string())?;
    let ThresholdOutcome::Bistable { n_unstable, .. } = ta.outcome else {
        return Err("no on state at the off-state inversion".into());
    };
    check(
        rel(n_unstable, n_star) <= 0.1 && n_star > 2.2e5 && n_star < 3.3e5,
        format!("n* = {n_star:.4e}, n_unstable = {n_unstable:.4e}"),
    )
}

fn fig3_with(n_inj: f64) -> (Scenario, TimeSeries) {
    let mut file = load_file("paper_fig3.scn");
    if let Some(twophoton::scenario::EventSection::Pulse { n_inj: n, .. }) = file.events.get_mut(0) {
        *n = n_inj;
    }
    let scn = build(file);
    let series = scn.run(&IntegrationOptions::default()).unwrap().series;
    (scn, series)
}

fn trigger_reproduction() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let pulse_end = |scn: &Scenario| scn.schedule.pulses().next().unwrap().t_end();
    for n_inj in [1.1e5, 2.2e5] {
        let (scn, s) = fig3_with(n_inj);
        let last = s.last().unwrap().photon_number();
        ok &= last < 1.0;
        notes.push(format!("{n_inj:.1e}: final {last:.2e}"));
        if n_inj == 2.2e5 {
            let t_end = pulse_end(&scn);
            let high_until = s.samples.iter().filter(|x| x.photon_number() > 1e3).map(|x| x.t).fold(t_end, f64::max);
            ok &= high_until - t_end >= 2.0;
            notes.push(format!("plateau {:.2} us", high_until - t_end));
        }
    }
    let (scn, s) = fig3_with(3.3e5);
    let on = 2.2e6;
    let inside = |x: &Sample| rel(x.photon_number(), on) <= 0.05;
    let settle = s
        .samples
        .iter()
        .rposition(|x| !inside(x))
        .map_or(s.samples[0].t, |i| s.samples.get(i + 1).map_or(f64::INFINITY, |x| x.t));
    let held = s.last().unwrap().t - settle;
    ok &= settle >= pulse_end(&scn) - 1e-9 && held >= 50.0;
    notes.push(format!("3.3e5: within 5% of n_on from {settle:.2} us for {held:.1} us"));
    check(ok, notes.join(", "))
}

fn off_state_stability() -> Outcome {
    let scn = load("paper_cavity.scn");
    let schedule = EventSchedule::new(Vec::new()).unwrap();
    let start = LaserState::off(scn.params.off_state_inversion());
    let tr = integrate_with(start, &scn.params, &schedule, 10_000.0, 1.0, &IntegrationOptions::default())
        .map_err(|e| e.to_string())?;
    let (series, _) = run(&scn);
    let dark = |s: &TimeSeries| s.samples.iter().all(|x| x.a_z == Complex64::ZERO && x.a_x == Complex64::ZERO);
    check(
        dark(&tr.series) && dark(&series),
        format!("{} + {} samples, all fields exactly zero", tr.series.len(), series.len()),
    )
}

fn oscillation_regime() -> Outcome {
    let (_, m) = run(&load("paper_fig4a.scn"));
    let period = m.dominant_period_us.unwrap_or(f64::NAN);
    let mut ok = rel(period, 0.11) <= 0.1 && (m.modulation_depth - 0.5).abs() <= 0.1;
    let mut detail = format!("period {period:.4} us, depth {:.3}", m.modulation_depth);

    // beat between the two modes seen through a 45° polarizer, weak coherent exchange
    let fields = [0.25, 0.5, 1.0];
    let mut periods = Vec::new();
    for b in fields {
        let mut file = load_file("paper_fig4a.scn");
        file.model.coherent_weight = Some(0.5);
        file.analysis.polarizer_deg = 45.0;
        file.zeeman.field_G = b;
        let (_, m) = run(&build(file));
        periods.push(m.dominant_period_us.unwrap_or(f64::NAN));
    }
    for i in 1..fields.len() {
        let predicted = periods[0] * fields[0] / fields[i];
        ok &= rel(periods[i], predicted) <= 0.1;
    }
    detail += &format!(
        "; 45° beat periods {:.4}/{:.4}/{:.4} us at {:?} G",
        periods[0], periods[1], periods[2], fields
    );
    check(ok, detail)
}

fn chaotic_contrast() -> Outcome {
    let (_, a) = run(&load("paper_fig4a.scn"));
    let (_, b) = run(&load("paper_fig4b.scn"));
    let fa = a.spectral_flatness.unwrap_or(f64::NAN);
    let fb = b.spectral_flatness.unwrap_or(f64::NAN);
    let drop_b = b.drop_time_us.unwrap_or(f64::INFINITY);
    let ok = fb >= 5.0 * fa && b.dropped && drop_b <= 0.1 && !a.dropped;
    check(
        ok,
        format!(
            "flatness {fb:.3e} vs {fa:.3e} (ratio {:.2}), fig4b drop {drop_b:.3} us (dropped={}), fig4a dropped={}",
            fb / fa,
            b.dropped,
            a.dropped
        ),
    )
}

fn state_strategy() -> impl Strategy<Value = LaserState> {
    (-2e3f64..2e3, -2e3f64..2e3, -2e3f64..2e3, -2e3f64..2e3, 0.0f64..1.0).prop_map(|(a, b, c, d, e)| LaserState {
        a_z: Complex64::new(a, b),
        a_x: Complex64::new(c, d),
        inversion: e,
    })
}

fn fmt<T: std::fmt::Debug>(e: proptest::test_runner::TestError<T>) -> String {
    e.to_string()
}

fn invariant_suite() -> Outcome {
    let params = load("paper_fig4a.scn").params;
    let mut zero_field = params.clone();
    zero_field.zeeman.field = 0.0;
    let none = [Complex64::ZERO; 2];
    let mut timings = Vec::new();
    let mut run_prop = |name: &str, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| -> Result<(), String> {
        let started = Instant::now();
        let mut runner = TestRunner::new(Config {
            cases: 256,
            failure_persistence: None,
            ..Config::default()
        });
        f(&mut runner).map_err(|e| format!("{name}: {e}"))?;
        let dt = started.elapsed().as_secs_f64();
        if dt >= 1.0 {
            return Err(format!("{name} took {dt:.2} s"));
        }
        timings.push(format!("{name} {:.0} ms", dt * 1e3));
        Ok(())
    };

    run_prop("off-state", &|r| {
        r.run(&(0.0f64..1.0), |d| {
            let x = rhs(&LaserState::off(d), &params, 0.0, none);
            prop_assert_eq!(x.d_a_z, Complex64::ZERO);
            prop_assert_eq!(x.d_a_x, Complex64::ZERO);
            Ok(())
        })
        .map_err(fmt)
    })?;
    run_prop("x-manifold", &|r| {
        r.run(&state_strategy(), |s| {
            let s = LaserState { a_x: Complex64::ZERO, ..s };
            prop_assert_eq!(rhs(&s, &params, 0.0, none).d_a_x, Complex64::ZERO);
            Ok(())
        })
        .map_err(fmt)
    })?;
    run_prop("swap at B=0", &|r| {
        r.run(&state_strategy(), |s| {
            let swapped = LaserState { a_z: s.a_x, a_x: s.a_z, ..s };
            let d = rhs(&s, &zero_field, 0.0, none);
            let ds = rhs(&swapped, &zero_field, 0.0, none);
            prop_assert_eq!(d.d_a_z, ds.d_a_x);
            prop_assert_eq!(d.d_a_x, ds.d_a_z);
            prop_assert!((d.d_inversion - ds.d_inversion).abs() <= 1e-12 * d.d_inversion.abs().max(1e-300));
            Ok(())
        })
        .map_err(fmt)
    })?;
    run_prop("global phase", &|r| {
        r.run(&(state_strategy(), 0.0f64..std::f64::consts::TAU), |(s, phi)| {
            let u = Complex64::from_polar(1.0, phi);
            let rotated = LaserState { a_z: s.a_z * u, a_x: s.a_x * u, ..s };
            let d = rhs(&s, &params, 0.0, none);
            let dr = rhs(&rotated, &params, 0.0, none);
            let scale = d.d_a_z.norm() + d.d_a_x.norm() + 1e-300;
            prop_assert!((dr.d_a_z - d.d_a_z * u).norm() <= 1e-9 * scale);
            prop_assert!((dr.d_a_x - d.d_a_x * u).norm() <= 1e-9 * scale);
            prop_assert!((dr.d_inversion - d.d_inversion).abs() <= 1e-9 * d.d_inversion.abs().max(1e-12));
            Ok(())
        })
        .map_err(fmt)
    })?;
    run_prop("stokes purity", &|r| {
        r.run(&state_strategy(), |s| {
            let p = PolarizationSample::from_sample(&Sample {
                t: 0.0,
                a_z: s.a_z,
                a_x: s.a_x,
                inversion: s.inversion,
            });
            let lhs = p.s0 * p.s0;
            let rhs = p.s1 * p.s1 + p.s2 * p.s2 + p.s3 * p.s3;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300));
            Ok(())
        })
        .map_err(fmt)
    })?;
    let single = load("paper_fig3.scn").params;
    run_prop("quadratic gain", &|r| {
        r.run(&(1e-3f64..1e-2, 0.05f64..1.0), |(frac, d)| {
            // emission added to dn/dt by the gain terms alone
            let emission = |n: f64| {
                let s = LaserState {
                    a_z: Complex64::new(n.sqrt(), 0.0),
                    a_x: Complex64::ZERO,
                    inversion: d,
                };
                let x = rhs(&s, &single, 0.0, none);
                2.0 * (s.a_z.conj() * x.d_a_z).re + single.kappa * n
            };
            let n = frac * single.sat_photons;
            let ratio = emission(n) / emission(0.5 * n);
            prop_assert!((ratio / 4.0 - 1.0).abs() <= 0.01, "ratio {}", ratio);
            Ok(())
        })
        .map_err(fmt)
    })?;
    Ok(timings.join(", "))
}

fn entanglement_report() -> Outcome {
    let state = |a: f64, b: f64| PairState {
        amp_zz: Complex64::new(a, 0.0),
        amp_xx: Complex64::new(b, 0.0),
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let equal = concurrence(&state(h, h));
    let product = concurrence(&state(1.0, 0.0));
    let skew = concurrence(&state(0.8, 0.6));
    check(
        (equal - 1.0).abs() <= f64::EPSILON * 4.0 && product == 0.0 && (skew - 0.96).abs() <= 1e-12,
        format!("equal {equal:.15}, product {product}, (0.8, 0.6) {skew:.15}"),
    )
}

fn numerics() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // gain too small to matter against 10⁶ photons
    let params = ModelParams {
        gain: 1e-30,
        pump: 0.0,
        ..ModelParams::default()
    };
    let t_end = 5.0 / params.kappa;
    let start = LaserState {
        a_z: Complex64::new(1e3, 0.0),
        a_x: Complex64::ZERO,
        inversion: 0.0,
    };
    let schedule = EventSchedule::new(Vec::new()).unwrap();
    let tr = integrate_with(start, &params, &schedule, t_end, t_end, &IntegrationOptions::default())
        .map_err(|e| e.to_string())?;
    let exact = 1e6 * (-params.kappa * t_end).exp();
    let err = rel(tr.final_state.photon_number(), exact);
    ok &= err <= 1e-6;
    notes.push(format!("pure decay rel err {err:.1e}"));

    let (scn, _) = fig3_with(3.3e5);
    let opts = IntegrationOptions::default();
    let halved = IntegrationOptions {
        tolerances: Tolerances {
            rel: opts.tolerances.rel / 2.0,
            abs: opts.tolerances.abs / 2.0,
        },
        ..opts
    };
    let a = scn.run(&opts).unwrap().series;
    let b = scn.run(&halved).unwrap().series;
    let worst = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| {
            let (p, q) = (x.photon_number(), y.photon_number());
            if p == q {
                0.0
            } else {
                (p - q).abs() / p.abs().max(q.abs())
            }
        })
        .fold(0.0, f64::max);
    ok &= worst < 1e-4;
    notes.push(format!("tolerance halving max rel change {worst:.1e}"));

    let csv = |s: &TimeSeries| {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        buf
    };
    let again = scn.run(&opts).unwrap().series;
    let identical = csv(&a) == csv(&again);
    ok &= identical;
    notes.push(format!("rerun byte-identical: {identical}"));
    check(ok, notes.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("cavity golden values", cavity_golden),
        ("threshold structure", threshold_structure),
        ("trigger reproduction", trigger_reproduction),
        ("off-state stability", off_state_stability),
        ("polarization oscillation regime", oscillation_regime),
        ("chaotic-regime contrast", chaotic_contrast),
        ("structural invariants", invariant_suite),
        ("entanglement report", entanglement_report),
        ("numerics", numerics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} PASS  {name} [{secs:.2} s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} FAIL  {name} [{secs:.2} s]: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
