use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use twophoton::analysis::{self, polarizer_projection, stokes};
use twophoton::cavity::{self, CavityGeometry, CavityLoss};
use twophoton::dynamics::ModelParams;
use twophoton::integrator::{IntegrationOptions, TimeSeries};
use twophoton::pathways::{
    build_pair_state, coherence_time_from_linewidth, concurrence, pathway_detuning, pathway_lineshape,
    PathwayAmplitudes, PathwayTable, ZeemanEnvironment,
};
use twophoton::scenario::{self, calibrate, parse_scenario, run_metrics, CalibrationTargets, ScanRow, ScanSpec};
use twophoton::Tolerances;

#[derive(Parser)]
#[command(name = "tpl", version, about = "Two-photon Raman laser simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for the optional spontaneous-seeding drive
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative integration tolerance; the absolute tolerance is 1e-2 of it
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

impl Common {
    fn options(&self) -> Result<IntegrationOptions> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(twophoton::Error::InvalidInput(format!("--tol must lie in (0, 1), got {}", self.tol)).into());
        }
        Ok(IntegrationOptions {
            tolerances: Tolerances {
                rel: self.tol,
                abs: self.tol * 1e-2,
            },
            noise_seed: self.seed,
            ..IntegrationOptions::default()
        })
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Resonator design numbers (finesse, FSR, linewidth, cluster spacing)
    Cavity {
        #[arg(long, default_value_t = 1.464)]
        length_cm: f64,
        #[arg(long, default_value_t = 5.0)]
        radius_cm: f64,
        #[arg(long, default_value_t = 4)]
        degeneracy: u32,
        #[arg(long, default_value_t = 770.0)]
        wavelength_nm: f64,
        #[arg(long, default_value_t = 2e-4)]
        transmissivity: f64,
        #[arg(long, default_value_t = 7.5e-6)]
        absorption: f64,
        /// Intracavity photon number to convert into output power
        #[arg(long, default_value_t = 2.2e6)]
        photons: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Integrate a scenario file and write its time series and metrics
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a one-parameter scan over a template scenario
    Scan {
        scanspec: PathBuf,
        /// Worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Analyse a time-series CSV written by `simulate`
    Analyze {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        polarizer_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        window_start_us: f64,
        /// Also write the power spectrum
        #[arg(long)]
        spectrum: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit gain and saturation photon number to on-state and threshold photon numbers
    Calibrate {
        #[arg(long, default_value_t = 2.2e6)]
        on_photons: f64,
        #[arg(long, default_value_t = 2.75e5)]
        unstable_photons: f64,
        /// Take pump, decay, atoms and pathways from this scenario instead of the defaults
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Pathway detunings, lineshapes and the emitted pair state
    Entangle {
        #[arg(long, default_value_t = 0.0)]
        field_g: f64,
        #[arg(long, default_value_t = 0.7)]
        base_shift_mhz_per_g: f64,
        #[arg(long, default_value_t = 6.0)]
        linewidth_mhz: f64,
        /// ZZ pathway weight
        #[arg(long, default_value_t = 1.0)]
        zz: f64,
        /// XX pathway weight
        #[arg(long, default_value_t = 1.0)]
        xx: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<twophoton::Error>().map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Cavity {
            length_cm,
            radius_cm,
            degeneracy,
            wavelength_nm,
            transmissivity,
            absorption,
            photons,
            out,
        } => {
            let geom = CavityGeometry {
                length: length_cm * 1e-2,
                mirror_radius: radius_cm * 1e-2,
                degeneracy_order: degeneracy,
                wavelength: wavelength_nm * 1e-9,
            };
            let loss = CavityLoss {
                transmissivity,
                absorption,
            };
            cmd_cavity(&geom, &loss, photons, &out)
        }
        Command::Simulate { scenario, common } => cmd_simulate(&scenario, &common),
        Command::Scan { scanspec, jobs, common } => cmd_scan(&scanspec, jobs, &common),
        Command::Analyze {
            csv,
            polarizer_deg,
            window_start_us,
            spectrum,
            out,
        } => cmd_analyze(&csv, polarizer_deg, window_start_us, spectrum, &out),
        Command::Calibrate {
            on_photons,
            unstable_photons,
            scenario,
            out,
        } => cmd_calibrate(on_photons, unstable_photons, scenario.as_deref(), &out),
        Command::Entangle {
            field_g,
            base_shift_mhz_per_g,
            linewidth_mhz,
            zz,
            xx,
        } => cmd_entangle(field_g, base_shift_mhz_per_g, linewidth_mhz, zz, xx),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_cavity(geom: &CavityGeometry, loss: &CavityLoss, photons: f64, out: &Path) -> Result<()> {
    geom.validate()?;
    let summary = cavity::summarize(geom, loss)?;
    let (short, long) = cavity::subconfocal_lengths(geom.mirror_radius, geom.degeneracy_order);
    let power = cavity::photon_number_to_output_power(photons, geom, loss)?;
    println!("{summary}");
    println!("sub-confocal lengths     {:.6} cm / {:.6} cm", short * 100.0, long * 100.0);
    println!("output power at {photons:e} photons   {:.4} uW", power * 1e6);

    out_dir(out)?;
    let mut csv = String::from("quantity,value,unit\n");
    csv += &format!("finesse,{},\n", summary.finesse);
    csv += &format!("free_spectral_range,{},Hz\n", summary.fsr);
    csv += &format!("mode_linewidth_fwhm,{},Hz\n", summary.mode_linewidth_fwhm);
    csv += &format!("kappa,{},1/s\n", summary.kappa);
    csv += &format!("cluster_spacing,{},Hz\n", summary.cluster_spacing);
    csv += &format!("subconfocal_short,{short},m\n");
    csv += &format!("subconfocal_long,{long},m\n");
    csv += &format!("output_power,{power},W\n");
    write_file(&out.join("cavity.csv"), &csv)?;
    let manifest = format!(
        "twophoton {}\ncommand = cavity\nlength_m = {}\nmirror_radius_m = {}\ndegeneracy_order = {}\nwavelength_m = {}\ntransmissivity = {}\nabsorption = {}\nphotons = {}\n",
        env!("CARGO_PKG_VERSION"),
        geom.length,
        geom.mirror_radius,
        geom.degeneracy_order,
        geom.wavelength,
        loss.transmissivity,
        loss.absorption,
        photons
    );
    write_file(&out.join("manifest.txt"), &manifest)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn metrics_csv(m: &scenario::RunMetrics) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut s = String::from("metric,value\n");
    s += &format!("final_n_tot,{}\n", m.final_photons);
    s += &format!("state,{}\n", if m.lasing() { "on" } else { "off" });
    s += &format!("dominant_period_us,{}\n", opt(m.dominant_period_us));
    s += &format!("modulation_depth,{}\n", m.modulation_depth);
    s += &format!("spectral_flatness,{}\n", opt(m.spectral_flatness));
    s += &format!("drop_time_us,{}\n", opt(m.drop_time_us));
    s += &format!("dropped,{}\n", m.dropped);
    s
}

fn cmd_simulate(path: &Path, common: &Common) -> Result<()> {
    let opts = common.options()?;
    let scn = parse_scenario(&read(path)?)?;
    let tr = scn.run(&opts)?;
    let metrics = run_metrics(&scn, &tr.series)?;

    let mut f = fs::File::create(common.out_file("timeseries.csv")?)?;
    tr.series.write_csv(&mut f)?;
    f.flush()?;
    write_file(&common.out_file("metrics.csv")?, &metrics_csv(&metrics))?;
    let mut manifest = scn.manifest(&opts);
    manifest += &format!("scenario = {}\n", path.display());
    for (i, eta) in tr.pulse_amplitudes.iter().enumerate() {
        manifest += &format!("pulse {i} drive_amplitude = {eta}\n");
    }
    manifest += &format!("steps_accepted = {}\nsteps_rejected = {}\n", tr.stats.accepted, tr.stats.rejected);
    write_file(&common.out_file("manifest.txt")?, &manifest)?;

    println!("final n_tot        {:.6e}", metrics.final_photons);
    println!("state              {}", if metrics.lasing() { "on" } else { "off" });
    if let Some(p) = metrics.dominant_period_us {
        println!("dominant period    {p:.5} us");
    }
    println!("modulation depth   {:.4}", metrics.modulation_depth);
    if let Some(f) = metrics.spectral_flatness {
        println!("spectral flatness  {f:.4}");
    }
    if let Some(d) = metrics.drop_time_us {
        println!("drop time          {d:.4} us{}", if metrics.dropped { "" } else { " (not dropped)" });
    }
    Ok(())
}

fn cmd_scan(path: &Path, jobs: usize, common: &Common) -> Result<()> {
    let opts = common.options()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let spec = ScanSpec::parse(&read(path)?, |rel| {
        fs::read_to_string(base.join(rel))
            .map_err(|e| twophoton::Error::InvalidInput(format!("cannot read template {rel}: {e}")))
    })?;
    let rows = scenario::run_scan(&spec, jobs, &opts)?;
    let mut csv = String::from(ScanRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv += &r.to_csv_line();
        csv.push('\n');
    }
    write_file(&common.out_file("scan.csv")?, &csv)?;
    let manifest = format!(
        "twophoton {}\ncommand = scan\nscanspec = {}\nparameter = {}\nvalues = {:?}\nrtol = {}\natol = {}\nnoise_seed = {}\n\n[template]\n{}",
        env!("CARGO_PKG_VERSION"),
        path.display(),
        spec.parameter,
        spec.values,
        opts.tolerances.rel,
        opts.tolerances.abs,
        opts.noise_seed,
        spec.template
    );
    write_file(&common.out_file("manifest.txt")?, &manifest)?;
    print!("{csv}");
    Ok(())
}

fn cmd_analyze(path: &Path, polarizer_deg: f64, window_start: f64, spectrum: bool, out: &Path) -> Result<()> {
    let series = TimeSeries::read_csv(fs::File::open(path).with_context(|| format!("reading {}", path.display()))?)?;
    let window = series.after(window_start);
    let intensity: Vec<f64> = polarizer_projection(&window, polarizer_deg.to_radians())
        .into_iter()
        .map(|p| p.1)
        .collect();
    let dt = series.sample_period;
    let chaos = analysis::chaos_indicators(&intensity, dt)?;
    let period = analysis::dominant_period(&intensity, dt)?.period();
    let depth = analysis::modulation_depth(&intensity)?;
    let pol = stokes(&window);
    let mean = |f: &dyn Fn(&analysis::PolarizationSample) -> f64| pol.iter().map(f).sum::<f64>() / pol.len() as f64;

    let mut report = String::from("metric,value\n");
    report += &format!("samples,{}\n", intensity.len());
    report += &format!("mean_intensity,{}\n", intensity.iter().sum::<f64>() / intensity.len() as f64);
    report += &format!("dominant_period_us,{}\n", period.map_or(String::new(), |p| p.to_string()));
    report += &format!("modulation_depth,{depth}\n");
    report += &format!("spectral_flatness,{}\n", chaos.spectral_flatness);
    report += &format!("drop_time_us,{}\n", chaos.drop_time.time);
    report += &format!("dropped,{}\n", chaos.drop_time.dropped);
    if let Some(l) = chaos.lyapunov {
        report += &format!("lyapunov_per_us,{}\n", l.value);
        report += &format!("lyapunov_valid,{}\n", l.valid);
    }
    report += &format!("mean_ellipticity,{}\n", mean(&|p| p.ellipticity));
    report += &format!("mean_abs_ellipticity,{}\n", mean(&|p| p.ellipticity.abs()));
    out_dir(out)?;
    write_file(&out.join("report.csv"), &report)?;
    if spectrum {
        let s = analysis::power_spectrum(&intensity, dt)?;
        let mut csv = String::from("frequency_MHz,power_density\n");
        for (f, p) in s.frequencies.iter().zip(&s.power_density) {
            csv += &format!("{f},{p}\n");
        }
        write_file(&out.join("spectrum.csv"), &csv)?;
    }
    print!("{report}");
    Ok(())
}

fn cmd_calibrate(on: f64, unstable: f64, scenario_path: Option<&Path>, out: &Path) -> Result<()> {
    let base = match scenario_path {
        Some(p) => {
            let mut file = scenario::parse_scenario_file(&read(p)?)?;
            // any calibration in the file is replaced by the requested targets
            file.calibration = Some(CalibrationTargets {
                on_photons: on,
                unstable_photons: unstable,
            });
            file.model.gain_per_us = None;
            file.model.sat_photons = None;
            scenario::Scenario::from_file(file)?.params
        }
        None => ModelParams {
            kappa: cavity::decay_rate(&CavityGeometry::reference(), &CavityLoss::reference_with_pinholes())? * 1e-6,
            ..ModelParams::default()
        },
    };
    let c = calibrate(
        &base,
        &CalibrationTargets {
            on_photons: on,
            unstable_photons: unstable,
        },
    )?;
    let block = format!(
        "[model]\nkappa_per_us = {}\ngain_per_us = {}\nsat_photons = {}\npump_per_us = {}\ninversion_decay_per_us = {}\natoms = {}\n",
        base.kappa, c.gain, c.sat_photons, base.pump, base.inversion_decay, base.atoms
    );
    out_dir(out)?;
    write_file(&out.join("calibration.toml"), &block)?;
    print!("{block}");
    println!(
        "# inversion at the unstable point {:.6}, at the on point {:.6}",
        c.inversion_unstable, c.inversion_on
    );
    Ok(())
}

fn cmd_entangle(field: f64, base_shift: f64, linewidth_mhz: f64, zz: f64, xx: f64) -> Result<()> {
    let env = ZeemanEnvironment {
        field,
        base_shift_mhz_per_gauss: base_shift,
    };
    env.validate()?;
    if !(linewidth_mhz > 0.0) {
        return Err(twophoton::Error::InvalidInput("--linewidth-mhz must be positive".into()).into());
    }
    let t2 = coherence_time_from_linewidth(linewidth_mhz * 1e6);
    let mut table = PathwayTable::default();
    table.get_mut(twophoton::pathways::PathwayId::ZZ).weight = zz;
    table.get_mut(twophoton::pathways::PathwayId::XX).weight = xx;
    println!("pathway  c      s   detuning_MHz  Re L      Im L      final state");
    for p in table.iter() {
        let l = pathway_lineshape(p, &env, t2);
        println!(
            "{:<7}  {:<5}  {:>2}  {:>12.4}  {:>8.5}  {:>8.5}  {}",
            p.id.to_string(),
            p.weight,
            p.zeeman_slope,
            pathway_detuning(p, &env) * 1e-6,
            l.re,
            l.im,
            p.final_state_label
        );
    }
    let report = build_pair_state(&PathwayAmplitudes::from_table(&table, &env, t2))?;
    let s = report.state;
    println!("pair state  amp_zz = {:.6} {:+.6}i  amp_xx = {:.6} {:+.6}i", s.amp_zz.re, s.amp_zz.im, s.amp_xx.re, s.amp_xx.im);
    println!("cross-polarized weight dropped  {:.6}", report.cross_pair_fraction);
    println!("concurrence  {:.12}", concurrence(&s));
    Ok(())
}
