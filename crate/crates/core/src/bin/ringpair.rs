//! Command-line front end: simulate, fit, design, sweep and report.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ringpair::fitmodels::{fit_bunching, fit_g2, initial_guess, tau_w, CorrelationKind};
use ringpair::ringdesign::{
    attenuation_budget, linewidth_hz, pair_flux_comb, phase_match_width, resonance_comb, spdc_pairs,
    DispersionTable, EffectiveIndex, RingSpec, TaperDesign,
};
use ringpair::scenario::{power_sweep, render_report, ReportSummary, ScenarioConfig, SweepReport, SUMMARY_FILE, SWEEP_FILE};
use ringpair::tcspc::{g2_normalize, read_correlogram_csv};
use ringpair::{Error, Result};

#[derive(Parser)]
#[command(name = "ringpair", version, about = "Microring photon-pair source simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set source.pump_power_mw=1.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.output_dir {
            overrides.push(format!("output_dir={}", toml_string(&dir.display().to_string())));
        }
        ScenarioConfig::load(&self.config, &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write curves plus a JSON summary.
    Simulate(ConfigArgs),
    /// Fit a correlogram CSV.
    Fit(FitArgs),
    /// Ring and coupler design calculations.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Run a scenario at several pump powers and regress the pair rate.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Pump powers in mW.
        #[arg(long, value_delimiter = ',', required = true)]
        powers_mw: Vec<f64>,
    },
    /// Print a summary or sweep report (file or output directory).
    Report { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Cross,
    #[value(name = "self")]
    SelfDegenerate,
    Thermal,
}

#[derive(Args)]
struct FitArgs {
    /// Correlogram CSV written by `simulate`.
    correlogram: PathBuf,
    #[arg(long, value_enum, default_value = "cross")]
    kind: FitKind,
    /// Per-detector timing jitter (standard deviation), ps.
    #[arg(long, default_value_t = 50.0)]
    jitter_ps: f64,
    /// Starting coherence time for thermal fits, ps.
    #[arg(long)]
    coherence_time_ps: Option<f64>,
}

#[derive(Subcommand)]
enum DesignCommand {
    /// Waveguide width where visible and IR effective indices cross.
    PhaseMatch {
        #[arg(long)]
        vis: PathBuf,
        #[arg(long)]
        ir: PathBuf,
        #[arg(long, default_value_t = 775.0)]
        vis_nm: f64,
        #[arg(long, default_value_t = 1550.0)]
        ir_nm: f64,
    },
    /// Resonance comb and down-conversion channels of a ring with constant indices.
    Pairs {
        #[arg(long)]
        radius_um: f64,
        #[arg(long)]
        n_eff_ir: f64,
        /// Defaults to the IR index (perfect phase matching).
        #[arg(long)]
        n_eff_vis: Option<f64>,
        #[arg(long, default_value_t = 1500.0)]
        ir_min_nm: f64,
        #[arg(long, default_value_t = 1600.0)]
        ir_max_nm: f64,
        /// Loaded quality factor of every IR mode.
        #[arg(long, default_value_t = 1e5)]
        q: f64,
        /// Pump azimuthal order; defaults to twice the IR mode nearest the band centre.
        #[arg(long)]
        pump_m: Option<i64>,
        /// Pair rate of the reference channel, Hz.
        #[arg(long, default_value_t = 1.0)]
        base_hz: f64,
    },
    /// Port powers of the calibrated WDM taper.
    Wdm {
        #[arg(long, default_value_t = 250.0)]
        min_length_um: f64,
        #[arg(long, default_value_t = 400.0)]
        max_length_um: f64,
        #[arg(long, default_value_t = 10.0)]
        step_um: f64,
        #[arg(long, value_delimiter = ',', default_value = "775,1550")]
        wavelengths_nm: Vec<f64>,
    },
    /// Attenuation of a lossy section, dB.
    Attenuation {
        #[arg(long)]
        coeff_db_per_cm: f64,
        #[arg(long)]
        length_cm: f64,
    },
}

fn open(path: &PathBuf) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let summary = ringpair::scenario::run_scenario(&cfg)?;
            print!("{}", render_report(&summary));
            println!("outputs written to {}", cfg.output_dir.display());
        }
        Command::Fit(args) => {
            let hist = read_correlogram_csv(open(&args.correlogram)?)?;
            let curve = g2_normalize(&hist)?;
            let smearing = tau_w(args.jitter_ps * 1e-12, hist.bin_width)?;
            match args.kind {
                FitKind::Thermal => {
                    let tc = match args.coherence_time_ps {
                        Some(t) => t * 1e-12,
                        None => initial_guess(&curve, CorrelationKind::CrossNondegenerate, smearing)?.coherence_time,
                    };
                    println!("{}", json(&fit_bunching(&curve, smearing, tc)?));
                }
                FitKind::Cross | FitKind::SelfDegenerate => {
                    let kind = match args.kind {
                        FitKind::SelfDegenerate => CorrelationKind::SelfDegenerate,
                        _ => CorrelationKind::CrossNondegenerate,
                    };
                    let init = initial_guess(&curve, kind, smearing)?;
                    println!("{}", json(&fit_g2(&curve, kind, &init)?));
                }
            }
        }
        Command::Design(d) => design(d)?,
        Command::Sweep { config, powers_mw } => {
            let cfg = config.load()?;
            let report = power_sweep(&cfg, &powers_mw)?;
            print!("{}", render_sweep(&report));
        }
        Command::Report { path } => {
            let path = if path.is_dir() {
                let sweep = path.join(SWEEP_FILE);
                if sweep.exists() {
                    sweep
                } else {
                    path.join(SUMMARY_FILE)
                }
            } else {
                path
            };
            if path.file_name().is_some_and(|n| n == SWEEP_FILE) {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let report: SweepReport =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                print!("{}", render_sweep(&report));
            } else {
                print!("{}", render_report(&ReportSummary::read(&path)?));
            }
        }
    }
    Ok(())
}

fn render_sweep(r: &SweepReport) -> String {
    let mut o = String::from("power_mw,fitted_rate_mhz,rate_error_mhz,car\n");
    for p in &r.points {
        let fit = p.summary.pair_fit.as_ref();
        let car = p.summary.correlation.as_ref().and_then(|c| c.car);
        o.push_str(&format!(
            "{},{},{},{}\n",
            p.pump_power_mw,
            fit.map_or(String::new(), |f| (f.pair_rate_hz * 1e-6).to_string()),
            fit.map_or(String::new(), |f| (f.pair_rate_error_hz * 1e-6).to_string()),
            car.map_or(String::new(), |c| c.to_string()),
        ));
    }
    match &r.rate_fit {
        Some(f) => o.push_str(&format!(
            "slope {:.4} +/- {:.4} MHz/mW, intercept {:.4} +/- {:.4} MHz (consistent with zero: {})\n",
            f.slope, f.slope_error, f.intercept, f.intercept_error, f.intercept_consistent_with_zero
        )),
        None => o.push_str("slope: not available (needs two or more fitted powers)\n"),
    }
    if let Some(d) = r.car_strictly_decreasing {
        o.push_str(&format!("CAR strictly decreasing with power: {d}\n"));
    }
    o
}

fn design(cmd: DesignCommand) -> Result<()> {
    match cmd {
        DesignCommand::PhaseMatch { vis, ir, vis_nm, ir_nm } => {
            let vis = DispersionTable::from_csv(open(&vis)?)?;
            let ir = DispersionTable::from_csv(open(&ir)?)?;
            let w = phase_match_width(&vis, &ir, vis_nm, ir_nm)?;
            println!("phase-matched width: {w:.4} um");
        }
        DesignCommand::Pairs {
            radius_um,
            n_eff_ir,
            n_eff_vis,
            ir_min_nm,
            ir_max_nm,
            q,
            pump_m,
            base_hz,
        } => {
            let ir_ring = RingSpec::new(radius_um, EffectiveIndex::Constant { n_eff: n_eff_ir })?;
            let vis_ring = RingSpec::new(
                radius_um,
                EffectiveIndex::Constant {
                    n_eff: n_eff_vis.unwrap_or(n_eff_ir),
                },
            )?;
            let ir = resonance_comb(&ir_ring, (ir_min_nm, ir_max_nm))?;
            let vis = resonance_comb(&vis_ring, (0.5 * ir_min_nm, 0.5 * ir_max_nm))?;
            let Some(centre) = ir.get(ir.len() / 2) else {
                return Err(Error::Config("IR band holds no resonances".into()));
            };
            let pump_m = pump_m.unwrap_or(2 * centre.m);
            let tol = linewidth_hz(centre.frequency_hz, q)?;
            let pairs = spdc_pairs(&vis, &ir, pump_m, tol);
            let qs = ir.iter().map(|r| (r.m, q)).collect();
            let flux = pair_flux_comb(&pairs, &qs, base_hz, q)?;
            println!("signal_m,idler_m,signal_nm,idler_nm,mismatch_hz,rate_hz");
            for f in &flux {
                let p = &f.pair;
                println!(
                    "{},{},{:.4},{:.4},{:.6e},{}",
                    p.signal.m,
                    p.idler.m,
                    ringpair::ringdesign::SPEED_OF_LIGHT / p.signal.frequency_hz * 1e9,
                    ringpair::ringdesign::SPEED_OF_LIGHT / p.idler.frequency_hz * 1e9,
                    p.energy_mismatch(),
                    f.rate_hz
                );
            }
        }
        DesignCommand::Wdm {
            min_length_um,
            max_length_um,
            step_um,
            wavelengths_nm,
        } => {
            if !(step_um > 0.0) || !(max_length_um >= min_length_um) {
                return Err(Error::Config("need step_um > 0 and max_length_um >= min_length_um".into()));
            }
            let design = TaperDesign::calibrated();
            println!("length_um,wavelength_nm,cross,through");
            let n = ((max_length_um - min_length_um) / step_um + 1e-9).floor() as usize;
            for i in 0..=n {
                let len = min_length_um + i as f64 * step_um;
                for &wl in &wavelengths_nm {
                    let p = design.transfer(len, wl)?;
                    println!("{len},{wl},{:.8},{:.8}", p.cross, p.through);
                }
            }
        }
        DesignCommand::Attenuation {
            coeff_db_per_cm,
            length_cm,
        } => {
            let db = attenuation_budget(coeff_db_per_cm, length_cm)?;
            println!(
                "{db} dB (transmittance {:.6e})",
                ringpair::detchain::db_to_transmittance(db)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
