use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use encoded_isar::harness::{
    self, DebrisDecision, ExperimentConfig, ExperimentReport, ProcedureStatus, Scenario,
};
use encoded_isar::{io, Error};

/// Encoded-aperture ISAR imaging simulator.
#[derive(Debug, Parser)]
#[command(name = "isar-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Without it a 40x40 SatelliteOnly default is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Overrides `master_seed` from the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `trials` from the config.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Every solver, snapshot count, SNR and trial of the config.
    RunScenario(Common),
    /// All configured SNRs at a single snapshot count.
    SweepSnr(Common),
    /// Solver runtimes per snapshot count at the first configured SNR.
    Benchmark(Common),
    /// Grow the snapshot count until the image is good enough.
    ImagingProcedure(Common),
    /// Compare simulated Doppler bandwidths with the closed form.
    PhysicsCheck(Common),
    /// Coherence diagnostics of the sensing matrices.
    ValidateMatrix(Common),
}

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => io::load_config(path)?,
        None => ExperimentConfig::new(Scenario::SatelliteOnly, 40),
    };
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &ExperimentReport) -> u8 {
    println!("solver  M     snr        trials  mse_mean     rel_l2_mean  runtime_s");
    for c in &report.cells {
        println!(
            "{:<7} {:<5} {:<10} {:<7} {:<12.5e} {:<12.5e} {:.4}",
            c.solver.to_string(),
            c.snapshots,
            c.snr_db.to_string(),
            c.trials,
            c.mse_mean,
            c.rel_l2_mean,
            c.runtime_mean_s
        );
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for failure in &report.failures {
        eprintln!("failed: {failure}");
    }
    if report.is_complete() {
        0
    } else {
        eprintln!("{} trial(s) failed", report.failures.len());
        EXIT_PARTIAL
    }
}

fn execute(command: &Command) -> Result<u8, Error> {
    match command {
        Command::RunScenario(c) => Ok(print_report(&harness::run_scenario(&load(c)?)?)),
        Command::SweepSnr(c) => Ok(print_report(&harness::sweep_snr(&load(c)?)?)),
        Command::Benchmark(c) => {
            let cfg = load(c)?;
            let report = harness::benchmark_runtime(&cfg)?;
            let code = print_report(&report);
            for &solver in &cfg.solvers {
                if let Some(rho) = harness::runtime_trend(&report.cells, solver) {
                    println!("{solver}: Spearman(M, runtime) = {rho:.3}");
                }
            }
            Ok(code)
        }
        Command::ImagingProcedure(c) => {
            let cfg = load(c)?;
            let (outcome, _) = harness::run_imaging_procedure(&cfg)?;
            for s in &outcome.steps {
                println!(
                    "M={:<5} quality={:.4e} rel_l2={:.4e} runtime={:.3}s",
                    s.snapshots, s.quality, s.relative_l2, s.runtime_s
                );
            }
            let status = match outcome.status {
                ProcedureStatus::QualityMet => "quality met",
                ProcedureStatus::BudgetExhausted => "budget exhausted",
            };
            let decision = match outcome.decision {
                DebrisDecision::DebrisDetected => "debris detected",
                DebrisDecision::NoDebrisDetected => "no debris detected",
            };
            println!(
                "{status} at M={}; {decision} (outside energy {:.3})",
                outcome.snapshots, outcome.outside_energy_fraction
            );
            Ok(0)
        }
        Command::PhysicsCheck(c) => {
            let (report, _) = harness::run_physics_check(&load(c)?)?;
            for r in &report.rows {
                println!(
                    "{} r={:.3} m omega={:.3} rad/s measured={:.2} Hz predicted={:.2} Hz err={:.4}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.radius_m,
                    r.omega_rad_s,
                    r.measured_hz,
                    r.predicted_hz,
                    r.relative_error
                );
            }
            Ok(if report.passed() { 0 } else { EXIT_PARTIAL })
        }
        Command::ValidateMatrix(c) => {
            let (entries, _) = harness::run_validate_matrix(&load(c)?)?;
            for e in &entries {
                let coherence = e
                    .coherence
                    .mutual_coherence
                    .map_or("n/a".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{} M={} coherence={} duplicates={} zero_columns={} active={:.3} forward_err={:.2e}",
                    if e.passed() { "PASS" } else { "FAIL" },
                    e.snapshots,
                    coherence,
                    e.coherence.duplicate_row_count,
                    e.coherence.zero_column_count,
                    e.active_fraction,
                    e.forward_relative_error
                );
            }
            Ok(if entries.iter().all(|e| e.passed()) {
                0
            } else {
                EXIT_PARTIAL
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            // A config file that cannot be read is a config problem too.
            let config_read = matches!(e, Error::Io { .. }) && is_config_path(&cli.command, &e);
            if e.is_config() || config_read {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_PARTIAL)
            }
        }
    }
}

fn is_config_path(command: &Command, err: &Error) -> bool {
    let common = match command {
        Command::RunScenario(c)
        | Command::SweepSnr(c)
        | Command::Benchmark(c)
        | Command::ImagingProcedure(c)
        | Command::PhysicsCheck(c)
        | Command::ValidateMatrix(c) => c,
    };
    match (err, &common.config) {
        (Error::Io { path, .. }, Some(cfg)) => path == cfg,
        _ => false,
    }
}
