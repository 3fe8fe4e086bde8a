use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Scenario};
use super::seeds;
use crate::encoding::{
    add_awgn, forward_measure, random_sensing_matrix, MeasurementSet, SensingMatrix, Snr,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{self, RunManifest, SeedRecord};
use crate::metrics::{aggregate_trials, mse, relative_l2, time_solver, CellSummary, TrialMetrics};
use crate::phantoms::{make_combined_phantom, make_debris_phantom, make_satellite_phantom, Scene};
use crate::solvers::{solve, SolverConfig, SolverMode};

/// One simulated acquisition: ground truth, apertures and echoes.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scene: Scene,
    pub phi: SensingMatrix,
    pub measurement: MeasurementSet,
}

/// The ground-truth scene of `trial`; it does not depend on `M` or the SNR.
pub fn build_phantom(cfg: &ExperimentConfig, trial: usize) -> Result<Scene> {
    let seed = seeds::phantom_seed(cfg.master_seed, cfg.scenario, trial);
    let p = &cfg.phantom;
    match cfg.scenario {
        Scenario::SatelliteOnly => make_satellite_phantom(cfg.n, &cfg.satellite_spec()),
        Scenario::DebrisOnly => {
            make_debris_phantom(cfg.n, p.debris_count, p.debris_amplitude, seed)
        }
        Scenario::Combined => make_combined_phantom(
            cfg.n,
            &cfg.satellite_spec(),
            p.debris_count,
            p.debris_amplitude,
            seed,
        ),
    }
}

/// The first `m` apertures of `trial`. Rows are seeded individually, so the
/// matrix for a larger `m` extends the one for a smaller `m`.
pub fn build_sensing_matrix(
    cfg: &ExperimentConfig,
    m: usize,
    trial: usize,
) -> Result<SensingMatrix> {
    random_sensing_matrix(cfg.n, m, cfg.bernoulli_p, |row| {
        seeds::aperture_seed(cfg.master_seed, cfg.scenario, trial, row)
    })
}

pub fn build_instance(
    cfg: &ExperimentConfig,
    m: usize,
    snr: Snr,
    noise_seed: u64,
    trial: usize,
) -> Result<Instance> {
    let scene = build_phantom(cfg, trial)?;
    let phi = build_sensing_matrix(cfg, m, trial)?;
    let clean = forward_measure(&phi, scene.image.pixels())?;
    let measurement = match snr {
        Snr::Noiseless => MeasurementSet::noiseless(clean),
        Snr::Db(db) => add_awgn(&clean, db, noise_seed)?,
    };
    Ok(Instance {
        scene,
        phi,
        measurement,
    })
}

/// Solver settings for one trial. Unless the config pins `epsilon` or the
/// noise variance, the solver is told the variance actually added.
pub fn trial_solver_config(
    cfg: &ExperimentConfig,
    mode: SolverMode,
    measurement: &MeasurementSet,
    seed: u64,
) -> SolverConfig {
    let mut sc = cfg.solver_config(mode);
    if sc.epsilon.is_none() && sc.noise_variance.is_none() {
        sc.noise_variance = Some(measurement.noise_variance);
    }
    sc.seed = seed;
    sc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub solver: SolverMode,
    pub snapshots: usize,
    pub snr_db: Snr,
    pub trial: usize,
    pub message: String,
}

impl std::fmt::Display for CellFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} M={} snr={} trial={}: {}",
            self.solver, self.snapshots, self.snr_db, self.trial, self.message
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialMetrics>,
    pub failures: Vec<CellFailure>,
    /// Every file written, CSV first and manifest last.
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn cell(&self, solver: SolverMode, snapshots: usize, snr: Snr) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.solver == solver && c.snapshots == snapshots && c.snr_db == snr)
    }
}

struct Job {
    m: usize,
    snr_index: usize,
    trial: usize,
}

struct JobOutput {
    metrics: Vec<TrialMetrics>,
    failures: Vec<CellFailure>,
    /// Recovered images, kept for the first trial of each cell only.
    images: Vec<(SolverMode, Vec<f64>)>,
    truth: Option<Image>,
    seeds: SeedRecord,
}

fn run_job(cfg: &ExperimentConfig, job: &Job, keep_images: bool) -> JobOutput {
    let snr = cfg.snr_db_list[job.snr_index];
    let noise_seed = seeds::noise_seed(
        cfg.master_seed,
        cfg.scenario,
        job.m,
        job.snr_index,
        job.trial,
    );
    let mut out = JobOutput {
        metrics: Vec::new(),
        failures: Vec::new(),
        images: Vec::new(),
        truth: None,
        seeds: SeedRecord {
            snapshots: job.m,
            snr_index: job.snr_index,
            trial: job.trial,
            noise_seed,
            phantom_seed: seeds::phantom_seed(cfg.master_seed, cfg.scenario, job.trial),
        },
    };
    let fail = |solver, message: String| CellFailure {
        solver,
        snapshots: job.m,
        snr_db: snr,
        trial: job.trial,
        message,
    };
    let instance = match build_instance(cfg, job.m, snr, noise_seed, job.trial) {
        Ok(i) => i,
        Err(e) => {
            out.failures = cfg
                .solvers
                .iter()
                .map(|&s| fail(s, e.to_string()))
                .collect();
            return out;
        }
    };
    let truth = instance.scene.image.pixels();
    for &mode in &cfg.solvers {
        let seed = seeds::solver_seed(
            cfg.master_seed,
            cfg.scenario,
            mode,
            job.m,
            job.snr_index,
            job.trial,
        );
        let sc = trial_solver_config(cfg, mode, &instance.measurement, seed);
        let (result, runtime_s) =
            time_solver(|| solve(&instance.phi, &instance.measurement.y, &sc));
        let scored = result.and_then(|r| {
            let metrics = TrialMetrics {
                mse: mse(&r.x_hat, truth)?,
                relative_l2: relative_l2(&r.x_hat, truth)?,
                runtime_s,
                solver: mode,
                snapshots_m: job.m,
                snr_db: snr,
                trial_seed: seed,
            };
            Ok((metrics, r.x_hat))
        });
        match scored {
            Ok((metrics, x_hat)) => {
                out.metrics.push(metrics);
                if keep_images && job.trial == 0 {
                    out.images.push((mode, x_hat));
                }
            }
            Err(e) => out.failures.push(fail(mode, e.to_string())),
        }
    }
    if keep_images && job.trial == 0 {
        out.truth = Some(instance.scene.image);
    }
    out
}

fn run_grid(
    cfg: &ExperimentConfig,
    ms: &[usize],
    snr_indices: &[usize],
    concurrent: bool,
    keep_images: bool,
) -> Vec<JobOutput> {
    let jobs: Vec<Job> = ms
        .iter()
        .flat_map(|&m| {
            snr_indices.iter().flat_map(move |&snr_index| {
                (0..cfg.trials).map(move |trial| Job {
                    m,
                    snr_index,
                    trial,
                })
            })
        })
        .collect();
    // Both branches return outputs in job order, so everything downstream is
    // independent of scheduling.
    if concurrent {
        jobs.par_iter()
            .map(|j| run_job(cfg, j, keep_images))
            .collect()
    } else {
        jobs.iter().map(|j| run_job(cfg, j, keep_images)).collect()
    }
}

fn snr_tag(snr: Snr) -> String {
    match snr {
        Snr::Noiseless => "noiseless".to_string(),
        Snr::Db(db) => format!("{db}"),
    }
}

/// `<scenario>_<solver>_M<count>_snr<db>.pgm`.
pub fn image_file_name(scenario: Scenario, solver: SolverMode, m: usize, snr: Snr) -> String {
    format!(
        "{}_{}_M{}_snr{}.pgm",
        scenario.file_stem(),
        solver,
        m,
        snr_tag(snr)
    )
}

/// Negative pixels, which the solvers may produce, are clamped to zero for display.
pub fn display_image(side: usize, pixels: &[f64]) -> Result<Image> {
    Image::from_vec(side, pixels.iter().map(|&v| v.max(0.0)).collect())
}

pub(crate) fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::config("output_dir", format!("{}: {e}", dir.display())))
}

fn finish(
    cfg: &ExperimentConfig,
    command: &str,
    csv_name: &str,
    outputs: Vec<JobOutput>,
) -> Result<ExperimentReport> {
    let dir = cfg.output_dir.as_path();
    prepare_output_dir(dir)?;
    let mut manifest = RunManifest::new(command, cfg);
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();

    let csv_path = dir.join(csv_name);
    for out in &outputs {
        trials.extend(out.metrics.iter().cloned());
        failures.extend(out.failures.iter().cloned());
        manifest.seeds.push(out.seeds.clone());
    }
    let cells = if trials.is_empty() {
        Vec::new()
    } else {
        aggregate_trials(&trials)?
    };
    io::write_report_csv(&cells, &csv_path)?;
    files.push(csv_path);

    let mut truth_written = false;
    for out in &outputs {
        if let (Some(truth), false) = (&out.truth, truth_written) {
            let path = dir.join(format!("{}_truth.pgm", cfg.scenario.file_stem()));
            io::write_pgm(truth, &path)?;
            files.push(path);
            truth_written = true;
        }
        let snr = cfg.snr_db_list[out.seeds.snr_index];
        for (mode, x_hat) in &out.images {
            let path = dir.join(image_file_name(
                cfg.scenario,
                *mode,
                out.seeds.snapshots,
                snr,
            ));
            io::write_pgm(&display_image(cfg.n, x_hat)?, &path)?;
            files.push(path);
        }
    }

    for f in &files {
        manifest.add_file(dir, f)?;
    }
    manifest.failures = failures.iter().map(ToString::to_string).collect();
    let stem = csv_name.trim_end_matches(".csv");
    let manifest_path = dir.join(format!("{stem}_manifest.json"));
    io::write_manifest(&manifest, &manifest_path)?;
    files.push(manifest_path);

    Ok(ExperimentReport {
        cells,
        trials,
        failures,
        files,
        manifest,
    })
}

/// Every (solver, M, SNR, trial) of the config. Writes `metrics.csv`, the
/// first-trial image of each cell, the first-trial ground truth and
/// `metrics_manifest.json` into the output directory.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let snr_indices: Vec<usize> = (0..cfg.snr_db_list.len()).collect();
    let outputs = run_grid(
        cfg,
        &cfg.snapshot_counts,
        &snr_indices,
        cfg.concurrent,
        true,
    );
    finish(cfg, "run-scenario", "metrics.csv", outputs)
}

/// All SNRs at the single snapshot count [`ExperimentConfig::sweep_m`];
/// writes `snr_sweep.csv`, images and `snr_sweep_manifest.json`.
pub fn sweep_snr(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let snr_indices: Vec<usize> = (0..cfg.snr_db_list.len()).collect();
    let outputs = run_grid(cfg, &[cfg.sweep_m()], &snr_indices, cfg.concurrent, true);
    finish(cfg, "sweep-snr", "snr_sweep.csv", outputs)
}

/// Times every solver at every snapshot count and the first SNR of the
/// config. Trials always run sequentially so timings are not disturbed.
/// Writes `runtime.csv` and `runtime_manifest.json`.
pub fn benchmark_runtime(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outputs = run_grid(cfg, &cfg.snapshot_counts, &[0], false, false);
    finish(cfg, "benchmark", "runtime.csv", outputs)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ties share the average of their ranks.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant or the
/// inputs have fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean = (xs.len() as f64 + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Rank correlation between snapshot count and mean runtime for one solver.
pub fn runtime_trend(cells: &[CellSummary], solver: SolverMode) -> Option<f64> {
    let (ms, ts): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| c.solver == solver)
        .map(|c| (c.snapshots as f64, c.runtime_mean_s))
        .unzip();
    spearman(&ms, &ts)
}
