//! Stand-alone checks exposed by the CLI: the Doppler-bandwidth premise of
//! the signal model, and diagnostics of the sensing matrices a run would use.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{build_sensing_matrix, prepare_output_dir};
use super::seeds;
use crate::encoding::{forward_measure, rip_diagnostics, CoherenceReport, SensingMatrix};
use crate::error::Result;
use crate::io::{self, RunManifest};
use crate::signal_model::{spectral_bandwidth_check, RadarParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub radius_m: f64,
    pub omega_rad_s: f64,
    pub measured_hz: f64,
    pub predicted_hz: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsReport {
    pub wavelength_m: f64,
    pub tolerance: f64,
    pub rows: Vec<BandwidthRow>,
}

impl PhysicsReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Compares the 95%-energy bandwidth of simulated single-scatterer echoes with
/// the closed-form Doppler bandwidth for random (radius, ω) pairs at X band.
pub fn physics_check(cfg: &ExperimentConfig) -> Result<PhysicsReport> {
    cfg.validate()?;
    let p = &cfg.physics;
    let radar = RadarParams::x_band();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::physics_seed(cfg.master_seed));
    let mut rows = Vec::with_capacity(p.pairs);
    for _ in 0..p.pairs {
        let radius_m = rng.gen_range(p.radius_range_m.0..=p.radius_range_m.1);
        let omega_rad_s = rng.gen_range(p.omega_range_rad_s.0..=p.omega_range_rad_s.1);
        let (measured_hz, predicted_hz) =
            spectral_bandwidth_check(radius_m, omega_rad_s, &radar, p.oversample)?;
        let relative_error = (measured_hz - predicted_hz).abs() / predicted_hz;
        rows.push(BandwidthRow {
            radius_m,
            omega_rad_s,
            measured_hz,
            predicted_hz,
            relative_error,
            pass: relative_error <= p.tolerance,
        });
    }
    Ok(PhysicsReport {
        wavelength_m: radar.wavelength_m,
        tolerance: p.tolerance,
        rows,
    })
}

/// Runs [`physics_check`] and writes `physics_check.json` plus a manifest.
pub fn run_physics_check(cfg: &ExperimentConfig) -> Result<(PhysicsReport, RunManifest)> {
    let report = physics_check(cfg)?;
    let dir = cfg.output_dir.as_path();
    prepare_output_dir(dir)?;
    let path = dir.join("physics_check.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
    text.push('\n');
    io::write_atomic(&path, text.as_bytes())?;
    let mut manifest = RunManifest::new("physics-check", cfg);
    manifest.add_file(dir, &path)?;
    io::write_manifest(&manifest, &dir.join("physics_check_manifest.json"))?;
    Ok((report, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixEntry {
    pub snapshots: usize,
    pub coherence: CoherenceReport,
    /// Share of active spot beams over all apertures.
    pub active_fraction: f64,
    /// Largest gap between `forward_measure` and a plain dot-product loop on a
    /// random scene, relative to the largest echo.
    pub forward_relative_error: f64,
}

impl MatrixEntry {
    pub fn passed(&self) -> bool {
        self.coherence.is_underdetermined && self.forward_relative_error <= 1e-12
    }
}

fn naive_forward(phi: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..phi.nrows())
        .map(|i| (0..phi.ncols()).map(|j| phi[(i, j)] * x[j]).sum())
        .collect()
}

fn forward_error(phi: &SensingMatrix, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..phi.cols()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let fast = forward_measure(phi, &x)?;
    let slow = naive_forward(phi.data(), &x);
    let scale = slow
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    Ok(fast
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale)
}

/// Builds the first-trial sensing matrix for every configured snapshot count
/// and reports its coherence diagnostics and a forward-model cross-check.
pub fn validate_matrix(cfg: &ExperimentConfig) -> Result<Vec<(MatrixEntry, SensingMatrix)>> {
    cfg.validate()?;
    cfg.snapshot_counts
        .iter()
        .map(|&m| {
            let phi = build_sensing_matrix(cfg, m, 0)?;
            let active = phi.data().iter().filter(|&&v| v != 0.0).count();
            let entry = MatrixEntry {
                snapshots: m,
                coherence: rip_diagnostics(&phi),
                active_fraction: active as f64 / (phi.rows() * phi.cols()) as f64,
                forward_relative_error: forward_error(
                    &phi,
                    seeds::derive_seed(cfg.master_seed, &[m as u64]),
                )?,
            };
            Ok((entry, phi))
        })
        .collect()
}

/// Runs [`validate_matrix`] and writes `matrix_report.json`, each matrix as
/// `phi_M<count>.csv`, and a manifest.
pub fn run_validate_matrix(cfg: &ExperimentConfig) -> Result<(Vec<MatrixEntry>, RunManifest)> {
    let results = validate_matrix(cfg)?;
    let dir = cfg.output_dir.as_path();
    prepare_output_dir(dir)?;
    let mut manifest = RunManifest::new("validate-matrix", cfg);
    let mut entries = Vec::with_capacity(results.len());
    for (entry, phi) in results {
        let path = dir.join(format!("phi_M{}.csv", entry.snapshots));
        io::write_csv_matrix(phi.data(), &path)?;
        manifest.add_file(dir, &path)?;
        entries.push(entry);
    }
    let path = dir.join("matrix_report.json");
    let mut text =
        serde_json::to_string_pretty(&entries).expect("report serialization cannot fail");
    text.push('\n');
    io::write_atomic(&path, text.as_bytes())?;
    manifest.add_file(dir, &path)?;
    io::write_manifest(&manifest, &dir.join("matrix_manifest.json"))?;
    Ok((entries, manifest))
}
