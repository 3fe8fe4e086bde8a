use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::budget::ObservationBudget;
use crate::encoding::Snr;
use crate::error::{Error, Result};
use crate::phantoms::{Rect, SatelliteSpec};
use crate::solvers::{SolverConfig, SolverMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    SatelliteOnly,
    DebrisOnly,
    Combined,
}

impl Scenario {
    /// Prefix used for output file names.
    pub fn file_stem(&self) -> &'static str {
        match self {
            Scenario::SatelliteOnly => "satellite_only",
            Scenario::DebrisOnly => "debris_only",
            Scenario::Combined => "combined",
        }
    }

    pub(crate) fn code(&self) -> u64 {
        match self {
            Scenario::SatelliteOnly => 1,
            Scenario::DebrisOnly => 2,
            Scenario::Combined => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    /// Number of debris spikes (DebrisOnly and Combined).
    pub debris_count: usize,
    /// Uniform amplitude range of the debris spikes.
    pub debris_amplitude: (f64, f64),
    /// Satellite silhouette; `None` uses the built-in body-plus-panels layout.
    pub satellite: Option<SatelliteSpec>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            debris_count: 10,
            debris_amplitude: (0.5, 1.5),
            satellite: None,
        }
    }
}

/// How the imaging procedure judges whether the current image is good enough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityMode {
    /// Relative L2 error against the known ground truth.
    Simulation,
    /// Relative misfit on held-out measurements; needs no ground truth.
    Deployment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureConfig {
    pub solver: SolverMode,
    pub initial_snapshots: usize,
    pub m_step: usize,
    /// The loop stops once the quality measure is at or below this value.
    pub quality_threshold: f64,
    pub quality_mode: QualityMode,
    /// Measurement SNR; `None` takes the first entry of `snr_db_list`.
    pub snr: Option<Snr>,
    /// Share of the snapshots held out for the deployment-mode check.
    pub holdout_fraction: f64,
    /// Debris is reported when this share of the image energy lies outside
    /// the satellite support.
    pub detection_threshold: f64,
}

impl Default for ProcedureConfig {
    fn default() -> Self {
        Self {
            solver: SolverMode::L1,
            initial_snapshots: 100,
            m_step: 50,
            quality_threshold: 1e-2,
            quality_mode: QualityMode::Simulation,
            snr: None,
            holdout_fraction: 0.1,
            detection_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Number of random (radius, angular velocity) pairs.
    pub pairs: usize,
    pub radius_range_m: (f64, f64),
    pub omega_range_rad_s: (f64, f64),
    /// Sampling rate as a multiple of the Doppler bandwidth.
    pub oversample: f64,
    /// Allowed relative gap between measured and closed-form bandwidth.
    pub tolerance: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            pairs: 10,
            radius_range_m: (0.5, 10.0),
            omega_range_rad_s: (0.05, 1.0),
            oversample: 4.0,
            tolerance: 0.15,
        }
    }
}

fn default_snapshot_counts() -> Vec<usize> {
    vec![100, 200, 300]
}

fn default_snr_list() -> Vec<Snr> {
    vec![Snr::Db(5.0)]
}

fn default_trials() -> usize {
    100
}

fn default_solvers() -> Vec<SolverMode> {
    SolverMode::ALL.to_vec()
}

fn default_bernoulli_p() -> f64 {
    0.2
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Everything one experiment run needs. Only `scenario` and `n` are required
/// in JSON; every other field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Grid side; the scene has `n²` pixels.
    pub n: usize,
    #[serde(default = "default_snapshot_counts")]
    pub snapshot_counts: Vec<usize>,
    #[serde(default = "default_snr_list")]
    pub snr_db_list: Vec<Snr>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverMode>,
    /// Probability that a spot beam is active in an aperture.
    #[serde(default = "default_bernoulli_p")]
    pub bernoulli_p: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub phantom: PhantomConfig,
    /// Per-mode solver overrides; missing modes use solver defaults.
    #[serde(default)]
    pub solver_configs: BTreeMap<SolverMode, SolverConfig>,
    #[serde(default)]
    pub budget: ObservationBudget,
    /// Snapshot count of the SNR sweep; `None` takes the first of `snapshot_counts`.
    #[serde(default)]
    pub sweep_snapshots: Option<usize>,
    #[serde(default)]
    pub procedure: ProcedureConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    /// Run trials on the rayon thread pool.
    #[serde(default)]
    pub concurrent: bool,
}

fn check(ok: bool, field: impl Into<String>, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

fn check_range(range: (f64, f64), field: &str) -> Result<()> {
    check(
        range.0 > 0.0 && range.0 <= range.1 && range.1.is_finite(),
        field,
        format!(
            "range [{}, {}] must satisfy 0 < low <= high",
            range.0, range.1
        ),
    )
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, n: usize) -> Self {
        Self {
            scenario,
            n,
            snapshot_counts: default_snapshot_counts(),
            snr_db_list: default_snr_list(),
            trials: default_trials(),
            solvers: default_solvers(),
            bernoulli_p: default_bernoulli_p(),
            master_seed: 0,
            output_dir: default_output_dir(),
            phantom: PhantomConfig::default(),
            solver_configs: BTreeMap::new(),
            budget: ObservationBudget::default(),
            sweep_snapshots: None,
            procedure: ProcedureConfig::default(),
            physics: PhysicsConfig::default(),
            concurrent: false,
        }
    }

    /// The satellite layout in effect for this grid.
    pub fn satellite_spec(&self) -> SatelliteSpec {
        self.phantom
            .satellite
            .clone()
            .unwrap_or_else(|| SatelliteSpec::default_for(self.n))
    }

    /// Solver settings for `mode`, with the mode field forced to match.
    pub fn solver_config(&self, mode: SolverMode) -> SolverConfig {
        let mut cfg = self.solver_configs.get(&mode).cloned().unwrap_or_default();
        cfg.mode = mode;
        cfg
    }

    pub fn sweep_m(&self) -> usize {
        self.sweep_snapshots
            .unwrap_or_else(|| self.snapshot_counts.first().copied().unwrap_or(0))
    }

    /// Largest snapshot count allowed: below `n²` and within the observation budget.
    pub fn max_snapshots(&self) -> usize {
        (self.n * self.n)
            .saturating_sub(1)
            .min(self.budget.max_snapshots())
    }

    fn check_snapshots(&self, m: usize, field: &str) -> Result<()> {
        let pixels = self.n * self.n;
        check(m >= 1, field, "must be >= 1")?;
        check(
            m < pixels,
            field,
            format!("{m} snapshots is not below n² = {pixels}"),
        )?;
        let limit = self.budget.max_snapshots();
        check(
            m <= limit,
            field,
            format!("{m} snapshots exceed the observation budget of {limit}"),
        )
    }

    pub fn validate(&self) -> Result<()> {
        check(self.n >= 2, "n", "grid side must be >= 2")?;
        self.budget.validate().map_err(|e| prefix("budget", e))?;

        check(
            !self.snapshot_counts.is_empty(),
            "snapshot_counts",
            "must not be empty",
        )?;
        for (i, &m) in self.snapshot_counts.iter().enumerate() {
            self.check_snapshots(m, &format!("snapshot_counts[{i}]"))?;
        }
        if let Some(m) = self.sweep_snapshots {
            self.check_snapshots(m, "sweep_snapshots")?;
        }

        check(
            !self.snr_db_list.is_empty(),
            "snr_db_list",
            "must not be empty",
        )?;
        for (i, snr) in self.snr_db_list.iter().enumerate() {
            check(
                snr.db().is_none_or(f64::is_finite),
                format!("snr_db_list[{i}]"),
                "must be finite",
            )?;
        }
        check(self.trials >= 1, "trials", "must be >= 1")?;
        check(!self.solvers.is_empty(), "solvers", "must not be empty")?;
        for (i, mode) in self.solvers.iter().enumerate() {
            check(
                !self.solvers[..i].contains(mode),
                format!("solvers[{i}]"),
                format!("{mode} listed twice"),
            )?;
        }
        check(
            self.bernoulli_p > 0.0 && self.bernoulli_p <= 1.0,
            "bernoulli_p",
            "must lie in (0, 1]",
        )?;

        self.validate_phantom()?;

        for (mode, cfg) in &self.solver_configs {
            check(
                cfg.mode == *mode || cfg.mode == SolverConfig::default().mode,
                format!("solver_configs.{mode}.mode"),
                format!("mode {} filed under {mode}", cfg.mode),
            )?;
            let mut cfg = cfg.clone();
            cfg.mode = *mode;
            cfg.validate()
                .map_err(|e| prefix(&format!("solver_configs.{mode}"), e))?;
        }

        self.validate_procedure()?;
        self.validate_physics()
    }

    fn validate_phantom(&self) -> Result<()> {
        let p = &self.phantom;
        check_range(p.debris_amplitude, "phantom.debris_amplitude")?;
        let spec = self.satellite_spec();
        if self.scenario != Scenario::DebrisOnly {
            for (i, r) in spec.rects().enumerate() {
                check(
                    fits(r, self.n),
                    format!("phantom.satellite.rect[{i}]"),
                    format!("{r:?} does not fit inside the {0}x{0} grid", self.n),
                )?;
            }
        }
        if self.scenario != Scenario::SatelliteOnly {
            let free = match self.scenario {
                Scenario::Combined => (0..self.n * self.n)
                    .filter(|&q| !spec.covers(q / self.n, q % self.n))
                    .count(),
                _ => self.n * self.n,
            };
            check(
                p.debris_count >= 1 && p.debris_count <= free,
                "phantom.debris_count",
                format!("must lie in 1..={free}"),
            )?;
        }
        Ok(())
    }

    fn validate_procedure(&self) -> Result<()> {
        let p = &self.procedure;
        self.check_snapshots(p.initial_snapshots, "procedure.initial_snapshots")?;
        check(p.m_step >= 1, "procedure.m_step", "must be >= 1")?;
        check(
            p.quality_threshold > 0.0 && p.quality_threshold.is_finite(),
            "procedure.quality_threshold",
            "must be finite and > 0",
        )?;
        check(
            p.holdout_fraction > 0.0 && p.holdout_fraction < 0.5,
            "procedure.holdout_fraction",
            "must lie in (0, 0.5)",
        )?;
        check(
            (0.0..=1.0).contains(&p.detection_threshold),
            "procedure.detection_threshold",
            "must lie in [0, 1]",
        )?;
        if let Some(snr) = p.snr {
            check(
                snr.db().is_none_or(f64::is_finite),
                "procedure.snr",
                "must be finite",
            )?;
        }
        Ok(())
    }

    fn validate_physics(&self) -> Result<()> {
        let p = &self.physics;
        check(p.pairs >= 1, "physics.pairs", "must be >= 1")?;
        check_range(p.radius_range_m, "physics.radius_range_m")?;
        check_range(p.omega_range_rad_s, "physics.omega_range_rad_s")?;
        check(p.oversample >= 2.0, "physics.oversample", "must be >= 2")?;
        check(p.tolerance > 0.0, "physics.tolerance", "must be > 0")
    }
}

fn fits(r: &Rect, n: usize) -> bool {
    r.height > 0
        && r.width > 0
        && r.row + r.height <= n
        && r.col + r.width <= n
        && r.amplitude >= 0.0
}

fn prefix(path: &str, err: Error) -> Error {
    match err {
        Error::Config { field, message } => Error::config(format!("{path}.{field}"), message),
        other => other,
    }
}
