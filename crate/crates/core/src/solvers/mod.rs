//! Sparse-recovery solvers for `y = Φ x`.
//!
//! * [`solve_l1`]: basis pursuit `min ‖x‖₁ s.t. ‖y − Φx‖₂ ≤ ε`
//! * [`solve_tv`]: `min ‖X‖_TV s.t. ‖y − Φx‖₂ ≤ ε` with isotropic TV
//! * [`solve_sl0`]: smoothed-L0 with equality projections
//! * [`solve_sbl`]: evidence-maximizing sparse Bayesian learning
//!
//! L1 and TV share a Nesterov-accelerated smoothing solver with continuation
//! on the smoothing parameter (see [`nesta`]).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoding::SensingMatrix;
use crate::error::{Error, Result};

mod nesta;
mod rowspace;
mod sbl;
mod sl0;
mod tv;

pub use nesta::{huber_l1_value_grad, smoothed_tv_value_grad};
pub use tv::tv_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverMode {
    L1,
    TV,
    SL0,
    SBL,
}

impl SolverMode {
    pub const ALL: [SolverMode; 4] = [
        SolverMode::L1,
        SolverMode::TV,
        SolverMode::SL0,
        SolverMode::SBL,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMode::L1 => "L1",
            SolverMode::TV => "TV",
            SolverMode::SL0 => "SL0",
            SolverMode::SBL => "SBL",
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(SolverMode::L1),
            "TV" => Ok(SolverMode::TV),
            "SL0" => Ok(SolverMode::SL0),
            "SBL" => Ok(SolverMode::SBL),
            _ => Err(Error::arg(format!("unknown solver `{s}`"))),
        }
    }
}

/// Parameters for every solver; each mode reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Residual bound `‖y − Φx‖₂ ≤ ε`. `None` derives it from `noise_variance`
    /// as `√(M σ²)`, or 0 when no noise variance is known.
    pub epsilon: Option<f64>,
    /// Variance of the measurement noise, when known.
    pub noise_variance: Option<f64>,
    /// Smoothing parameter reached by the last continuation stage.
    pub mu_final: f64,
    pub continuation_stages: usize,
    pub max_iters_per_stage: usize,
    /// Relative change of the smoothed objective that ends the final stage.
    pub convergence_tol: f64,
    pub sl0_sigma_decrease: f64,
    pub sl0_sigma_min: f64,
    pub sl0_inner_iters: usize,
    /// Gradient step applied to the smoothed-L0 surrogate.
    pub sl0_step: f64,
    /// Precision above which an SBL coefficient is pruned to zero.
    pub sbl_prune_threshold: f64,
    pub sbl_max_iters: usize,
    /// Relative hyperparameter change that ends SBL.
    pub sbl_tol: f64,
    /// Re-estimate the noise variance jointly instead of holding it fixed.
    pub sbl_estimate_noise: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::L1,
            epsilon: None,
            noise_variance: None,
            mu_final: 1e-5,
            continuation_stages: 5,
            max_iters_per_stage: 5000,
            convergence_tol: 1e-5,
            sl0_sigma_decrease: 0.7,
            sl0_sigma_min: 1e-3,
            sl0_inner_iters: 3,
            sl0_step: 2.0,
            sbl_prune_threshold: 1e8,
            sbl_max_iters: 200,
            sbl_tol: 1e-4,
            sbl_estimate_noise: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn for_mode(mode: SolverMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, msg))
            }
        };
        check(
            self.epsilon.is_none_or(|e| e >= 0.0 && e.is_finite()),
            "epsilon",
            "must be finite and >= 0",
        )?;
        check(
            self.noise_variance
                .is_none_or(|v| v >= 0.0 && v.is_finite()),
            "noise_variance",
            "must be finite and >= 0",
        )?;
        check(
            self.mu_final > 0.0 && self.mu_final.is_finite(),
            "mu_final",
            "must be > 0",
        )?;
        check(
            self.continuation_stages >= 1,
            "continuation_stages",
            "must be >= 1",
        )?;
        check(
            self.max_iters_per_stage >= 1,
            "max_iters_per_stage",
            "must be >= 1",
        )?;
        check(self.convergence_tol > 0.0, "convergence_tol", "must be > 0")?;
        check(
            self.sl0_sigma_decrease > 0.0 && self.sl0_sigma_decrease < 1.0,
            "sl0_sigma_decrease",
            "must lie in (0, 1)",
        )?;
        check(self.sl0_sigma_min > 0.0, "sl0_sigma_min", "must be > 0")?;
        check(self.sl0_inner_iters >= 1, "sl0_inner_iters", "must be >= 1")?;
        check(self.sl0_step > 0.0, "sl0_step", "must be > 0")?;
        check(
            self.sbl_prune_threshold > 0.0,
            "sbl_prune_threshold",
            "must be > 0",
        )?;
        check(self.sbl_max_iters >= 1, "sbl_max_iters", "must be >= 1")?;
        check(self.sbl_tol > 0.0, "sbl_tol", "must be > 0")?;
        Ok(())
    }

    /// Residual bound actually enforced for `m` measurements.
    pub fn effective_epsilon(&self, m: usize) -> f64 {
        self.epsilon
            .unwrap_or_else(|| (m as f64 * self.noise_variance.unwrap_or(0.0)).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverWarning {
    /// Iteration budget ran out before the stopping rule fired.
    NotConverged,
    /// `ΦΦᵀ` was rank deficient; a pseudoinverse was used.
    PseudoinverseFallback,
    /// The SBL posterior covariance needed diagonal jitter.
    JitterRegularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub mode: SolverMode,
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    /// `‖y − Φ x̂‖₂`.
    pub final_residual: f64,
    /// Objective at the end of each stage: smoothed norm per continuation
    /// stage (L1, TV), smoothed-L0 surrogate per σ (SL0), negative log
    /// evidence per iteration (SBL).
    pub objective_trace: Vec<f64>,
    /// SL0 only: the σ value of every stage.
    pub sigma_schedule: Vec<f64>,
    /// SBL only: log marginal likelihood at every iteration.
    pub evidence_trace: Vec<f64>,
    pub warnings: Vec<SolverWarning>,
    pub wall_time_s: f64,
}

impl RecoveryResult {
    pub fn converged(&self) -> bool {
        !self.warnings.contains(&SolverWarning::NotConverged)
    }
}

/// What a solver body hands back before timing and residual bookkeeping.
pub(crate) struct RawSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub sigma_schedule: Vec<f64>,
    pub evidence_trace: Vec<f64>,
    pub warnings: Vec<SolverWarning>,
}

impl RawSolution {
    pub fn new(x: Vec<f64>) -> Self {
        Self {
            x,
            iterations: 0,
            objective_trace: Vec::new(),
            sigma_schedule: Vec::new(),
            evidence_trace: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

fn check_inputs(
    phi: &SensingMatrix,
    y: &[f64],
    cfg: &SolverConfig,
    mode: SolverMode,
) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::arg(format!(
            "config mode {} passed to the {mode} solver",
            cfg.mode
        )));
    }
    cfg.validate()?;
    if y.len() != phi.rows() {
        return Err(Error::DimensionMismatch {
            expected: phi.rows(),
            actual: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("measurements must be finite"));
    }
    Ok(())
}

fn finish(
    phi: &SensingMatrix,
    y: &[f64],
    mode: SolverMode,
    raw: RawSolution,
    start: Instant,
) -> Result<RecoveryResult> {
    let wall_time_s = start.elapsed().as_secs_f64();
    if raw.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "{mode} produced a non-finite estimate"
        )));
    }
    let fitted = crate::encoding::forward_measure(phi, &raw.x)?;
    let final_residual = fitted
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(RecoveryResult {
        mode,
        x_hat: raw.x,
        iterations: raw.iterations,
        final_residual,
        objective_trace: raw.objective_trace,
        sigma_schedule: raw.sigma_schedule,
        evidence_trace: raw.evidence_trace,
        warnings: raw.warnings,
        wall_time_s,
    })
}

/// Basis pursuit with a residual ball, solved by smoothed accelerated gradient.
pub fn solve_l1(phi: &SensingMatrix, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    check_inputs(phi, y, cfg, SolverMode::L1)?;
    let start = Instant::now();
    let raw = nesta::solve(phi.data(), y, &nesta::HuberL1, cfg)?;
    finish(phi, y, SolverMode::L1, raw, start)
}

/// Isotropic-TV minimization over an `n × n` image with a residual ball.
pub fn solve_tv(
    phi: &SensingMatrix,
    y: &[f64],
    n: usize,
    cfg: &SolverConfig,
) -> Result<RecoveryResult> {
    check_inputs(phi, y, cfg, SolverMode::TV)?;
    if n * n != phi.cols() {
        return Err(Error::DimensionMismatch {
            expected: phi.cols(),
            actual: n * n,
        });
    }
    let start = Instant::now();
    let raw = nesta::solve(phi.data(), y, &nesta::SmoothedTv { side: n }, cfg)?;
    finish(phi, y, SolverMode::TV, raw, start)
}

pub fn solve_sl0(phi: &SensingMatrix, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    check_inputs(phi, y, cfg, SolverMode::SL0)?;
    let start = Instant::now();
    let raw = sl0::solve(phi.data(), y, cfg)?;
    finish(phi, y, SolverMode::SL0, raw, start)
}

pub fn solve_sbl(phi: &SensingMatrix, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    check_inputs(phi, y, cfg, SolverMode::SBL)?;
    let start = Instant::now();
    let raw = sbl::solve(phi.data(), y, cfg)?;
    finish(phi, y, SolverMode::SBL, raw, start)
}

/// Dispatches on `cfg.mode`; the image side is taken from `phi`.
pub fn solve(phi: &SensingMatrix, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    match cfg.mode {
        SolverMode::L1 => solve_l1(phi, y, cfg),
        SolverMode::TV => solve_tv(phi, y, phi.side(), cfg),
        SolverMode::SL0 => solve_sl0(phi, y, cfg),
        SolverMode::SBL => solve_sbl(phi, y, cfg),
    }
}
