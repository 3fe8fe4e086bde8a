//! Smoothed-L0 recovery.
//!
//! Maximizes `Σ exp(−x_i² / 2σ²)` over `{x : Φx = y}` for a decreasing
//! sequence of σ: a few gradient steps on the Gaussian surrogate, each
//! followed by projection back onto the solution set.

use nalgebra::{DMatrix, DVector};

use super::rowspace::RowSpace;
use super::{RawSolution, SolverConfig, SolverWarning};
use crate::error::Result;

/// `N − Σ exp(−x²/2σ²)`, the smoothed count of nonzeros.
fn surrogate(x: &DVector<f64>, sigma: f64) -> f64 {
    let two_s2 = 2.0 * sigma * sigma;
    x.iter().map(|v| 1.0 - (-v * v / two_s2).exp()).sum()
}

/// The σ values visited, from `2·max|x0|` down to just above `sigma_min`.
pub(crate) fn sigma_schedule(x0_max: f64, cfg: &SolverConfig) -> Vec<f64> {
    let mut out = Vec::new();
    let mut sigma = 2.0 * x0_max;
    while sigma > cfg.sl0_sigma_min {
        out.push(sigma);
        sigma *= cfg.sl0_sigma_decrease;
    }
    out
}

pub(crate) fn solve(a: &DMatrix<f64>, y: &[f64], cfg: &SolverConfig) -> Result<RawSolution> {
    let n = a.ncols();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(RawSolution::new(vec![0.0; n]));
    }
    let rs = RowSpace::new(a, y)?;
    let mut warnings = Vec::new();
    if rs.rank_deficient() {
        warnings.push(SolverWarning::PseudoinverseFallback);
    }

    let mut x = rs.min_norm();
    let x0_max = x.amax();
    let schedule = sigma_schedule(x0_max, cfg);

    let mut trace = Vec::with_capacity(schedule.len());
    let mut iterations = 0;
    for &sigma in &schedule {
        let two_s2 = 2.0 * sigma * sigma;
        for _ in 0..cfg.sl0_inner_iters {
            for v in x.iter_mut() {
                *v -= cfg.sl0_step * *v * (-*v * *v / two_s2).exp();
            }
            rs.project(&mut x, 0.0);
            iterations += 1;
        }
        trace.push(surrogate(&x, sigma));
    }

    Ok(RawSolution {
        x: x.as_slice().to_vec(),
        iterations,
        objective_trace: trace,
        sigma_schedule: schedule,
        warnings,
        ..RawSolution::new(Vec::new())
    })
}
