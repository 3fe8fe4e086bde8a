//! Sparse Bayesian learning by evidence maximization.
//!
//! Prior `x_i ~ N(0, γ_i)`, likelihood `y ~ N(Φx, σ² I)`. With
//! `C = σ² I + Φ Γ Φᵀ` the posterior is
//!
//! ```text
//! μ = Γ Φᵀ C⁻¹ y,     Σ_ii = γ_i − γ_i² φ_iᵀ C⁻¹ φ_i
//! ```
//!
//! and the EM update `γ_i ← μ_i² + Σ_ii` never decreases the log evidence
//! `−½ (M ln 2π + ln|C| + yᵀ C⁻¹ y)`. Coefficients whose precision `1/γ_i`
//! exceeds the prune threshold are dropped from the model.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::rowspace::RowSpace;
use super::{RawSolution, SolverConfig, SolverWarning};
use crate::error::{Error, Result};

/// Noise variance used in the noiseless limit, relative to the signal power.
const NOISELESS_FLOOR: f64 = 1e-10;
const MAX_JITTER_RETRIES: usize = 8;

fn factor(mut c: DMatrix<f64>, warnings: &mut Vec<SolverWarning>) -> Result<Cholesky<f64, Dyn>> {
    let scale = c.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-12 * scale;
    for _ in 0..MAX_JITTER_RETRIES {
        if let Some(ch) = Cholesky::new(c.clone()) {
            return Ok(ch);
        }
        if !warnings.contains(&SolverWarning::JitterRegularized) {
            warnings.push(SolverWarning::JitterRegularized);
        }
        for i in 0..c.nrows() {
            c[(i, i)] += jitter;
        }
        jitter *= 100.0;
    }
    Err(Error::Numerical(
        "SBL covariance is not positive definite".into(),
    ))
}

pub(crate) fn solve(a: &DMatrix<f64>, y: &[f64], cfg: &SolverConfig) -> Result<RawSolution> {
    let (m, n) = a.shape();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(RawSolution::new(vec![0.0; n]));
    }
    let yv = DVector::from_column_slice(y);
    let power = yv.norm_squared() / m as f64;
    let floor = NOISELESS_FLOOR * power;
    let mut sigma2 = cfg.noise_variance.unwrap_or(0.0).max(floor);

    let mut warnings = Vec::new();
    let x0 = {
        let rs = RowSpace::new(a, y)?;
        if rs.rank_deficient() {
            warnings.push(SolverWarning::PseudoinverseFallback);
        }
        rs.min_norm()
    };
    let mean_sq = x0.norm_squared() / n as f64;
    let mut active: Vec<usize> = (0..n).collect();
    let mut gamma: Vec<f64> = x0.iter().map(|v| v * v + mean_sq).collect();

    let log_2pi = (2.0 * PI).ln();
    let mut evidence_trace = Vec::new();
    let mut mean = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.sbl_max_iters && !active.is_empty() {
        iterations += 1;
        let phi = a.select_columns(&active);
        let mut scaled = phi.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= gamma[k];
        }
        let mut c = &phi * scaled.transpose();
        for i in 0..m {
            c[(i, i)] += sigma2;
        }
        let chol = factor(c, &mut warnings)?;
        let log_det: f64 = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        let c_inv = chol.inverse();
        let v = &c_inv * &yv;
        evidence_trace.push(-0.5 * (m as f64 * log_2pi + log_det + yv.dot(&v)));

        let projected = phi.tr_mul(&v);
        let p = &c_inv * &phi;
        let mut next = Vec::with_capacity(active.len());
        let mut mu = Vec::with_capacity(active.len());
        let mut explained = 0.0;
        for k in 0..active.len() {
            let q = phi.column(k).dot(&p.column(k));
            let mu_k = gamma[k] * projected[k];
            let sigma_kk = (gamma[k] - gamma[k] * gamma[k] * q).max(0.0);
            explained += 1.0 - sigma_kk / gamma[k];
            mu.push(mu_k);
            next.push(mu_k * mu_k + sigma_kk);
        }

        mean.fill(0.0);
        for (k, &i) in active.iter().enumerate() {
            mean[i] = mu[k];
        }

        if cfg.sbl_estimate_noise {
            let fit = &phi * DVector::from_column_slice(&mu);
            let resid = (&yv - fit).norm_squared();
            sigma2 = ((resid + sigma2 * explained) / m as f64).max(floor);
        }

        let scale = next.iter().copied().fold(0.0f64, f64::max);
        let change = next
            .iter()
            .zip(&gamma)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        let cutoff = 1.0 / cfg.sbl_prune_threshold;
        let keep: Vec<usize> = (0..active.len()).filter(|&k| next[k] > cutoff).collect();
        active = keep.iter().map(|&k| active[k]).collect();
        gamma = keep.iter().map(|&k| next[k]).collect();

        if scale == 0.0 || change <= cfg.sbl_tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(SolverWarning::NotConverged);
    }

    Ok(RawSolution {
        x: mean,
        iterations,
        objective_trace: evidence_trace.iter().map(|e| -e).collect(),
        evidence_trace,
        warnings,
        ..RawSolution::new(Vec::new())
    })
}
