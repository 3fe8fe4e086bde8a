//! Nesterov-accelerated smoothing for `min ‖W x‖ s.t. ‖y − A x‖₂ ≤ ε`.
//!
//! The nonsmooth norm is replaced by its Huber smoothing with parameter `μ`,
//! whose gradient is `1/μ`-Lipschitz (scaled by `‖W‖²`). Each continuation
//! stage runs the two-sequence accelerated scheme:
//!
//! ```text
//! y_k = P(x_k − ∇f(x_k)/L)
//! z_k = P(x_0 − Σ_{i≤k} α_i ∇f(x_i)/L),   α_i = (i+1)/2
//! x_{k+1} = τ_k z_k + (1 − τ_k) y_k,       τ_k = 2/(k+3)
//! ```
//!
//! where `P` is the exact Euclidean projection onto the residual ball. `μ`
//! decreases geometrically from a start tied to the minimum-norm solution to
//! `mu_final`, and each stage is warm-started from the previous one.
//!
//! Reported objective values use the upper Huber form `h(t) = |t|` for
//! `|t| ≥ μ`, `t²/(2μ) + μ/2` otherwise, which bounds the true norm from
//! above and shrinks as `μ` decreases.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::rowspace::RowSpace;
use super::tv::{gradient, gradient_adjoint};
use super::{RawSolution, SolverConfig, SolverWarning};
use crate::error::Result;

const STOP_WINDOW: usize = 10;
const RESYNC_EVERY: usize = 64;

fn upper_huber(t: f64, mu: f64) -> f64 {
    if t >= mu {
        t
    } else {
        t * t / (2.0 * mu) + mu / 2.0
    }
}

pub(crate) trait SmoothedNorm {
    /// Smoothed value at `x`; writes the gradient into `grad`.
    fn value_grad(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64], mu: f64) -> f64;

    /// Lipschitz constant of the smoothed gradient.
    fn lipschitz(&self, mu: f64) -> f64;

    /// Initial smoothing parameter for continuation from `x0`.
    fn mu_start(&self, x0: &[f64]) -> f64;
}

pub(crate) struct HuberL1;

impl SmoothedNorm for HuberL1 {
    fn value_grad(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let mut f = 0.0;
        for (g, &v) in grad.iter_mut().zip(x) {
            let a = v.abs();
            f += upper_huber(a, mu);
            *g = v / a.max(mu);
        }
        f
    }

    fn value(&self, x: &[f64], mu: f64) -> f64 {
        x.iter().map(|v| upper_huber(v.abs(), mu)).sum()
    }

    fn lipschitz(&self, mu: f64) -> f64 {
        1.0 / mu
    }

    fn mu_start(&self, x0: &[f64]) -> f64 {
        0.9 * x0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) struct SmoothedTv {
    pub side: usize,
}

impl SmoothedTv {
    fn magnitudes(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dh = vec![0.0; x.len()];
        let mut dv = vec![0.0; x.len()];
        gradient(x, self.side, &mut dh, &mut dv);
        (dh, dv)
    }
}

impl SmoothedNorm for SmoothedTv {
    fn value_grad(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let (mut dh, mut dv) = self.magnitudes(x);
        let mut f = 0.0;
        for (h, v) in dh.iter_mut().zip(dv.iter_mut()) {
            let norm = h.hypot(*v);
            f += upper_huber(norm, mu);
            let scale = 1.0 / norm.max(mu);
            *h *= scale;
            *v *= scale;
        }
        gradient_adjoint(&dh, &dv, self.side, grad);
        f
    }

    fn value(&self, x: &[f64], mu: f64) -> f64 {
        let (dh, dv) = self.magnitudes(x);
        dh.iter()
            .zip(&dv)
            .map(|(h, v)| upper_huber(h.hypot(*v), mu))
            .sum()
    }

    fn lipschitz(&self, mu: f64) -> f64 {
        // ‖D‖² ≤ 8 for 2-D forward differences.
        8.0 / mu
    }

    fn mu_start(&self, x0: &[f64]) -> f64 {
        let (dh, dv) = self.magnitudes(x0);
        0.9 * dh
            .iter()
            .zip(&dv)
            .fold(0.0f64, |m, (h, v)| m.max(h.hypot(*v)))
    }
}

/// Huber-smoothed L1 value (upper form) and gradient.
pub fn huber_l1_value_grad(x: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let f = HuberL1.value_grad(x, mu, &mut grad);
    (f, grad)
}

/// Smoothed isotropic-TV value (upper form) and gradient for a row-major `side × side` image.
pub fn smoothed_tv_value_grad(x: &[f64], side: usize, mu: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let f = SmoothedTv { side }.value_grad(x, mu, &mut grad);
    (f, grad)
}

struct StageOutcome {
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn run_stage<F: SmoothedNorm>(
    rs: &RowSpace,
    norm: &F,
    radius: f64,
    x_start: &DVector<f64>,
    mu: f64,
    tol: f64,
    max_iters: usize,
) -> StageOutcome {
    let n = x_start.len();
    let r = rs.rank();
    let lip = norm.lipschitz(mu);

    let x0 = x_start.clone();
    let mut ax0 = DVector::zeros(r);
    rs.forward(&x0, &mut ax0);

    let mut x = x0.clone();
    let mut ax = ax0.clone();
    let mut grad = DVector::zeros(n);
    let mut agrad = DVector::zeros(r);
    let mut gacc = DVector::<f64>::zeros(n);
    let mut agacc = DVector::<f64>::zeros(r);
    let mut c1 = DVector::zeros(r);
    let mut c2 = DVector::zeros(r);
    let mut d1 = DVector::zeros(r);
    let mut d2 = DVector::zeros(r);
    let mut shift = DVector::zeros(r);
    let mut lifted = DVector::zeros(n);

    // y_k = q1 + Ãᵀ d1; kept to rebuild the output iterate.
    let mut last_q1 = x0.clone();
    let mut last_d1 = DVector::zeros(r);

    let mut history: VecDeque<f64> = VecDeque::with_capacity(STOP_WINDOW);
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..max_iters {
        iterations = k + 1;
        if k > 0 && k % RESYNC_EVERY == 0 {
            rs.forward(&x, &mut ax);
        }
        let f = norm.value_grad(x.as_slice(), mu, grad.as_mut_slice());
        rs.forward(&grad, &mut agrad);

        let alpha = (k as f64 + 1.0) / 2.0;
        let tau = 2.0 / (k as f64 + 3.0);

        c1.copy_from(&ax);
        c1.axpy(-1.0 / lip, &agrad, 1.0);
        rs.projection_shift(&c1, radius, &mut d1);

        gacc.axpy(alpha, &grad, 1.0);
        agacc.axpy(alpha, &agrad, 1.0);
        c2.copy_from(&ax0);
        c2.axpy(-1.0 / lip, &agacc, 1.0);
        rs.projection_shift(&c2, radius, &mut d2);

        shift.copy_from(&d2);
        shift.axpy(1.0 - tau, &d1, tau);
        rs.adjoint_acc(&shift, &mut lifted, 0.0);

        last_q1.copy_from(&x);
        last_q1.axpy(-1.0 / lip, &grad, 1.0);
        last_d1.copy_from(&d1);

        for i in 0..n {
            x[i] = tau * (x0[i] - gacc[i] / lip) + (1.0 - tau) * last_q1[i] + lifted[i];
        }
        for i in 0..r {
            ax[i] = tau * (c2[i] + d2[i]) + (1.0 - tau) * (c1[i] + d1[i]);
        }

        if history.len() == STOP_WINDOW {
            history.pop_front();
        }
        history.push_back(f);
        if history.len() == STOP_WINDOW {
            let mean = history.iter().sum::<f64>() / history.len() as f64;
            let rel = if mean > 0.0 {
                (f - mean).abs() / mean
            } else {
                0.0
            };
            if rel < tol {
                converged = true;
                break;
            }
        }
    }

    let mut y = last_q1;
    rs.adjoint_acc(&last_d1, &mut y, 1.0);
    StageOutcome {
        x: y,
        iterations,
        converged,
    }
}

pub(crate) fn solve<F: SmoothedNorm>(
    a: &DMatrix<f64>,
    y: &[f64],
    norm: &F,
    cfg: &SolverConfig,
) -> Result<RawSolution> {
    let n = a.ncols();
    if y.iter().all(|&v| v == 0.0) {
        // Zero is feasible and has zero norm.
        return Ok(RawSolution::new(vec![0.0; n]));
    }
    let rs = RowSpace::new(a, y)?;
    let epsilon = cfg.effective_epsilon(a.nrows());
    let radius = rs.effective_radius(epsilon);

    let mut warnings = Vec::new();
    if rs.rank_deficient() {
        warnings.push(SolverWarning::PseudoinverseFallback);
    }

    let mut x = rs.min_norm();
    rs.project(&mut x, epsilon);

    let mu_final = cfg.mu_final;
    let mu0 = norm.mu_start(x.as_slice()).max(mu_final);
    let stages = cfg.continuation_stages;
    let ratio = (mu_final / mu0).powf(1.0 / stages as f64);
    let tol0 = 0.1f64.max(cfg.convergence_tol);

    let mut trace = Vec::with_capacity(stages);
    let mut iterations = 0;
    let mut converged = true;
    for t in 1..=stages {
        let mu = if t == stages {
            mu_final
        } else {
            mu0 * ratio.powi(t as i32)
        };
        let tol = tol0 * (cfg.convergence_tol / tol0).powf(t as f64 / stages as f64);
        let outcome = run_stage(&rs, norm, radius, &x, mu, tol, cfg.max_iters_per_stage);
        iterations += outcome.iterations;
        if t == stages && !outcome.converged {
            converged = false;
        }
        let mut candidate = outcome.x;
        rs.project(&mut candidate, epsilon);
        let start_value = norm.value(x.as_slice(), mu);
        let end_value = norm.value(candidate.as_slice(), mu);
        if end_value <= start_value {
            x = candidate;
            trace.push(end_value);
        } else {
            trace.push(start_value);
        }
    }
    if !converged {
        warnings.push(SolverWarning::NotConverged);
    }

    Ok(RawSolution {
        x: x.as_slice().to_vec(),
        iterations,
        objective_trace: trace,
        warnings,
        ..RawSolution::new(Vec::new())
    })
}
