use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Row-space factorization of a sensing matrix `A` (M × N) against a fixed
/// measurement vector `y`.
///
/// With `A Aᵀ = U S Uᵀ` the operator `Ã = S^{-1/2} Uᵀ A` has orthonormal rows,
/// and a point's row-space coordinates `c = Ã x` determine its residual:
/// `‖y − A x‖² = ‖b − S^{1/2} c‖² + ‖y_⊥‖²` with `b = Uᵀ y`.
/// Projections onto `{x : ‖y − A x‖ ≤ ε}` therefore only move `c`.
pub(crate) struct RowSpace {
    whitened: DMatrix<f64>,
    sqrt_s: Vec<f64>,
    b: Vec<f64>,
    residual_floor_sq: f64,
    rank_deficient: bool,
}

impl RowSpace {
    pub fn new(a: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let m = a.nrows();
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: y.len(),
            });
        }
        let gram = a * a.transpose();
        let eig = SymmetricEigen::new(gram);
        let s_max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        if !(s_max > 0.0) {
            return Err(Error::Numerical("sensing matrix is zero".into()));
        }
        let tol = s_max * m as f64 * f64::EPSILON * 16.0;
        let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > tol).collect();
        let u = eig.eigenvectors.select_columns(&keep);
        let sqrt_s: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i].sqrt()).collect();

        let mut whitened = u.transpose() * a;
        for (i, s) in sqrt_s.iter().enumerate() {
            let mut row = whitened.row_mut(i);
            row /= *s;
        }
        let yv = DVector::from_column_slice(y);
        let b = u.transpose() * &yv;
        let residual_floor_sq = (&yv - &u * &b).norm_squared();

        Ok(Self {
            whitened,
            sqrt_s,
            b: b.as_slice().to_vec(),
            residual_floor_sq,
            rank_deficient: keep.len() < m,
        })
    }

    pub fn rank(&self) -> usize {
        self.sqrt_s.len()
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// `out = Ã x`.
    pub fn forward(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.whitened, x, 0.0);
    }

    /// `out = beta·out + Ãᵀ c`.
    pub fn adjoint_acc(&self, c: &DVector<f64>, out: &mut DVector<f64>, beta: f64) {
        out.gemv_tr(1.0, &self.whitened, c, beta);
    }

    /// Minimum-norm solution of `A x = y` restricted to the row space.
    pub fn min_norm(&self) -> DVector<f64> {
        let c = DVector::from_iterator(
            self.rank(),
            self.b.iter().zip(&self.sqrt_s).map(|(b, s)| b / s),
        );
        self.whitened.tr_mul(&c)
    }

    /// Effective radius of the ball in row-space coordinates.
    pub fn effective_radius(&self, epsilon: f64) -> f64 {
        (epsilon * epsilon - self.residual_floor_sq).max(0.0).sqrt()
    }

    /// Row-space shift `d` such that `x + Ãᵀ d` is the Euclidean projection of
    /// `x` (with coordinates `c = Ã x`) onto the residual ball of radius `radius`.
    pub fn projection_shift(&self, c: &DVector<f64>, radius: f64, d: &mut DVector<f64>) {
        let r = self.rank();
        if radius <= 0.0 {
            for i in 0..r {
                d[i] = self.b[i] / self.sqrt_s[i] - c[i];
            }
            return;
        }
        let e: Vec<f64> = (0..r).map(|i| self.sqrt_s[i] * c[i] - self.b[i]).collect();
        let norm0 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 <= radius {
            d.fill(0.0);
            return;
        }
        // Solve ‖r(λ)‖ = radius for r_i(λ) = e_i / (1 + λ s_i). Newton on the
        // concave increasing function 1/‖r(λ)‖ − 1/radius converges
        // monotonically from λ = 0.
        let s: Vec<f64> = self.sqrt_s.iter().map(|v| v * v).collect();
        let mut lambda = 0.0f64;
        for _ in 0..100 {
            let mut norm_sq = 0.0;
            let mut slope = 0.0;
            for i in 0..r {
                let denom = 1.0 + lambda * s[i];
                norm_sq += e[i] * e[i] / (denom * denom);
                slope += e[i] * e[i] * s[i] / (denom * denom * denom);
            }
            let norm = norm_sq.sqrt();
            let phi = 1.0 / norm - 1.0 / radius;
            if phi.abs() <= 1e-14 / radius {
                break;
            }
            let dphi = slope / (norm_sq * norm);
            let step = phi / dphi;
            lambda -= step;
            if step.abs() <= 1e-15 * lambda.abs() {
                break;
            }
        }
        for i in 0..r {
            let updated = (c[i] + lambda * self.sqrt_s[i] * self.b[i]) / (1.0 + lambda * s[i]);
            d[i] = updated - c[i];
        }
    }

    /// Projects `x` onto the residual ball in place.
    pub fn project(&self, x: &mut DVector<f64>, epsilon: f64) {
        let mut c = DVector::zeros(self.rank());
        self.forward(x, &mut c);
        let mut d = DVector::zeros(self.rank());
        self.projection_shift(&c, self.effective_radius(epsilon), &mut d);
        self.adjoint_acc(&d, x, 1.0);
    }
}
