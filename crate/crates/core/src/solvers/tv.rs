//! Isotropic total variation with forward differences and a replicate
//! (zero-difference) boundary on the last row and column.

use crate::image::Image;

/// Writes `D_h X(i,j) = X(i+1,j) − X(i,j)` and `D_v X(i,j) = X(i,j+1) − X(i,j)`.
pub(crate) fn gradient(x: &[f64], side: usize, dh: &mut [f64], dv: &mut [f64]) {
    for i in 0..side {
        for j in 0..side {
            let p = i * side + j;
            dh[p] = if i + 1 < side {
                x[p + side] - x[p]
            } else {
                0.0
            };
            dv[p] = if j + 1 < side { x[p + 1] - x[p] } else { 0.0 };
        }
    }
}

/// `out = D_hᵀ uh + D_vᵀ uv`.
pub(crate) fn gradient_adjoint(uh: &[f64], uv: &[f64], side: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..side {
        for j in 0..side {
            let p = i * side + j;
            if i + 1 < side {
                out[p + side] += uh[p];
                out[p] -= uh[p];
            }
            if j + 1 < side {
                out[p + 1] += uv[p];
                out[p] -= uv[p];
            }
        }
    }
}

pub(crate) fn tv_norm_flat(x: &[f64], side: usize) -> f64 {
    let mut dh = vec![0.0; x.len()];
    let mut dv = vec![0.0; x.len()];
    gradient(x, side, &mut dh, &mut dv);
    dh.iter().zip(&dv).map(|(a, b)| a.hypot(*b)).sum()
}

/// `Σ_{i,j} √(D_h X(i,j)² + D_v X(i,j)²)`.
pub fn tv_norm(image: &Image) -> f64 {
    tv_norm_flat(image.pixels(), image.side())
}
