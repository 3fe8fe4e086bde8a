//! Reconstruction error, timing, and multi-trial aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::encoding::Snr;
use crate::error::{Error, Result};
use crate::solvers::SolverMode;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub mse: f64,
    pub relative_l2: f64,
    pub runtime_s: f64,
    pub solver: SolverMode,
    pub snapshots_m: usize,
    pub snr_db: Snr,
    pub trial_seed: u64,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            actual: a.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::arg("cannot compare empty vectors"));
    }
    Ok(())
}

/// Pixel-mean squared error `(1/N) Σ (x̂_i − x_i)²`.
pub fn mse(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    check_lengths(x_hat, x_true)?;
    Ok(x_hat
        .iter()
        .zip(x_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x_true.len() as f64)
}

/// `‖x̂ − x‖₂ / ‖x‖₂`, or the plain error norm when `x` is zero.
pub fn relative_l2(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    check_lengths(x_hat, x_true)?;
    let err = x_hat
        .iter()
        .zip(x_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = x_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if norm > 0.0 { err / norm } else { err })
}

/// Runs `f`, returning its output and the monotonic wall time in seconds.
pub fn time_solver<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Aggregation key: one cell of the (solver, M, SNR) grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub solver: SolverMode,
    pub snapshots: usize,
    pub snr: Snr,
}

impl CellKey {
    fn order_key(&self) -> (SolverMode, usize, u8, u64) {
        match self.snr {
            Snr::Noiseless => (self.solver, self.snapshots, 1, 0),
            Snr::Db(db) => (self.solver, self.snapshots, 0, total_order_bits(db)),
        }
    }
}

/// Maps an f64 to bits whose unsigned order matches numeric order.
fn total_order_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub solver: SolverMode,
    pub snapshots: usize,
    pub snr_db: Snr,
    pub trials: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub rel_l2_mean: f64,
    pub runtime_mean_s: f64,
    pub runtime_std_s: f64,
}

/// Mean and sample standard deviation (`n − 1` denominator, 0 for one value).
/// Values are summed in sorted order so the result is independent of input order.
fn mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups trials by (solver, M, SNR) and summarizes each cell; cells come
/// back sorted by solver, then M, then SNR (noiseless last).
pub fn aggregate_trials(trials: &[TrialMetrics]) -> Result<Vec<CellSummary>> {
    if trials.is_empty() {
        return Err(Error::arg("no trials to aggregate"));
    }
    let mut groups: BTreeMap<(SolverMode, usize, u8, u64), (CellKey, Vec<&TrialMetrics>)> =
        BTreeMap::new();
    for t in trials {
        let key = CellKey {
            solver: t.solver,
            snapshots: t.snapshots_m,
            snr: t.snr_db,
        };
        groups
            .entry(key.order_key())
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push(t);
    }
    Ok(groups
        .into_values()
        .map(|(key, group)| {
            let (mse_mean, mse_std) =
                mean_std(&mut group.iter().map(|t| t.mse).collect::<Vec<_>>());
            let (rel_l2_mean, _) =
                mean_std(&mut group.iter().map(|t| t.relative_l2).collect::<Vec<_>>());
            let (runtime_mean_s, runtime_std_s) =
                mean_std(&mut group.iter().map(|t| t.runtime_s).collect::<Vec<_>>());
            CellSummary {
                solver: key.solver,
                snapshots: key.snapshots,
                snr_db: key.snr,
                trials: group.len(),
                mse_mean,
                mse_std,
                rel_l2_mean,
                runtime_mean_s,
                runtime_std_s,
            }
        })
        .collect())
}
