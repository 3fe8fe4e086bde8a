use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time available for collecting snapshots while the object stays in view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationBudget {
    /// Time to generate and process one encoded aperture.
    pub snapshot_time_s: f64,
    pub total_observation_s: f64,
}

impl Default for ObservationBudget {
    fn default() -> Self {
        Self {
            snapshot_time_s: 1e-4,
            total_observation_s: 3.0,
        }
    }
}

/// Relative slack so that quotients such as `3 / 1e-4` are not rounded down
/// by one because the decimal inputs are inexact in binary.
const QUOTIENT_SLACK: f64 = 1e-9;

impl ObservationBudget {
    pub fn new(snapshot_time_s: f64, total_observation_s: f64) -> Result<Self> {
        let budget = Self {
            snapshot_time_s,
            total_observation_s,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snapshot_time_s > 0.0 && self.snapshot_time_s.is_finite()) {
            return Err(Error::config("snapshot_time_s", "must be finite and > 0"));
        }
        if !(self.total_observation_s >= 0.0 && self.total_observation_s.is_finite()) {
            return Err(Error::config(
                "total_observation_s",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    /// `floor(total_observation_s / snapshot_time_s)`.
    pub fn max_snapshots(&self) -> usize {
        let q = self.total_observation_s / self.snapshot_time_s;
        let nearest = q.round();
        if (q - nearest).abs() <= QUOTIENT_SLACK * nearest.max(1.0) {
            nearest as usize
        } else {
            q.floor() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetCheck {
    pub pass: bool,
    /// Observation time left after `M` snapshots; negative on failure.
    pub margin_s: f64,
    pub max_snapshots: usize,
}

/// Passes iff `M · t_s` fits inside the observation window.
pub fn check_observation_budget(m: usize, budget: &ObservationBudget) -> Result<BudgetCheck> {
    budget.validate()?;
    let max_snapshots = budget.max_snapshots();
    Ok(BudgetCheck {
        pass: m <= max_snapshots,
        margin_s: budget.total_observation_s - m as f64 * budget.snapshot_time_s,
        max_snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_window() {
        let budget = ObservationBudget::new(1e-4, 3.0).unwrap();
        assert_eq!(budget.max_snapshots(), 30_000);
        let ok = check_observation_budget(300, &budget).unwrap();
        assert!(ok.pass);
        assert!((ok.margin_s - 2.97).abs() < 1e-12);
        assert!(check_observation_budget(30_000, &budget).unwrap().pass);
        let over = check_observation_budget(30_001, &budget).unwrap();
        assert!(!over.pass);
        assert!(over.margin_s < 0.0);
    }

    #[test]
    fn zero_snapshots_always_fit() {
        let budget = ObservationBudget::new(0.5, 0.0).unwrap();
        let r = check_observation_budget(0, &budget).unwrap();
        assert!(r.pass);
        assert_eq!(r.margin_s, 0.0);
        assert_eq!(r.max_snapshots, 0);
    }

    #[test]
    fn non_integer_quotient_floors() {
        let budget = ObservationBudget::new(0.3, 1.0).unwrap();
        assert_eq!(budget.max_snapshots(), 3);
        assert!(ObservationBudget::new(0.0, 1.0).is_err());
        assert!(ObservationBudget::new(1e-4, -1.0).is_err());
    }
}
