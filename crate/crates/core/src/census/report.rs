use serde::{Deserialize, Serialize};

use super::search::SearchOutcome;
use crate::bounds::BoundsReport;
use crate::error::Result;

/// Printed with every support estimate.
pub const CAVEAT: &str = "The s^2 figure is a heuristic that assumes samples are spread \
roughly evenly over the support. A few heavy modes can force early duplicates while the \
rest of the mass covers far more outcomes, so a small s is evidence of low diversity but \
the test cannot certify a large support.";

/// Heuristic support size plus the closed-form bounds at the same batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// Batch size the numbers refer to.
    pub batch_size: usize,
    /// Collision probability used for the bounds.
    pub gamma: f64,
    /// `batch_size²`.
    pub heuristic_support: u64,
    /// True when the pool ran out first, so the true support exceeds
    /// `heuristic_support`.
    pub heuristic_is_lower_bound: bool,
    pub bounds: BoundsReport,
    pub caveat: String,
}

impl SupportReport {
    /// Report for a found `s_star` at the search target.
    pub fn from_s_star(s_star: usize, target: f64, rho: f64) -> Result<Self> {
        Self::build(s_star, target, rho, false)
    }

    /// Report for a single `(batch_size, γ)` observation.
    pub fn from_observation(batch_size: usize, gamma: f64, rho: f64) -> Result<Self> {
        Self::build(batch_size, gamma, rho, false)
    }

    pub fn from_outcome(outcome: &SearchOutcome, target: f64, rho: f64) -> Result<Self> {
        match *outcome {
            SearchOutcome::Found { s_star, .. } => Self::from_s_star(s_star, target, rho),
            SearchOutcome::PoolLimited { max_batch, gamma } => {
                Self::build(max_batch, gamma, rho, true)
            }
        }
    }

    fn build(batch_size: usize, gamma: f64, rho: f64, lower: bool) -> Result<Self> {
        let s = batch_size as u64;
        Ok(Self {
            batch_size,
            gamma,
            heuristic_support: s * s,
            heuristic_is_lower_bound: lower,
            bounds: BoundsReport::compute(s, gamma, rho, None)?,
            caveat: CAVEAT.to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heuristic_is_square() {
        let r = SupportReport::from_s_star(400, 0.5, 1.0).unwrap();
        assert_eq!(r.heuristic_support, 160_000);
        let b = r.bounds.support_bound.unwrap();
        assert!((b / 115_548.0 - 1.0).abs() < 0.01, "{b}");
        assert_eq!(
            SupportReport::from_s_star(1000, 0.5, 1.0)
                .unwrap()
                .heuristic_support,
            1_000_000
        );
        assert_eq!(
            SupportReport::from_s_star(2, 0.5, 1.0)
                .unwrap()
                .heuristic_support,
            4
        );
    }

    #[test]
    fn pool_limited_is_a_lower_bound() {
        let out = SearchOutcome::PoolLimited {
            max_batch: 50,
            gamma: 0.0,
        };
        let r = SupportReport::from_outcome(&out, 0.5, 1.0).unwrap();
        assert!(r.heuristic_is_lower_bound);
        assert_eq!(r.heuristic_support, 2500);
        assert_eq!(r.bounds.support_bound, None);
    }
}
