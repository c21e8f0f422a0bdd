//! Closed-form collision and support-size bounds.
//!
//! Notation follows the usual birthday setup: `m` samples per batch, `gamma`
//! the probability a batch contains a collision, `rho` the probability mass
//! assumed to sit on a head set of size `n`, and `beta = 1 / sum P(x)^2`.
//!
//! Bounds that cannot be evaluated (`gamma == 0`, or a non-positive
//! denominator in the support bound) are reported as `None` rather than
//! as errors so a [`BoundsReport`] always serializes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bounds on the collision probability of `m` samples when a head set
/// of size `n` carries mass at least `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionLowerBound {
    /// `1 - exp(-m^2 rho / 2n)`.
    pub as_stated: f64,
    /// `1 - exp(-m(m-1) rho / 2n)`; never exceeds `as_stated`.
    pub corrected: f64,
}

pub fn theorem1_collision_lower_bound(m: u64, rho: f64, n: f64) -> Result<CollisionLowerBound> {
    check_rho(rho)?;
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid(format!(
            "n must be a positive finite number, got {n}"
        )));
    }
    let m = m as f64;
    Ok(CollisionLowerBound {
        as_stated: -(-m * m * rho / (2.0 * n)).exp_m1(),
        corrected: -(-m * (m - 1.0) * rho / (2.0 * n)).exp_m1(),
    })
}

/// Conditions under which the collision-time tail bound is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailValidity {
    pub beta_gt_1000: bool,
    pub m_le_2_sqrt_beta_ln_beta: bool,
}

impl TailValidity {
    pub fn holds(&self) -> bool {
        self.beta_gt_1000 && self.m_le_2_sqrt_beta_ln_beta
    }
}

/// Evaluates `beta > 1000` and `m <= 2 sqrt(beta ln beta)`.
pub fn validity_check(m: u64, beta: f64) -> TailValidity {
    let limit = if beta > 1.0 {
        2.0 * (beta * beta.ln()).sqrt()
    } else {
        0.0
    };
    TailValidity {
        beta_gt_1000: beta > 1000.0,
        m_le_2_sqrt_beta_ln_beta: beta > 1.0 && (m as f64) <= limit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// Lower bound on the probability that a batch of `m` has no collision.
    pub value: f64,
    pub validity: TailValidity,
}

/// Collision-time tail bound `exp(-m^2/(2 beta) - m^3/(6 beta^2))`.
///
/// Computed regardless of the validity flags; callers decide whether to
/// trust it outside that regime.
pub fn wiener_tail_bound(m: u64, beta: f64) -> Result<TailBound> {
    if m < 2 {
        return Err(Error::invalid("m must be >= 2"));
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(Error::invalid(format!("beta must exceed 1, got {beta}")));
    }
    let mf = m as f64;
    let exponent = -mf * mf / (2.0 * beta) - mf * mf * mf / (6.0 * beta * beta);
    Ok(TailBound {
        value: exponent.exp(),
        validity: validity_check(m, beta),
    })
}

/// `-3 + sqrt(9 + (24/m) ln(1/(1-gamma)))`, rewritten as
/// `x / (3 + sqrt(9 + x))` with `x = (24/m) ln(1/(1-gamma))` so the
/// subtraction of nearly equal terms never happens.
fn uniformity_denominator(m: u64, gamma: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid("m must be >= 2"));
    }
    if gamma.is_nan() || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    if gamma == 1.0 {
        return Err(Error::invalid("gamma = 1 makes ln(1/(1-gamma)) diverge"));
    }
    if gamma == 0.0 {
        return Err(Error::UndefinedBound(
            "no collisions observed (gamma = 0); the uniformity bound is infinite".into(),
        ));
    }
    let log_term = -(-gamma).ln_1p();
    let x = 24.0 / m as f64 * log_term;
    Ok(x / (3.0 + (9.0 + x).sqrt()))
}

/// Upper bound `beta*` on `beta = 1 / sum P(x)^2` implied by observing
/// collision probability `gamma` at batch size `m`.
pub fn beta_star(m: u64, gamma: f64) -> Result<f64> {
    let d = uniformity_denominator(m, gamma)?;
    Ok(2.0 * m as f64 / d)
}

/// Upper bound on the size of the smallest set carrying mass `rho`:
/// `2 m rho^2 / (D - 2 m (1-rho)^2)`. `None` when the denominator is not
/// positive.
pub fn theorem2_support_bound(m: u64, gamma: f64, rho: f64) -> Result<Option<f64>> {
    check_rho(rho)?;
    let d = uniformity_denominator(m, gamma)?;
    let mf = m as f64;
    let denom = d - 2.0 * mf * (1.0 - rho) * (1.0 - rho);
    if denom > 0.0 {
        Ok(Some(2.0 * mf * rho * rho / denom))
    } else {
        Ok(None)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("rho must lie in (0, 1], got {rho}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportValidity {
    pub beta_gt_1000: bool,
    pub m_le_2_sqrt_beta_ln_beta: bool,
    pub denominator_positive: bool,
}

/// Everything the closed forms say about one `(m, gamma, rho)` observation.
///
/// Serializes flat: validity flags sit beside the numbers and undefined
/// bounds appear as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub m: u64,
    pub gamma: f64,
    pub rho: f64,
    /// Head-set size at which the collision lower bound is evaluated.
    pub theorem1_n: f64,
    pub theorem1_bound: f64,
    pub theorem1_bound_corrected: f64,
    pub beta_star: Option<f64>,
    pub support_bound: Option<f64>,
    #[serde(flatten)]
    pub validity: ReportValidity,
}

impl BoundsReport {
    /// Builds the report. `theorem1_n` defaults to `m^2`, the support size
    /// suggested by the birthday heuristic.
    pub fn compute(m: u64, gamma: f64, rho: f64, theorem1_n: Option<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("batch size m must be >= 2"));
        }
        let n = theorem1_n.unwrap_or((m * m) as f64);
        let t1 = theorem1_collision_lower_bound(m, rho, n)?;
        let beta_star = match beta_star(m, gamma) {
            Ok(b) => Some(b),
            Err(Error::UndefinedBound(_)) => None,
            Err(e) => return Err(e),
        };
        let (support_bound, validity) = match beta_star {
            Some(b) => {
                let support = theorem2_support_bound(m, gamma, rho)?;
                let tail = validity_check(m, b);
                (
                    support,
                    ReportValidity {
                        beta_gt_1000: tail.beta_gt_1000,
                        m_le_2_sqrt_beta_ln_beta: tail.m_le_2_sqrt_beta_ln_beta,
                        denominator_positive: support.is_some(),
                    },
                )
            }
            None => {
                check_rho(rho)?;
                (
                    None,
                    ReportValidity {
                        beta_gt_1000: false,
                        m_le_2_sqrt_beta_ln_beta: false,
                        denominator_positive: false,
                    },
                )
            }
        };
        Ok(Self {
            m,
            gamma,
            rho,
            theorem1_n: n,
            theorem1_bound: t1.as_stated,
            theorem1_bound_corrected: t1.corrected,
            beta_star,
            support_bound,
            validity,
        })
    }
}
