use serde::{Deserialize, Serialize};

use crate::dist::CollisionEstimate;
use crate::error::{Error, Result};

/// One γ measurement taken by the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    /// 1 while doubling, 2 while bisecting.
    pub phase: u8,
    pub batch_size: usize,
    pub estimate: CollisionEstimate,
    /// Trials excluded because no verdict resolved them.
    pub pending: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchOutcome {
    Found {
        s_star: usize,
        /// Always `s_star²`.
        support_estimate: u64,
    },
    /// The whole pool was drawn without reaching the target, so the
    /// support exceeds what this pool can resolve.
    PoolLimited { max_batch: usize, gamma: f64 },
}

impl SearchOutcome {
    fn found(s_star: usize) -> Self {
        SearchOutcome::Found {
            s_star,
            support_estimate: (s_star as u64) * (s_star as u64),
        }
    }

    /// The crossing batch size, if one was found.
    pub fn s_star(&self) -> Option<usize> {
        match self {
            SearchOutcome::Found { s_star, .. } => Some(*s_star),
            SearchOutcome::PoolLimited { .. } => None,
        }
    }
}

/// Smallest batch size reaching a target collision probability.
///
/// Phase 1 doubles from 2 until the point estimate reaches the target.
/// Phase 2 bisects the last bracket, moving the upper end whenever the
/// Wilson midpoint reaches the target, and stops once the bracket is no
/// wider than `max(1, 0.05 * hi)`. The caller supplies the estimates, so the
/// same machine drives automatic runs and human review.
#[derive(Debug, Clone)]
pub struct BatchSearch {
    target: f64,
    cap: usize,
    lo: usize,
    hi: Option<usize>,
    next: Option<usize>,
    trajectory: Vec<ProbeRecord>,
    outcome: Option<SearchOutcome>,
}

impl BatchSearch {
    /// `cap` is the largest batch that may be drawn (the pool size).
    pub fn new(target: f64, cap: usize) -> Result<Self> {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid(format!(
                "target must lie in (0, 1), got {target}"
            )));
        }
        if cap < 2 {
            return Err(Error::invalid(format!(
                "need room for a batch of 2, cap is {cap}"
            )));
        }
        Ok(Self {
            target,
            cap,
            lo: 1,
            hi: None,
            next: Some(2),
            trajectory: Vec::new(),
            outcome: None,
        })
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Batch size to measure next; `None` once finished.
    pub fn next_probe(&self) -> Option<usize> {
        self.next
    }

    pub fn phase(&self) -> u8 {
        if self.hi.is_some() {
            2
        } else {
            1
        }
    }

    pub fn trajectory(&self) -> &[ProbeRecord] {
        &self.trajectory
    }

    pub fn outcome(&self) -> Option<SearchOutcome> {
        self.outcome
    }

    /// Feeds the estimate for the batch size returned by [`next_probe`].
    ///
    /// [`next_probe`]: BatchSearch::next_probe
    pub fn record(&mut self, estimate: CollisionEstimate, pending: u64) -> Result<()> {
        let s = self
            .next
            .ok_or_else(|| Error::invalid("search already finished"))?;
        self.trajectory.push(ProbeRecord {
            phase: self.phase(),
            batch_size: s,
            estimate,
            pending,
        });
        match self.hi {
            None if estimate.point >= self.target => {
                self.hi = Some(s);
                self.settle();
            }
            None if s >= self.cap => {
                self.next = None;
                self.outcome = Some(SearchOutcome::PoolLimited {
                    max_batch: s,
                    gamma: estimate.point,
                });
            }
            None => {
                self.lo = s;
                self.next = Some((2 * s).min(self.cap));
            }
            Some(_) => {
                if estimate.midpoint() >= self.target {
                    self.hi = Some(s);
                } else {
                    self.lo = s;
                }
                self.settle();
            }
        }
        Ok(())
    }

    fn settle(&mut self) {
        let hi = self.hi.expect("bracket closed");
        let width = hi - self.lo;
        // at s = 2 the bracket is (1, 2] and nothing smaller can collide
        if width as f64 <= (0.05 * hi as f64).max(1.0) {
            self.next = None;
            self.outcome = Some(SearchOutcome::found(hi));
        } else {
            self.next = Some(self.lo + width / 2);
        }
    }
}
