//! The birthday-paradox test engine.
//!
//! A trial draws one batch, flags its closest pairs and decides whether the
//! batch contains a duplicate. Repeating trials at a batch size estimates γ;
//! [`BatchSearch`] looks for the smallest batch with γ at the target, whose
//! square is the heuristic support estimate.
//!
//! Seeds: probe `s` of a session uses `derive_seed(seed, s)` and its trial
//! `t` uses `probe_seed ^ t`, so a trial can be regenerated in isolation.

mod report;
mod search;
mod session;

use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{count_collisions, AtomSampler, CollisionEstimate, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::similarity::{
    check_compatible, distance, top_k_by, ItemVector, Metric, PairCandidate, PairwiseTable,
};

pub use report::{SupportReport, CAVEAT};
pub use search::{BatchSearch, ProbeRecord, SearchOutcome};
pub use session::{
    calibrate_threshold, find_half_collision_batch, run_census, CensusConfig, CensusSession,
    HumanCensus, HumanProgress, ProbeTrials, SourceDescriptor, TrialSummary, VerdictLogInfo,
    DEFAULT_TARGET, DEFAULT_TRIALS_AUTO, DEFAULT_TRIALS_HUMAN, SESSION_VERSION,
};

/// Pools up to this size get a precomputed distance table.
pub const TABLE_LIMIT: usize = 4096;

/// How a pool trial decides whether its batch collided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TrialMode {
    /// Collided iff the closest flagged pair is within `threshold`.
    Auto { threshold: f64 },
    /// Resolved later from reviewer verdicts.
    Human,
}

impl TrialMode {
    pub fn is_human(&self) -> bool {
        matches!(self, TrialMode::Human)
    }

    fn validate(&self) -> Result<()> {
        match self {
            TrialMode::Auto { threshold } if !(threshold.is_finite() && *threshold >= 0.0) => {
                Err(Error::invalid(format!(
                    "threshold must be finite and >= 0, got {threshold}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Pending,
    Collided,
    Clean,
}

/// A finite dump of generated samples.
#[derive(Debug, Clone)]
pub struct Pool {
    items: Vec<ItemVector>,
    metric: Metric,
    k: usize,
    table: Option<PairwiseTable>,
}

impl Pool {
    /// `k` pairs are flagged per batch.
    pub fn new(items: Vec<ItemVector>, metric: Metric, k: usize) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::invalid(format!(
                "a pool needs >= 2 items, got {}",
                items.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        check_compatible(&items)?;
        let mut seen = HashSet::new();
        if let Some(dup) = items.iter().find(|i| !seen.insert(i.id())) {
            return Err(Error::invalid(format!(
                "duplicate item id {:?} in pool",
                dup.id()
            )));
        }
        let table = if items.len() <= TABLE_LIMIT {
            Some(PairwiseTable::build(&items, metric)?)
        } else {
            None
        };
        Ok(Self {
            items,
            metric,
            k,
            table,
        })
    }

    pub fn items(&self) -> &[ItemVector] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t.get(i, j),
            None => distance(&self.items[i], &self.items[j], self.metric)
                .expect("pool items were checked compatible"),
        }
    }

    fn draw(&self, batch_size: usize, seed: u64) -> Vec<usize> {
        index::sample(&mut rng_for(seed), self.items.len(), batch_size).into_vec()
    }

    fn flag(&self, drawn: &[usize]) -> Vec<PairCandidate> {
        let ids: Vec<&str> = drawn.iter().map(|&i| self.items[i].id()).collect();
        top_k_by(&ids, self.k, |a, b| self.dist(drawn[a], drawn[b]))
            .expect("batch of distinct pool items")
    }

    /// Same answer as `flag(drawn)[0].distance <= threshold`.
    fn any_within(&self, drawn: &[usize], threshold: f64) -> bool {
        drawn
            .iter()
            .enumerate()
            .any(|(a, &i)| drawn[a + 1..].iter().any(|&j| self.dist(i, j) <= threshold))
    }
}

/// Where batches come from.
#[derive(Debug, Clone)]
pub enum SampleSource {
    /// i.i.d. draws; a collision is a repeated atom id.
    Synthetic(DiscreteDistribution),
    /// Draws without replacement within a batch, with replacement across
    /// trials.
    Pool(Pool),
}

impl SampleSource {
    /// Largest batch the search may request.
    pub fn max_batch(&self) -> usize {
        match self {
            // one more than the support guarantees a repeat
            SampleSource::Synthetic(d) => d.support_size().saturating_add(1).max(2),
            SampleSource::Pool(p) => p.len(),
        }
    }

    fn check_batch(&self, batch_size: usize) -> Result<()> {
        if batch_size < 2 {
            return Err(Error::invalid(format!(
                "batch size must be >= 2, got {batch_size}"
            )));
        }
        if let SampleSource::Pool(p) = self {
            if batch_size > p.len() {
                return Err(Error::invalid(format!(
                    "batch size {batch_size} exceeds the pool of {}",
                    p.len()
                )));
            }
        }
        Ok(())
    }

    /// Warning text when a pool batch is a large share of the pool.
    pub fn batch_warning(&self, batch_size: usize) -> Option<String> {
        match self {
            SampleSource::Pool(p) if batch_size * 10 > p.len() => Some(format!(
                "batch size {batch_size} exceeds a tenth of the {}-item pool; \
                 drawing without replacement biases the estimate",
                p.len()
            )),
            _ => None,
        }
    }
}

/// What one trial drew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "refs", rename_all = "lowercase")]
pub enum Draw {
    Atoms(Vec<usize>),
    Items(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: u64,
    pub batch_size: usize,
    pub drawn: Draw,
    /// Closest pairs of the batch; empty for synthetic sources.
    pub flagged: Vec<PairCandidate>,
    pub resolution: Resolution,
    pub mode: TrialMode,
}

/// Draws and resolves one batch. Synthetic sources ignore `mode`.
pub fn run_trial(
    source: &SampleSource,
    batch_size: usize,
    mode: TrialMode,
    seed: u64,
) -> Result<Trial> {
    run_trial_with_id(source, batch_size, mode, seed, 0)
}

fn run_trial_with_id(
    source: &SampleSource,
    batch_size: usize,
    mode: TrialMode,
    seed: u64,
    trial_id: u64,
) -> Result<Trial> {
    source.check_batch(batch_size)?;
    mode.validate()?;
    Ok(match source {
        SampleSource::Synthetic(dist) => {
            let atoms = AtomSampler::new(dist).draw_batch(batch_size, &mut rng_for(seed));
            let mut seen = HashSet::new();
            let collided = !atoms.iter().all(|a| seen.insert(*a));
            Trial {
                trial_id,
                batch_size,
                drawn: Draw::Atoms(atoms),
                flagged: Vec::new(),
                resolution: if collided {
                    Resolution::Collided
                } else {
                    Resolution::Clean
                },
                mode,
            }
        }
        SampleSource::Pool(pool) => {
            let drawn = pool.draw(batch_size, seed);
            let flagged = pool.flag(&drawn);
            let resolution = match mode {
                TrialMode::Auto { threshold } if flagged[0].distance <= threshold => {
                    Resolution::Collided
                }
                TrialMode::Auto { .. } => Resolution::Clean,
                TrialMode::Human => Resolution::Pending,
            };
            Trial {
                trial_id,
                batch_size,
                drawn: Draw::Items(
                    drawn
                        .iter()
                        .map(|&i| pool.items[i].id().to_owned())
                        .collect(),
                ),
                flagged,
                resolution,
                mode,
            }
        }
    })
}

/// All trials of one probe, trial `t` seeded `seed ^ t`.
pub fn run_trials(
    source: &SampleSource,
    batch_size: usize,
    trials: u64,
    mode: TrialMode,
    seed: u64,
) -> Result<Vec<Trial>> {
    source.check_batch(batch_size)?;
    (0..trials)
        .into_par_iter()
        .map(|t| run_trial_with_id(source, batch_size, mode, seed ^ t, t))
        .collect()
}

/// Human-mode resolution from per-pair labels: `Some(true)` is an active
/// duplicate verdict, `Some(false)` any other active verdict.
pub fn resolve_flagged(
    flagged: &[PairCandidate],
    label: impl Fn(&PairCandidate) -> Option<bool>,
) -> Resolution {
    let mut all_labelled = true;
    for pair in flagged {
        match label(pair) {
            Some(true) => return Resolution::Collided,
            Some(false) => {}
            None => all_labelled = false,
        }
    }
    if all_labelled {
        Resolution::Clean
    } else {
        Resolution::Pending
    }
}

/// γ over resolved trials, plus the number left pending.
pub fn estimate_from_resolutions(
    resolutions: impl IntoIterator<Item = Resolution>,
) -> Result<(CollisionEstimate, u64)> {
    let (mut collided, mut clean, mut pending) = (0u64, 0u64, 0u64);
    for r in resolutions {
        match r {
            Resolution::Collided => collided += 1,
            Resolution::Clean => clean += 1,
            Resolution::Pending => pending += 1,
        }
    }
    if collided + clean == 0 {
        return Err(Error::NoEstimate(format!(
            "all {pending} trials are pending"
        )));
    }
    Ok((
        CollisionEstimate::from_counts(collided + clean, collided)?,
        pending,
    ))
}

/// Collision probability at `batch_size` over `trials` trials.
///
/// Returns the estimate and the pending count. Without verdicts a
/// human-mode pool leaves every trial pending, which is an error.
pub fn estimate_gamma(
    source: &SampleSource,
    batch_size: usize,
    trials: u64,
    mode: TrialMode,
    seed: u64,
) -> Result<(CollisionEstimate, u64)> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    source.check_batch(batch_size)?;
    mode.validate()?;
    match (source, mode) {
        (SampleSource::Synthetic(dist), _) => {
            let sampler = AtomSampler::new(dist);
            let collided = count_collisions(&sampler, batch_size, trials, seed);
            Ok((CollisionEstimate::from_counts(trials, collided)?, 0))
        }
        (SampleSource::Pool(pool), TrialMode::Auto { threshold }) => {
            let collided = (0..trials)
                .into_par_iter()
                .filter(|t| pool.any_within(&pool.draw(batch_size, seed ^ t), threshold))
                .count() as u64;
            Ok((CollisionEstimate::from_counts(trials, collided)?, 0))
        }
        (SampleSource::Pool(_), TrialMode::Human) => Err(Error::NoEstimate(format!(
            "all {trials} trials are pending review"
        ))),
    }
}

/// Seed of the probe at `batch_size` within a session seeded `seed`.
pub fn probe_seed(seed: u64, batch_size: usize) -> u64 {
    derive_seed(seed, batch_size as u64)
}
