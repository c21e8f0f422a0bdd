use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::report::SupportReport;
use super::search::{BatchSearch, ProbeRecord, SearchOutcome};
use super::{
    estimate_from_resolutions, estimate_gamma, probe_seed, resolve_flagged, run_trials, Pool,
    Resolution, SampleSource, Trial, TrialMode,
};
use crate::dist::{CollisionEstimate, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::similarity::{Metric, PairCandidate, DEFAULT_K};

pub const SESSION_VERSION: &str = "birthday-census-session/1";
pub const DEFAULT_TARGET: f64 = 0.5;
pub const DEFAULT_TRIALS_AUTO: u64 = 10_000;
/// Each human trial costs up to `k` judgments.
pub const DEFAULT_TRIALS_HUMAN: u64 = 200;

/// Enough to rebuild the [`SampleSource`] of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceDescriptor {
    Uniform {
        n: usize,
    },
    HeadUniform {
        rho: f64,
        n_head: usize,
        n_tail: usize,
    },
    Distribution {
        probs: Vec<f64>,
    },
    /// Pool listed by a manifest file.
    Manifest {
        path: PathBuf,
    },
}

impl SourceDescriptor {
    pub fn is_pool(&self) -> bool {
        matches!(self, SourceDescriptor::Manifest { .. })
    }

    pub fn load(&self, metric: Metric, k: usize) -> Result<SampleSource> {
        Ok(match self {
            SourceDescriptor::Uniform { n } => {
                SampleSource::Synthetic(DiscreteDistribution::uniform(*n)?)
            }
            SourceDescriptor::HeadUniform {
                rho,
                n_head,
                n_tail,
            } => SampleSource::Synthetic(DiscreteDistribution::mass_plus_uniform(
                *rho, *n_head, *n_tail,
            )?),
            SourceDescriptor::Distribution { probs } => {
                SampleSource::Synthetic(DiscreteDistribution::new(probs.clone())?)
            }
            SourceDescriptor::Manifest { path } => {
                let corpus = Corpus::load(path)?;
                SampleSource::Pool(Pool::new(corpus.items, metric, k)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusConfig {
    pub source: SourceDescriptor,
    pub mode: TrialMode,
    pub metric: Metric,
    pub k: usize,
    pub trials_per_probe: u64,
    pub target: f64,
    /// Head mass assumed by the support bound.
    pub rho: f64,
    pub seed: u64,
    /// Training corpus manifest for memorization checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<PathBuf>,
}

impl CensusConfig {
    pub fn new(source: SourceDescriptor, mode: TrialMode) -> Self {
        let trials_per_probe = if mode.is_human() && source.is_pool() {
            DEFAULT_TRIALS_HUMAN
        } else {
            DEFAULT_TRIALS_AUTO
        };
        Self {
            source,
            mode,
            metric: Metric::Euclidean,
            k: DEFAULT_K,
            trials_per_probe,
            target: DEFAULT_TARGET,
            rho: 1.0,
            seed: 0,
            training: None,
        }
    }

    pub fn load_source(&self) -> Result<SampleSource> {
        self.source.load(self.metric, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: u64,
    pub resolution: Resolution,
    pub flagged: Vec<PairCandidate>,
}

/// Trials generated for one batch size in a human session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrials {
    pub batch_size: usize,
    /// Over resolved trials; absent while all are pending.
    pub estimate: Option<CollisionEstimate>,
    pub pending: u64,
    pub trials: Vec<TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictLogInfo {
    pub path: PathBuf,
    pub records: u64,
    /// Hex SHA-256 of the log bytes that were replayed.
    pub sha256: String,
}

/// Persistent record of one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusSession {
    pub version: String,
    pub config: CensusConfig,
    pub trajectory: Vec<ProbeRecord>,
    /// Human sessions only.
    pub probes: Vec<ProbeTrials>,
    /// Batch size awaiting verdicts, if the search is paused.
    pub current_probe: Option<usize>,
    pub outcome: Option<SearchOutcome>,
    pub report: Option<SupportReport>,
    pub warnings: Vec<String>,
    pub verdict_log: Option<VerdictLogInfo>,
}

impl CensusSession {
    pub fn from_progress(
        config: CensusConfig,
        progress: HumanProgress,
        verdict_log: Option<VerdictLogInfo>,
    ) -> Result<Self> {
        let report = session_report(&config, &progress.trajectory, progress.outcome.as_ref())?;
        Ok(Self {
            version: SESSION_VERSION.into(),
            config,
            trajectory: progress.trajectory,
            probes: progress.probes,
            current_probe: progress.current,
            outcome: progress.outcome,
            report,
            warnings: progress.warnings,
            verdict_log,
        })
    }

    /// Support report of the session; see [`SupportReport`].
    pub fn support_report(&self) -> Option<&SupportReport> {
        self.report.as_ref()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let session: CensusSession =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("session: {e}")))?;
        if session.version != SESSION_VERSION {
            return Err(Error::InvalidInput(format!(
                "session version {:?}, expected {SESSION_VERSION:?}",
                session.version
            )));
        }
        Ok(session)
    }

    /// Replaces `path` in one step: a crash leaves the old file or the new
    /// one, never a mix.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn session_report(
    config: &CensusConfig,
    trajectory: &[ProbeRecord],
    outcome: Option<&SearchOutcome>,
) -> Result<Option<SupportReport>> {
    if let Some(outcome) = outcome {
        return SupportReport::from_outcome(outcome, config.target, config.rho).map(Some);
    }
    // interim: the largest measured batch whose γ still leaves the bounds defined
    trajectory
        .iter()
        .filter(|p| p.estimate.point < 1.0)
        .max_by_key(|p| p.batch_size)
        .map(|p| SupportReport::from_observation(p.batch_size, p.estimate.point, config.rho))
        .transpose()
}

/// Runs the whole search with `trials` trials per probe.
///
/// Needs estimates without reviewer input, so a human-mode pool fails with
/// a no-estimate error; use [`HumanCensus`] there.
pub fn find_half_collision_batch(
    source: &SampleSource,
    target: f64,
    trials: u64,
    mode: TrialMode,
    seed: u64,
) -> Result<(SearchOutcome, Vec<ProbeRecord>)> {
    let mut search = BatchSearch::new(target, source.max_batch())?;
    while let Some(s) = search.next_probe() {
        let (estimate, pending) = estimate_gamma(source, s, trials, mode, probe_seed(seed, s))?;
        search.record(estimate, pending)?;
    }
    Ok((
        search.outcome().expect("finished search has an outcome"),
        search.trajectory().to_vec(),
    ))
}

/// Runs a census to completion, or prepares the first review round when
/// the source is a pool in human mode.
pub fn run_census(source: &SampleSource, config: &CensusConfig) -> Result<CensusSession> {
    if config.trials_per_probe == 0 {
        return Err(Error::invalid("trials per probe must be >= 1"));
    }
    if config.mode.is_human() && matches!(source, SampleSource::Pool(_)) {
        let mut human = HumanCensus::new(config.clone(), source.clone())?;
        let progress = human.evaluate(|_| None)?;
        return CensusSession::from_progress(config.clone(), progress, None);
    }
    let (outcome, trajectory) = find_half_collision_batch(
        source,
        config.target,
        config.trials_per_probe,
        config.mode,
        config.seed,
    )?;
    let warnings = trajectory
        .iter()
        .filter_map(|p| source.batch_warning(p.batch_size))
        .collect();
    CensusSession::from_progress(
        config.clone(),
        HumanProgress {
            trajectory,
            probes: Vec::new(),
            current: None,
            outcome: Some(outcome),
            warnings,
        },
        None,
    )
}

/// Derived state of a human-mode census.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanProgress {
    pub trajectory: Vec<ProbeRecord>,
    pub probes: Vec<ProbeTrials>,
    pub current: Option<usize>,
    pub outcome: Option<SearchOutcome>,
    pub warnings: Vec<String>,
}

/// Human-mode census whose state is a function of the config and the set
/// of active verdicts. Trials per batch size are generated once and reused.
#[derive(Debug)]
pub struct HumanCensus {
    config: CensusConfig,
    source: SampleSource,
    memo: HashMap<usize, Arc<Vec<Trial>>>,
}

impl HumanCensus {
    pub fn new(config: CensusConfig, source: SampleSource) -> Result<Self> {
        if config.trials_per_probe == 0 {
            return Err(Error::invalid("trials per probe must be >= 1"));
        }
        BatchSearch::new(config.target, source.max_batch())?;
        Ok(Self {
            config,
            source,
            memo: HashMap::new(),
        })
    }

    pub fn config(&self) -> &CensusConfig {
        &self.config
    }

    pub fn source(&self) -> &SampleSource {
        &self.source
    }

    fn trials_for(&mut self, s: usize) -> Result<Arc<Vec<Trial>>> {
        if let Some(t) = self.memo.get(&s) {
            return Ok(Arc::clone(t));
        }
        let trials = Arc::new(run_trials(
            &self.source,
            s,
            self.config.trials_per_probe,
            self.config.mode,
            probe_seed(self.config.seed, s),
        )?);
        self.memo.insert(s, Arc::clone(&trials));
        Ok(trials)
    }

    /// Replays the search, resolving pending trials with `label`. Stops at
    /// the first probe that still has pending trials.
    pub fn evaluate(
        &mut self,
        label: impl Fn(&PairCandidate) -> Option<bool>,
    ) -> Result<HumanProgress> {
        let mut search = BatchSearch::new(self.config.target, self.source.max_batch())?;
        let mut probes = Vec::new();
        let mut warnings = Vec::new();
        while let Some(s) = search.next_probe() {
            let trials = self.trials_for(s)?;
            let summaries: Vec<TrialSummary> = trials
                .iter()
                .map(|t| TrialSummary {
                    trial_id: t.trial_id,
                    resolution: match t.resolution {
                        Resolution::Pending => resolve_flagged(&t.flagged, &label),
                        r => r,
                    },
                    flagged: t.flagged.clone(),
                })
                .collect();
            let measured = estimate_from_resolutions(summaries.iter().map(|t| t.resolution));
            let (estimate, pending) = match measured {
                Ok((e, p)) => (Some(e), p),
                Err(Error::NoEstimate(_)) => (None, summaries.len() as u64),
                Err(e) => return Err(e),
            };
            warnings.extend(self.source.batch_warning(s));
            probes.push(ProbeTrials {
                batch_size: s,
                estimate,
                pending,
                trials: summaries,
            });
            if pending > 0 {
                break;
            }
            search.record(estimate.expect("no pending trials"), 0)?;
        }
        Ok(HumanProgress {
            trajectory: search.trajectory().to_vec(),
            probes,
            current: search.next_probe(),
            outcome: search.outcome(),
            warnings,
        })
    }
}

/// Auto-mode threshold from a labelled warm-up: the largest distance among
/// pairs a reviewer confirmed as duplicates.
pub fn calibrate_threshold(duplicate_distances: impl IntoIterator<Item = f64>) -> Result<f64> {
    duplicate_distances
        .into_iter()
        .filter(|d| d.is_finite())
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::NoEstimate("no confirmed duplicates to calibrate from".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{write_binary, EmbeddingFormat, EmbeddingSource, Manifest};
    use crate::similarity::ItemVector;

    fn synthetic_config(n: usize, trials: u64) -> CensusConfig {
        let mut c = CensusConfig::new(SourceDescriptor::Uniform { n }, TrialMode::Human);
        c.trials_per_probe = trials;
        c.seed = 9;
        c
    }

    #[test]
    fn synthetic_census_is_deterministic() {
        let config = synthetic_config(366, 2000);
        let source = config.load_source().unwrap();
        let a = run_census(&source, &config).unwrap();
        let b = run_census(&source, &config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let Some(SearchOutcome::Found {
            s_star,
            support_estimate,
        }) = a.outcome
        else {
            panic!()
        };
        assert!((20..=26).contains(&s_star), "{s_star}");
        assert_eq!(support_estimate, (s_star * s_star) as u64);
        assert_eq!(a.report.unwrap().heuristic_support, support_estimate);
    }

    #[test]
    fn point_mass_stops_at_two() {
        let source = SampleSource::Synthetic(DiscreteDistribution::point_mass());
        let (outcome, trajectory) =
            find_half_collision_batch(&source, 0.5, 100, TrialMode::Human, 1).unwrap();
        assert_eq!(
            outcome,
            SearchOutcome::Found {
                s_star: 2,
                support_estimate: 4
            }
        );
        assert_eq!(trajectory.len(), 1);
    }

    #[test]
    fn session_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic_config(1000, 500);
        let session = run_census(&config.load_source().unwrap(), &config).unwrap();
        let path = dir.path().join("s.json");
        session.write(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = CensusSession::read(&path).unwrap();
        assert_eq!(back, session);
        back.write(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(names.len(), 1, "temp file left behind");
    }

    #[test]
    fn corrupt_session_is_rejected() {
        assert!(matches!(
            CensusSession::from_json("{"),
            Err(Error::InvalidInput(_))
        ));
        let config = synthetic_config(10, 10);
        let mut s = run_census(&config.load_source().unwrap(), &config).unwrap();
        s.version = "other/9".into();
        let text = serde_json::to_string(&s).unwrap();
        assert!(CensusSession::from_json(&text).is_err());
    }

    fn embedding_pool(dir: &Path, n: usize) -> PathBuf {
        let rows: Vec<_> = (0..n)
            .map(|i| {
                let v = if i == n - 1 { 0.0 } else { i as f32 };
                ItemVector::embedding(i.to_string(), vec![v, 0.0]).unwrap()
            })
            .collect();
        write_binary(dir.join("e.bin"), &rows).unwrap();
        let m = Manifest::embedding(
            EmbeddingSource {
                path: "e.bin".into(),
                format: EmbeddingFormat::Binary,
            },
            (0..n).map(|i| (format!("item{i}"), i)),
            "",
        );
        m.write(dir.join("m.json")).unwrap();
        dir.join("m.json")
    }

    #[test]
    fn human_session_waits_for_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = embedding_pool(dir.path(), 40);
        let mut config = CensusConfig::new(
            SourceDescriptor::Manifest { path: manifest },
            TrialMode::Human,
        );
        assert_eq!(config.trials_per_probe, DEFAULT_TRIALS_HUMAN);
        config.trials_per_probe = 5;
        config.k = 2;
        let source = config.load_source().unwrap();
        let session = run_census(&source, &config).unwrap();
        assert_eq!(session.current_probe, Some(2));
        assert!(session.outcome.is_none() && session.report.is_none());
        assert_eq!(session.probes.len(), 1);
        assert_eq!(session.probes[0].pending, 5);

        // calling every pair distinct resolves probe after probe until the pool runs out
        let mut human = HumanCensus::new(config.clone(), source).unwrap();
        let all_clean = human.evaluate(|_| Some(false)).unwrap();
        assert!(matches!(
            all_clean.outcome,
            Some(SearchOutcome::PoolLimited { max_batch: 40, .. })
        ));
        assert!(!all_clean.warnings.is_empty());

        // only the planted pair is a duplicate
        let planted = |p: &PairCandidate| Some(p.id_a == "item0" && p.id_b == "item39");
        let progress = human.evaluate(planted).unwrap();
        assert!(progress.outcome.is_some());
        let again = human.evaluate(planted).unwrap();
        assert_eq!(progress, again);
    }

    #[test]
    fn calibration_takes_the_largest_duplicate() {
        assert_eq!(calibrate_threshold([0.2, 1.5, f64::NAN, 0.9]).unwrap(), 1.5);
        assert!(matches!(calibrate_threshold([]), Err(Error::NoEstimate(_))));
    }
}
