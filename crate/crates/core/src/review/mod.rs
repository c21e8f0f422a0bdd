//! Human review of flagged pairs.
//!
//! Verdicts are keyed by a hash of the two item ids, so a pair that shows
//! up in several trials is judged once. The latest verdict for a key is the
//! active one; the log keeps all of them. Everything the service reports is
//! recomputed from the session config and the active verdicts.

mod log;
mod server;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::census::{
    CensusConfig, CensusSession, HumanCensus, HumanProgress, ProbeRecord, Resolution, SampleSource,
    SearchOutcome, SupportReport, VerdictLogInfo,
};
use crate::dist::CollisionEstimate;
use crate::error::{Error, Result};
use crate::similarity::PairCandidate;

pub use log::{parse_log, sha256_hex, VerdictLog};
pub use server::{router, serve, AppState, ReviewService, ServeOptions, VerdictRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Duplicate,
    Distinct,
    /// Corrupted or noise-pattern sample; never counts as a duplicate.
    Artifact,
}

/// Content-addressed key of an unordered id pair.
pub fn pair_key(a: &str, b: &str) -> String {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut bytes = Vec::with_capacity(lo.len() + hi.len() + 1);
    bytes.extend_from_slice(lo.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(hi.as_bytes());
    sha256_hex(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair_key: String,
    pub id_a: String,
    pub id_b: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// For artifacts: the sample showing it. Both ids count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    /// UTC seconds.
    pub timestamp: u64,
}

/// Artifact-labelled samples among all reviewed samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRate {
    pub artifacts: u64,
    pub reviewed: u64,
    pub rate: f64,
}

/// Where a flagged pair occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    pub pair_key: String,
    pub id_a: String,
    pub id_b: String,
    pub distance: f64,
    /// `(batch_size, trial_id)` of every trial that flagged it.
    pub trials: Vec<(usize, u64)>,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCounts {
    /// Pairs with an active verdict.
    pub active: u64,
    /// Verdicts ever recorded, superseded ones included.
    pub recorded: u64,
}

/// Live estimates for the reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Batch size whose trials await verdicts.
    pub current_probe: Option<usize>,
    /// γ over the resolved trials of the latest probe.
    pub gamma: Option<CollisionEstimate>,
    pub gamma_batch_size: Option<usize>,
    pub trials_resolved: u64,
    pub trials_pending: u64,
    pub trajectory: Vec<ProbeRecord>,
    pub outcome: Option<SearchOutcome>,
    pub report: Option<SupportReport>,
    pub artifact: Option<ArtifactRate>,
    pub verdicts: VerdictCounts,
    pub warnings: Vec<String>,
}

/// Human-mode session state under a set of verdicts.
#[derive(Debug)]
pub struct ReviewState {
    census: HumanCensus,
    active: HashMap<String, Verdict>,
    recorded: u64,
    progress: HumanProgress,
    pairs: BTreeMap<String, PairInfo>,
}

impl ReviewState {
    pub fn new(config: CensusConfig, source: SampleSource) -> Result<Self> {
        Self::replay(config, source, [])
    }

    /// State after applying `verdicts` in order.
    pub fn replay(
        config: CensusConfig,
        source: SampleSource,
        verdicts: impl IntoIterator<Item = Verdict>,
    ) -> Result<Self> {
        if !config.mode.is_human() {
            return Err(Error::InvalidInput("session is not in human mode".into()));
        }
        let mut census = HumanCensus::new(config, source)?;
        let mut active = HashMap::new();
        let mut recorded = 0;
        for v in verdicts {
            recorded += 1;
            active.insert(v.pair_key.clone(), v);
        }
        let progress = census.evaluate(|p| label_of(&active, p))?;
        let mut state = Self {
            census,
            active,
            recorded,
            progress,
            pairs: BTreeMap::new(),
        };
        state.index_pairs();
        Ok(state)
    }

    pub fn config(&self) -> &CensusConfig {
        self.census.config()
    }

    pub fn source(&self) -> &SampleSource {
        self.census.source()
    }

    pub fn progress(&self) -> &HumanProgress {
        &self.progress
    }

    fn refresh(&mut self) -> Result<()> {
        let active = &self.active;
        self.progress = self.census.evaluate(|p| label_of(active, p))?;
        self.index_pairs();
        Ok(())
    }

    fn index_pairs(&mut self) {
        let mut pairs: BTreeMap<String, PairInfo> = BTreeMap::new();
        for probe in &self.progress.probes {
            for trial in &probe.trials {
                for p in &trial.flagged {
                    let key = pair_key(&p.id_a, &p.id_b);
                    let label = self.active.get(&key).map(|v| v.label);
                    pairs
                        .entry(key.clone())
                        .or_insert_with(|| PairInfo {
                            pair_key: key,
                            id_a: p.id_a.clone(),
                            id_b: p.id_b.clone(),
                            distance: p.distance,
                            trials: Vec::new(),
                            label,
                        })
                        .trials
                        .push((probe.batch_size, trial.trial_id));
                }
            }
        }
        self.pairs = pairs;
    }

    pub fn pair(&self, key: &str) -> Option<&PairInfo> {
        self.pairs.get(key)
    }

    /// Builds a verdict for a flagged pair of the current session.
    pub fn verdict_for(
        &self,
        key: &str,
        label: Label,
        note: Option<String>,
        item: Option<String>,
        timestamp: u64,
    ) -> Result<Verdict> {
        let pair = self.pair(key).ok_or_else(|| {
            Error::NotFound(format!("pair key {key} is not flagged in this session"))
        })?;
        if let Some(item) = &item {
            if label != Label::Artifact {
                return Err(Error::invalid("only artifact verdicts name an item"));
            }
            if item != &pair.id_a && item != &pair.id_b {
                return Err(Error::invalid(format!(
                    "item {item:?} is not part of pair {key}"
                )));
            }
        }
        Ok(Verdict {
            pair_key: key.to_owned(),
            id_a: pair.id_a.clone(),
            id_b: pair.id_b.clone(),
            label,
            note,
            item,
            timestamp,
        })
    }

    /// Applies one verdict; its pair must be flagged by a trial on the
    /// current search path.
    pub fn apply_verdict(&mut self, verdict: Verdict) -> Result<()> {
        let pair = self.pairs.get(&verdict.pair_key).ok_or_else(|| {
            Error::NotFound(format!(
                "pair key {} is not flagged in this session",
                verdict.pair_key
            ))
        })?;
        if (pair.id_a.as_str(), pair.id_b.as_str())
            != (verdict.id_a.as_str(), verdict.id_b.as_str())
        {
            return Err(Error::invalid("verdict ids do not match its pair key"));
        }
        self.recorded += 1;
        self.active.insert(verdict.pair_key.clone(), verdict);
        self.refresh()
    }

    /// Flagged pairs of the current search path, in order of first
    /// appearance. `Pending` lists the unlabelled pairs of trials that are
    /// still undecided; `Resolved` those with a verdict.
    pub fn pairs(&self, filter: PairFilter, limit: usize) -> Vec<PairInfo> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for probe in &self.progress.probes {
            for trial in &probe.trials {
                for p in &trial.flagged {
                    let key = pair_key(&p.id_a, &p.id_b);
                    let info = &self.pairs[&key];
                    let keep = match filter {
                        PairFilter::All => true,
                        PairFilter::Resolved => info.label.is_some(),
                        PairFilter::Pending => {
                            info.label.is_none() && trial.resolution == Resolution::Pending
                        }
                    };
                    if keep && seen.insert(key) {
                        out.push(info.clone());
                        if out.len() >= limit {
                            return out;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn artifact_rate(&self) -> Result<ArtifactRate> {
        artifact_rate(self.active.values())
    }

    /// Auto-mode threshold from the confirmed duplicates so far.
    pub fn calibrated_threshold(&self) -> Result<f64> {
        crate::census::calibrate_threshold(
            self.active
                .values()
                .filter(|v| v.label == Label::Duplicate)
                .filter_map(|v| self.pairs.get(&v.pair_key).map(|p| p.distance)),
        )
    }

    pub fn stats(&self) -> Result<Stats> {
        let latest = self.progress.probes.last();
        let report =
            CensusSession::from_progress(self.config().clone(), self.progress.clone(), None)?
                .report;
        Ok(Stats {
            current_probe: self.progress.current,
            gamma: latest.and_then(|p| p.estimate),
            gamma_batch_size: latest.map(|p| p.batch_size),
            trials_resolved: latest.map_or(0, |p| p.trials.len() as u64 - p.pending),
            trials_pending: latest.map_or(0, |p| p.pending),
            trajectory: self.progress.trajectory.clone(),
            outcome: self.progress.outcome,
            report,
            artifact: self.artifact_rate().ok(),
            verdicts: VerdictCounts {
                active: self.active.len() as u64,
                recorded: self.recorded,
            },
            warnings: self.progress.warnings.clone(),
        })
    }

    pub fn session(&self, log: Option<VerdictLogInfo>) -> Result<CensusSession> {
        CensusSession::from_progress(self.config().clone(), self.progress.clone(), log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFilter {
    #[default]
    Pending,
    Resolved,
    All,
}

fn label_of(active: &HashMap<String, Verdict>, p: &PairCandidate) -> Option<bool> {
    active
        .get(&pair_key(&p.id_a, &p.id_b))
        .map(|v| v.label == Label::Duplicate)
}

/// Distinct samples carrying an active artifact label over distinct samples
/// with any active verdict.
pub fn artifact_rate<'a>(active: impl IntoIterator<Item = &'a Verdict>) -> Result<ArtifactRate> {
    let mut reviewed = BTreeSet::new();
    let mut artifacts = BTreeSet::new();
    for v in active {
        reviewed.insert(v.id_a.as_str());
        reviewed.insert(v.id_b.as_str());
        if v.label == Label::Artifact {
            match &v.item {
                Some(item) => {
                    artifacts.insert(item.as_str());
                }
                None => {
                    artifacts.insert(v.id_a.as_str());
                    artifacts.insert(v.id_b.as_str());
                }
            }
        }
    }
    if reviewed.is_empty() {
        return Err(Error::NoEstimate("no samples reviewed yet".into()));
    }
    Ok(ArtifactRate {
        artifacts: artifacts.len() as u64,
        reviewed: reviewed.len() as u64,
        rate: artifacts.len() as f64 / reviewed.len() as f64,
    })
}

/// Default verdict log location for a session file.
pub fn default_log_path(session: &Path) -> PathBuf {
    let mut name = session.file_name().unwrap_or_default().to_os_string();
    name.push(".verdicts.jsonl");
    session.with_file_name(name)
}

/// Threshold calibrated from a reviewed session file and its log.
pub fn calibrate_from_session(session_path: &Path) -> Result<f64> {
    let session = CensusSession::read(session_path)?;
    let log_path = session
        .verdict_log
        .as_ref()
        .map(|l| l.path.clone())
        .unwrap_or_else(|| default_log_path(session_path));
    let bytes = std::fs::read(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let (verdicts, _) = parse_log(&bytes)?;
    let mut distances: HashMap<String, f64> = HashMap::new();
    for probe in &session.probes {
        for t in &probe.trials {
            for p in &t.flagged {
                distances.insert(pair_key(&p.id_a, &p.id_b), p.distance);
            }
        }
    }
    let mut latest: HashMap<&str, Label> = HashMap::new();
    for v in &verdicts {
        latest.insert(&v.pair_key, v.label);
    }
    crate::census::calibrate_threshold(
        latest
            .into_iter()
            .filter(|(_, l)| *l == Label::Duplicate)
            .filter_map(|(k, _)| distances.get(k).copied()),
    )
}

pub(crate) fn now_utc_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
