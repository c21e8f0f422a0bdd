#![allow(dead_code)]

use std::path::{Path, PathBuf};

use birthday_census::ingest::{Manifest, PnmImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes `n` random grayscale images plus a manifest. Each `(src, dst)` in
/// `planted` makes image `dst` a copy of `src` with `flips` pixels nudged by
/// one grey level.
pub fn write_gray_pool(
    dir: &Path,
    n: usize,
    side: usize,
    seed: u64,
    planted: &[(usize, usize)],
    flips: usize,
) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images: Vec<Vec<u16>> = (0..n)
        .map(|_| {
            (0..side * side)
                .map(|_| rng.random_range(0..=255u16))
                .collect()
        })
        .collect();
    for &(src, dst) in planted {
        let mut copy = images[src].clone();
        for _ in 0..flips {
            let px = rng.random_range(0..copy.len());
            copy[px] = if copy[px] == 255 { 254 } else { copy[px] + 1 };
        }
        images[dst] = copy;
    }
    let mut entries = Vec::with_capacity(n);
    for (i, samples) in images.into_iter().enumerate() {
        let name = format!("img{i:05}.pgm");
        PnmImage::new(side, side, 1, 255, samples)
            .unwrap()
            .write(dir.join(&name))
            .unwrap();
        entries.push((format!("g{i:05}"), PathBuf::from(name)));
    }
    let manifest = dir.join("manifest.json");
    Manifest::pixel(entries, "synthetic noise images")
        .write(&manifest)
        .unwrap();
    manifest
}

/// Exact γ of uniform(n) at batch m from the product formula.
pub fn product_formula(n: u64, m: u64) -> f64 {
    let mut no = 1.0f64;
    for i in 0..m {
        no *= 1.0 - i as f64 / n as f64;
    }
    1.0 - no
}

/// A human-mode session over a fresh pool, written next to the pool.
pub fn write_human_session(
    dir: &Path,
    n: usize,
    planted: &[(usize, usize)],
    trials: u64,
    seed: u64,
) -> PathBuf {
    use birthday_census::census::{run_census, CensusConfig, SourceDescriptor, TrialMode};
    let manifest = write_gray_pool(dir, n, 6, seed, planted, 1);
    let mut config = CensusConfig::new(
        SourceDescriptor::Manifest {
            path: manifest.clone(),
        },
        TrialMode::Human,
    );
    config.trials_per_probe = trials;
    config.seed = seed;
    config.training = Some(manifest);
    let source = config.load_source().unwrap();
    let session = run_census(&source, &config).unwrap();
    let path = dir.join("session.json");
    session.write(&path).unwrap();
    path
}

/// Random verdict sequences against a small human session. Each sequence
/// is applied incrementally while being logged; the log is then replayed
/// in full and at a random record boundary, and both must match the
/// incremental state. Returns the number of mismatching sequences.
pub fn verdict_sequences(cases: u64, seed: u64) -> Result<u64, String> {
    use birthday_census::census::CensusSession;
    use birthday_census::review::{Label, PairFilter, ReviewState, VerdictLog};

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let session_path = write_human_session(dir.path(), 30, &[(1, 2), (3, 4)], 4, seed);
    let session = CensusSession::read(&session_path).map_err(|e| e.to_string())?;
    let config = session.config.clone();
    let source = config.load_source().map_err(|e| e.to_string())?;
    let snapshot = |state: &ReviewState, log: &VerdictLog| -> Result<String, String> {
        let stats = serde_json::to_string(&state.stats().map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let session = state
            .session(Some(log.info()))
            .and_then(|s| s.to_json())
            .map_err(|e| e.to_string())?;
        Ok(stats + &session)
    };

    let mut mismatches = 0;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ case.wrapping_mul(0x9e37_79b9));
        let log_path = dir.path().join(format!("case{case}.jsonl"));
        let (mut log, _) = VerdictLog::open(&log_path).map_err(|e| e.to_string())?;
        let mut state =
            ReviewState::new(config.clone(), source.clone()).map_err(|e| e.to_string())?;
        let steps = rng.random_range(1..=20);
        let mut history = Vec::with_capacity(steps);
        for step in 0..steps {
            let pairs = state.pairs(PairFilter::All, usize::MAX);
            if pairs.is_empty() {
                break;
            }
            let p = &pairs[rng.random_range(0..pairs.len())];
            let (label, item) = match rng.random_range(0..4) {
                0 => (Label::Duplicate, None),
                1 | 2 => (Label::Distinct, None),
                _ => {
                    let item = if rng.random() { &p.id_a } else { &p.id_b };
                    (Label::Artifact, Some(item.clone()))
                }
            };
            let v = state
                .verdict_for(&p.pair_key, label, None, item, step as u64)
                .map_err(|e| e.to_string())?;
            log.append(&v).map_err(|e| e.to_string())?;
            state.apply_verdict(v).map_err(|e| e.to_string())?;
            history.push((
                std::fs::metadata(&log_path)
                    .map_err(|e| e.to_string())?
                    .len(),
                snapshot(&state, &log)?,
            ));
        }
        let incremental = snapshot(&state, &log)?;
        drop(log);

        let (log, verdicts) = VerdictLog::open(&log_path).map_err(|e| e.to_string())?;
        let replayed = ReviewState::replay(config.clone(), source.clone(), verdicts)
            .map_err(|e| e.to_string())?;
        let mut ok = snapshot(&replayed, &log)? == incremental;
        drop(log);

        if !history.is_empty() {
            let cut = rng.random_range(0..history.len());
            let (len, ref expected) = history[cut];
            let file = std::fs::OpenOptions::new()
                .write(true)
                .open(&log_path)
                .map_err(|e| e.to_string())?;
            file.set_len(len).map_err(|e| e.to_string())?;
            drop(file);
            let (log, verdicts) = VerdictLog::open(&log_path).map_err(|e| e.to_string())?;
            let replayed = ReviewState::replay(config.clone(), source.clone(), verdicts)
                .map_err(|e| e.to_string())?;
            ok &= &snapshot(&replayed, &log)? == expected;
        }
        if !ok {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// write, read, write of a session must reproduce the same bytes.
pub fn session_round_trip(path: &Path) -> Result<bool, String> {
    use birthday_census::census::CensusSession;
    let first = std::fs::read(path).map_err(|e| e.to_string())?;
    let session = CensusSession::read(path).map_err(|e| e.to_string())?;
    let copy = path.with_extension("copy.json");
    session.write(&copy).map_err(|e| e.to_string())?;
    let second = std::fs::read(&copy).map_err(|e| e.to_string())?;
    CensusSession::read(&copy)
        .and_then(|s| s.write(&copy))
        .map_err(|e| e.to_string())?;
    let third = std::fs::read(&copy).map_err(|e| e.to_string())?;
    Ok(first == second && second == third)
}
