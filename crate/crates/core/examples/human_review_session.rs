//! A human-mode census driven to completion by a scripted reviewer.
//!
//! The CLI writes the same kind of session with
//! `birthday-census census --manifest M --mode human --session S`, and
//! `birthday-census serve --session S` exposes it to the review UI. Here the
//! reviewer is a function that knows which images were planted as copies.
//!
//! Run with `cargo run --release --example human_review_session`.

use std::collections::HashSet;

use birthday_census::census::{run_census, CensusConfig, SourceDescriptor, TrialMode};
use birthday_census::ingest::{Manifest, PnmImage};
use birthday_census::review::{Label, PairFilter, ReviewService, VerdictRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> birthday_census::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 120;
    let mut images: Vec<Vec<u16>> = (0..n)
        .map(|_| (0..16 * 16).map(|_| rng.random_range(0..=255)).collect())
        .collect();
    let mut planted = HashSet::new();
    for i in 0..12 {
        images[n - 1 - i] = images[i].clone();
        planted.insert((format!("p{i:03}"), format!("p{:03}", n - 1 - i)));
    }
    let mut entries = Vec::new();
    for (i, samples) in images.into_iter().enumerate() {
        let file = format!("p{i:03}.pgm");
        PnmImage::new(16, 16, 1, 255, samples)?.write(dir.path().join(&file))?;
        entries.push((format!("p{i:03}"), file.into()));
    }
    let manifest = dir.path().join("manifest.json");
    Manifest::pixel(entries, "pool with exact copies").write(&manifest)?;

    let config = CensusConfig {
        trials_per_probe: 20,
        k: 3,
        ..CensusConfig::new(
            SourceDescriptor::Manifest { path: manifest },
            TrialMode::Human,
        )
    };
    let session_path = dir.path().join("session.json");
    run_census(&config.load_source()?, &config)?.write(&session_path)?;

    let mut service = ReviewService::open(&session_path)?;
    let mut reviewed = 0;
    while let Some(pair) = service.state().pairs(PairFilter::Pending, 1).pop() {
        let label = if planted.contains(&(pair.id_a.clone(), pair.id_b.clone())) {
            Label::Duplicate
        } else {
            Label::Distinct
        };
        let stats = service.submit(VerdictRequest {
            pair_key: pair.pair_key,
            label,
            note: None,
            item: None,
        })?;
        reviewed += 1;
        if reviewed % 25 == 0 {
            println!(
                "{reviewed} verdicts, probing batch {:?}",
                stats.current_probe
            );
        }
    }
    let stats = service.state().stats()?;
    println!("{reviewed} verdicts in total");
    println!(
        "outcome: {}",
        serde_json::to_string(&stats.outcome).unwrap()
    );
    println!(
        "planted effective support: {:.0}",
        (n * (n - 1) / 2) as f64 / 12.0
    );
    println!(
        "threshold calibrated from the verdicts: {:.4}",
        service.state().calibrated_threshold()?
    );
    Ok(())
}
