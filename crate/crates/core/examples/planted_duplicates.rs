//! Near-duplicate detection on an image pool with known duplicates.
//!
//! Writes 3000 random 16x16 PGM images, 150 of which are lightly perturbed
//! copies of others, then runs an automatic census with a distance
//! threshold and compares against the planted structure.
//!
//! Run with `cargo run --release --example planted_duplicates`.

use birthday_census::census::{run_census, CensusConfig, SourceDescriptor, TrialMode};
use birthday_census::ingest::{Manifest, PnmImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> birthday_census::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let (n, side, copies) = (3000usize, 16usize, 150usize);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut images: Vec<Vec<u16>> = (0..n)
        .map(|_| {
            (0..side * side)
                .map(|_| rng.random_range(0..=255))
                .collect()
        })
        .collect();
    for i in 0..copies {
        let mut copy = images[i].clone();
        for _ in 0..5 {
            let px = rng.random_range(0..copy.len());
            copy[px] = copy[px].saturating_sub(2);
        }
        images[n - 1 - i] = copy;
    }
    let mut entries = Vec::new();
    for (i, samples) in images.into_iter().enumerate() {
        let file = format!("sample{i:04}.pgm");
        PnmImage::new(side, side, 1, 255, samples)?.write(dir.path().join(&file))?;
        entries.push((format!("s{i:04}"), file.into()));
    }
    let manifest = dir.path().join("manifest.json");
    Manifest::pixel(entries, "noise with planted copies").write(&manifest)?;

    let config = CensusConfig {
        trials_per_probe: 5_000,
        ..CensusConfig::new(
            SourceDescriptor::Manifest { path: manifest },
            TrialMode::Auto { threshold: 0.5 },
        )
    };
    let session = run_census(&config.load_source()?, &config)?;
    let pairs = (n * (n - 1) / 2) as f64;
    println!(
        "planted: {copies} duplicate pairs, effective support {:.0}",
        pairs / copies as f64
    );
    println!(
        "census:  {}",
        serde_json::to_string(&session.outcome).unwrap()
    );
    for w in &session.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
