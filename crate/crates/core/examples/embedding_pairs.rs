//! Closest pairs in an embedding batch, and a threshold from labelled
//! duplicates.
//!
//! Embeddings are stored in the compact binary format and listed by a
//! manifest, the same inputs the `pairs` and `census` subcommands take.
//!
//! Run with `cargo run --example embedding_pairs`.

use birthday_census::census::calibrate_threshold;
use birthday_census::ingest::write_binary;
use birthday_census::ingest::{Corpus, EmbeddingFormat, EmbeddingSource, Manifest};
use birthday_census::similarity::{top_k_pairs, ItemVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> birthday_census::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    let jitter = Normal::new(0.0f32, 0.02).unwrap();

    let mut rows: Vec<Vec<f32>> = (0..200)
        .map(|_| (0..128).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    for i in 0..5 {
        rows[199 - i] = rows[i]
            .iter()
            .map(|v| v + jitter.sample(&mut rng))
            .collect();
    }
    let items: Vec<ItemVector> = rows
        .into_iter()
        .enumerate()
        .map(|(i, v)| ItemVector::embedding(format!("e{i:03}"), v))
        .collect::<Result<_, _>>()?;

    let bin = dir.path().join("emb.bpc");
    write_binary(&bin, &items)?;
    let manifest = Manifest::embedding(
        EmbeddingSource {
            path: "emb.bpc".into(),
            format: EmbeddingFormat::Binary,
        },
        items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id().to_owned(), i)),
        "gaussian embeddings",
    );
    let manifest_path = dir.path().join("manifest.json");
    manifest.write(&manifest_path)?;

    let corpus = Corpus::load(&manifest_path)?;
    let pairs = top_k_pairs(&corpus.items, 8)?;
    println!("{:>4}  {:<5} {:<5} {:>8}", "rank", "a", "b", "distance");
    for p in &pairs {
        println!(
            "{:>4}  {:<5} {:<5} {:>8.3}",
            p.rank, p.id_a, p.id_b, p.distance
        );
    }

    // suppose a reviewer confirmed the first five as duplicates
    let threshold = calibrate_threshold(pairs.iter().take(5).map(|p| p.distance))?;
    println!("\nauto-mode threshold from confirmed duplicates: {threshold:.3}");
    Ok(())
}
