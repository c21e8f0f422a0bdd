//! Are the colliding samples copies of training data?
//!
//! A fake generator emits some training images with a little noise and
//! some fresh ones. For each sample the nearest training image and its
//! distance tell the two apart.
//!
//! Run with `cargo run --example memorization_check`.

use birthday_census::similarity::{nearest_training_neighbor, ItemVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> birthday_census::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dim = 28 * 28;
    let training: Vec<ItemVector> = (0..500)
        .map(|i| {
            ItemVector::pixel(
                format!("train{i:03}"),
                (0..dim).map(|_| rng.random()).collect(),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut samples = Vec::new();
    for i in 0..8 {
        let values: Vec<f32> = if i % 2 == 0 {
            let src = &training[rng.random_range(0..training.len())];
            src.values()
                .iter()
                .map(|v| (v + rng.random_range(-0.01..0.01)).clamp(0.0, 1.0))
                .collect()
        } else {
            (0..dim).map(|_| rng.random()).collect()
        };
        samples.push(ItemVector::pixel(format!("gen{i}"), values)?);
    }

    println!("{:<6} {:<10} {:>9}", "sample", "nearest", "distance");
    for s in &samples {
        let nn = nearest_training_neighbor(s, &training)?;
        let verdict = if nn.distance < 1.0 { "memorized" } else { "" };
        println!("{:<6} {:<10} {:>9.3} {verdict}", s.id(), nn.id, nn.distance);
    }
    Ok(())
}
