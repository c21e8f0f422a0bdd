//! A full census against generators with and without mode collapse.
//!
//! Each synthetic "generator" is an explicit distribution. The census finds
//! the batch size where collisions reach 50% and reports `s^2` alongside
//! the rigorous bounds.
//!
//! Run with `cargo run --release --example mode_collapse_census`.

use birthday_census::census::{run_census, CensusConfig, SourceDescriptor, TrialMode};

fn main() -> birthday_census::Result<()> {
    let generators = [
        (
            "healthy, 1M modes",
            SourceDescriptor::Uniform { n: 1_000_000 },
        ),
        (
            "collapsed to 5k modes",
            SourceDescriptor::Uniform { n: 5_000 },
        ),
        (
            "half the mass on 500 modes",
            SourceDescriptor::HeadUniform {
                rho: 0.5,
                n_head: 500,
                n_tail: 1_000_000,
            },
        ),
    ];
    for (name, source) in generators {
        let config = CensusConfig {
            trials_per_probe: 4_000,
            seed: 3,
            ..CensusConfig::new(source, TrialMode::Auto { threshold: 0.0 })
        };
        let session = run_census(&config.load_source()?, &config)?;
        let report = session.support_report().expect("synthetic census finishes");
        let probes: Vec<_> = session.trajectory.iter().map(|p| p.batch_size).collect();
        println!("{name}");
        println!("  probes        {probes:?}");
        println!("  s*            {}", report.batch_size);
        println!("  s*^2          {}", report.heuristic_support);
        println!(
            "  beta*         {}",
            report
                .bounds
                .beta_star
                .map_or("undefined".into(), |b| format!("{b:.0}"))
        );
    }
    Ok(())
}
