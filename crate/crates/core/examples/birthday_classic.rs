//! The classic birthday question answered three ways: exact, simulated,
//! and for a distribution whose mass is lopsided.
//!
//! Run with `cargo run --example birthday_classic`.

use birthday_census::dist::{
    exact_collision_probability, monte_carlo_collision, DiscreteDistribution,
};

fn main() -> birthday_census::Result<()> {
    let days = DiscreteDistribution::uniform(366)?;
    for m in [10, 22, 23, 40, 60] {
        let exact = exact_collision_probability(&days, m)?;
        let est = monte_carlo_collision(&days, m, 20_000, 1)?;
        println!(
            "{m:>3} people: exact {exact:.6}, simulated {:.4} [{:.4}, {:.4}]",
            est.point, est.ci_low, est.ci_high
        );
    }

    // 80% of the mass on 20 outcomes, the rest spread over 100k
    let skewed = DiscreteDistribution::mass_plus_uniform(0.8, 20, 100_000)?;
    println!(
        "\nhead-heavy distribution, {} atoms:",
        skewed.support_size()
    );
    let crossing = (2..)
        .find(|&m| exact_collision_probability(&skewed, m).unwrap() >= 0.5)
        .unwrap();
    println!("  collisions become likely at m = {crossing}");
    println!(
        "  so s^2 = {} although the support is {}",
        crossing * crossing,
        skewed.support_size()
    );
    println!("  beta = 1/sum p^2 = {:.1}", skewed.beta());
    Ok(())
}
