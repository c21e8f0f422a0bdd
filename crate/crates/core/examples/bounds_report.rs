//! Turning an observed collision rate into support-size statements.
//!
//! Run with `cargo run --example bounds_report`.

use birthday_census::bounds::{beta_star, theorem1_collision_lower_bound, BoundsReport};

fn main() -> birthday_census::Result<()> {
    // batches of 400 collide half the time
    let report = BoundsReport::compute(400, 0.5, 1.0, None)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    // a weaker assumption about the head mass shrinks what can be claimed
    for rho in [1.0, 0.9999, 0.999, 0.99] {
        let r = BoundsReport::compute(400, 0.5, rho, None)?;
        match r.support_bound {
            Some(n) => {
                println!("rho = {rho}: some set carrying that mass has at most {n:.0} elements")
            }
            None => println!("rho = {rho}: no bound (denominator not positive)"),
        }
    }

    println!();
    for gamma in [0.1, 0.3, 0.5, 0.7, 0.9] {
        println!(
            "gamma = {gamma} at m = 400 -> beta* = {:.0}",
            beta_star(400, gamma)?
        );
    }

    // the other direction: a head of 10k atoms holding 90% of the mass
    let lb = theorem1_collision_lower_bound(200, 0.9, 10_000.0)?;
    println!(
        "\ncollision probability at m = 200 is at least {:.4} (as stated {:.4})",
        lb.corrected, lb.as_stated
    );
    Ok(())
}
