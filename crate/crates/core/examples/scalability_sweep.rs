//! Adds distractor objects one at a time and compares SARP with the planner
//! that tracks every object in its state.
//!
//! Usage: cargo run --release --example scalability_sweep [trials]

use sarp::experiment::{run_scalability_sweep, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sweep.json"))?;
    if let Some(trials) = std::env::args().nth(1) {
        config.trials = trials.parse()?;
    }
    let outcome = run_scalability_sweep(config, &[0, 1, 2, 3, 4, 5, 6])?;
    println!("{}", outcome.report);
    for row in &outcome.report.rows {
        if let Some(joint) = &row.joint {
            println!(
                "k={}: success sarp {:.3} joint {:.3}",
                row.distractors, row.sarp.success_rate, joint.success_rate
            );
        }
    }
    Ok(())
}
