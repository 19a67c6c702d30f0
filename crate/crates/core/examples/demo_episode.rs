//! One seeded SARP episode in the demo hallway, printed step by step.
//!
//! Usage: cargo run --example demo_episode [seed]

use sarp::experiment::{run_demo, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo.json"))?;
    let demo = run_demo(config, seed)?;
    println!("{}", demo.table);
    for step in demo.episode.trace.iter().filter(|s| s.bias_applied) {
        if let Some(bias) = &step.bias {
            println!("step {} bias {:.3?}", step.step, bias);
        }
    }
    Ok(())
}
