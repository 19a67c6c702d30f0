//! Runs the agents in the kitchen, living room, bathroom and bedroom
//! fixtures.

use sarp::experiment::{run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    for room in ["kitchen", "living_room", "bathroom", "bedroom"] {
        let mut config = ExperimentConfig::load(format!("{dir}/rooms_experiment.json"))?;
        config.environment = format!("{dir}/{room}.json").into();
        let outcome = run_experiment(config)?;
        println!("{room}\n{}", outcome.report);
    }
    Ok(())
}
