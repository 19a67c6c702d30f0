//! Runs the four agents over paired seeds in the hallway and prints the
//! aggregate table plus paired comparisons against SARP.
//!
//! Usage: cargo run --release --example hallway_experiment [trials]

use sarp::agent::AgentKind;
use sarp::experiment::{paired_t_test, run_experiment, ExperimentConfig, TrialRecord};

fn costs(records: &[TrialRecord], agent: AgentKind) -> Vec<f64> {
    records.iter().filter(|r| r.agent == agent).map(|r| r.action_cost).collect()
}

fn main() -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/hallway_experiment.json"))?;
    if let Some(trials) = std::env::args().nth(1) {
        config.trials = trials.parse()?;
    }
    let outcome = run_experiment(config)?;
    print!("{}", outcome.report);
    println!("policy solved in {:.3}s", outcome.solve_seconds);

    // Records are grouped by agent in trial order, so costs pair up by index.
    let sarp = costs(&outcome.records, AgentKind::Sarp);
    for agent in [AgentKind::Uniform, AgentKind::Predefined, AgentKind::Corpp] {
        let t = paired_t_test(&sarp, &costs(&outcome.records, agent));
        println!(
            "sarp - {agent}: mean difference {:+.2}, t {:.2}, p {:.4}",
            t.mean_difference, t.t, t.p_value
        );
    }
    Ok(())
}
