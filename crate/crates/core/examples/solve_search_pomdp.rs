//! Solves the hallway search model, saves the policy, reloads it and walks a
//! few belief updates by hand.

use sarp::pomdp::{solve, Action, Belief, DetectorStats, Observation, Policy, PomdpParams, SolverConfig, TargetSearchPomdp};
use sarp::simworld::Environment;

fn main() -> anyhow::Result<()> {
    let env = Environment::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/hallway.json"))?;
    let model = TargetSearchPomdp::new(
        &env.map,
        "banana",
        DetectorStats::new(0.8, 0.05),
        PomdpParams {
            move_success: 1.0,
            ..PomdpParams::default()
        },
    )?;
    let policy = solve(&model, &SolverConfig::default())?;
    let stats = policy.stats();
    println!(
        "{} belief points, {} iterations, converged {}",
        stats.belief_points, stats.iterations, stats.converged
    );

    let path = std::env::temp_dir().join("hallway_policy.json");
    policy.save(&path)?;
    let policy = Policy::load(&path, &model)?;
    println!("policy written to and reloaded from {}", path.display());

    let mut b = Belief::uniform(model.location_count());
    let mut robot = env.robot_start;
    for z in [Observation::NotDetected, Observation::NotDetected, Observation::Detected, Observation::Detected] {
        let action = policy.action(&b, robot);
        println!("b={:.3?} at l{robot}: value {:.2}, action {action}", b.probabilities(), policy.value(&b, robot));
        let Action::Go(next) = action else { break };
        robot = next;
        b = model.belief_update(&b, action, z, robot)?;
        println!("  observed {}", z.short());
    }
    println!("final action {}", policy.action(&b, robot));
    Ok(())
}
