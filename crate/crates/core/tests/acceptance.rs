//! Acceptance checks. Runs as a plain binary so every criterion prints its
//! verdict regardless of test-output capture.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarp::agent::bias_belief;
use sarp::corpus::SceneGraphCorpus;
use sarp::experiment::{run_demo, run_experiment, run_scalability_sweep, ExperimentConfig};
use sarp::agent::AgentKind;
use sarp::inference::{exact_marginals, loopy_bp, BpConfig};
use sarp::pomdp::{Action, Belief, DetectorStats, Observation, PomdpParams, TargetSearchPomdp};
use sarp::simworld::{Environment, EnvironmentMap, PerceptionModel, WorldState};

use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn inference_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = BpConfig::default();
    let mut tree_err: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let net = random_forest(&mut rng, n);
        let ev = random_evidence(&mut rng, n, 0.25);
        let bp = loopy_bp(&net, &ev, &config).unwrap();
        let exact = exact_marginals(&net, &ev).unwrap();
        for (a, b) in bp.present.iter().zip(&exact.present) {
            tree_err = tree_err.max((a - b).abs());
        }
    }
    let (mut loopy_err, mut converged, mut within): (f64, usize, usize) = (0.0, 0, 0);
    let mut errors = Vec::new();
    for _ in 0..200 {
        let extra = rng.random_range(1..=5);
        let net = random_loopy(&mut rng, 8, extra);
        let ev = random_evidence(&mut rng, 8, 0.2);
        let bp = loopy_bp(&net, &ev, &config).unwrap();
        if !bp.converged {
            continue;
        }
        converged += 1;
        let exact = exact_marginals(&net, &ev).unwrap();
        let err = bp
            .present
            .iter()
            .zip(&exact.present)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        within += usize::from(err <= 5e-2);
        loopy_err = loopy_err.max(err);
        errors.push(err);
    }
    errors.sort_by(f64::total_cmp);
    let median = errors.get(errors.len() / 2).copied().unwrap_or(0.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        tree_err <= 1e-9 && loopy_err <= 5e-2 && converged > 0 && secs < 60.0,
        format!(
            "tree max err {tree_err:.2e}; loopy: {converged}/200 converged, {within} within 5e-2, \
             median err {median:.1e}, max err {loopy_err:.2e}; {secs:.2}s"
        ),
    )
}

fn calc_phi_scan() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tables, mut mismatches) = (0, 0);
    for _ in 0..100 {
        let images = random_corpus(&mut rng, 200);
        let corpus = SceneGraphCorpus::from_images(images.clone()).unwrap();
        for _ in 0..10 {
            let local = random_local_graph(&mut rng);
            let got = corpus.calc_phi_raw(&local);
            assert_eq!(got.len(), local.relations.len());
            for (i, table) in got.iter().enumerate() {
                let (s, p, o) = local.relation_labels(i).unwrap();
                tables += 1;
                if *table != brute_force_phi(&images, s, p, o) {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 30.0,
        format!("{tables} tables, {mismatches} mismatches, {secs:.2}s"),
    )
}

fn belief_machinery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut updates = 0;
    while updates < 10_000 {
        let n = rng.random_range(1..=7);
        let locations: Vec<[f64; 2]> = (0..n).map(|i| [2.0 * i as f64, 0.0]).collect();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i: usize| [i.checked_sub(1), (i + 1 < n).then_some(i + 1)].into_iter().flatten().collect())
            .collect();
        let map = EnvironmentMap::new("line", locations, adjacency).unwrap();
        let tp = rng.random_range(0.5..=1.0);
        let fp = rng.random_range(0.0..0.5);
        let model = TargetSearchPomdp::new(&map, "x", DetectorStats::new(tp, fp), PomdpParams::default()).unwrap();
        let mut b = Belief::from_weights((0..n).map(|_| rng.random::<f64>() + 1e-6).collect()).unwrap();
        let mut robot = rng.random_range(0..n);
        for _ in 0..20 {
            let to = *model
                .legal_actions(robot)
                .iter()
                .filter_map(|a| match a {
                    Action::Go(l) => Some(l),
                    Action::Terminate => None,
                })
                .collect::<Vec<_>>()[rng.random_range(0..model.legal_actions(robot).len() - 1)];
            robot = to;
            let z = if rng.random_bool(0.5) { Observation::Detected } else { Observation::NotDetected };
            let Ok(next) = model.belief_update(&b, Action::Go(to), z, robot) else {
                break;
            };
            worst = worst.max((next.probabilities().iter().sum::<f64>() - 1.0).abs());
            let bias: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-9).collect();
            let biased = bias_belief(&next, &bias).unwrap();
            worst = worst.max((biased.probabilities().iter().sum::<f64>() - 1.0).abs());
            b = biased;
            updates += 1;
        }
    }

    let env = Environment::load(fixture("hallway.json")).unwrap();
    let model = TargetSearchPomdp::new(
        &env.map,
        "banana",
        DetectorStats::new(0.8, 0.05),
        PomdpParams {
            move_success: 1.0,
            ..PomdpParams::default()
        },
    )
    .unwrap();
    let b = model
        .belief_update(&Belief::uniform(6), Action::Go(1), Observation::NotDetected, 1)
        .unwrap();
    let round = |x: f64| (x * 1e4).round() / 1e4;
    let hand = round(b[1]) == 0.0404 && [0, 2, 3, 4, 5].iter().all(|&l| round(b[l]) == 0.1919);
    check(
        worst <= 1e-9 && hand,
        format!(
            "{updates} update+bias pairs, max |sum-1| {worst:.1e}, hand example {:.4}/{:.4}",
            b[1], b[0]
        ),
    )
}

fn hallway_reproduction() -> Verdict {
    let start = Instant::now();
    let config = ExperimentConfig::load(fixture("hallway_experiment.json")).unwrap();
    let trials = config.trials;
    let outcome = run_experiment(ExperimentConfig { output: None, ..config }).unwrap();
    let report = &outcome.report;
    let sarp = report.get(AgentKind::Sarp).unwrap();
    let uniform = report.get(AgentKind::Uniform).unwrap();
    let predefined = report.get(AgentKind::Predefined).unwrap();
    let reduction = (uniform.mean_cost - sarp.mean_cost) / uniform.mean_cost;
    let success_ok = report.rows.iter().all(|r| sarp.success_rate >= r.success_rate - 0.02);
    let secs = start.elapsed().as_secs_f64();
    println!("{report}");
    check(
        trials == 500 && sarp.mean_cost < uniform.mean_cost && reduction >= 0.10 && success_ok
            && predefined.std_cost == 0.0 && secs < 600.0,
        format!(
            "sarp {:.1} vs uniform {:.1} ({:.1}% lower), sarp success {:.3}, predefined std {}, {secs:.1}s",
            sarp.mean_cost,
            uniform.mean_cost,
            100.0 * reduction,
            sarp.success_rate,
            predefined.std_cost
        ),
    )
}

fn distractor_sweep() -> Verdict {
    let start = Instant::now();
    let config = ExperimentConfig::load(fixture("sweep.json")).unwrap();
    let outcome = run_scalability_sweep(ExperimentConfig { output: None, ..config }, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
    let report = &outcome.report;
    println!("{report}");
    let spread = report.sarp_relative_spread();
    let joint: Vec<f64> = report.rows[..3].iter().map(|r| r.joint.as_ref().unwrap().mean_cost).collect();
    let solve: Vec<f64> = report.rows[..3].iter().map(|r| r.joint_solve_seconds.unwrap()).collect();
    let cost_up = joint.windows(2).all(|w| w[1] > w[0]);
    let solve_up = solve.windows(2).all(|w| w[1] > w[0]);
    let secs = start.elapsed().as_secs_f64();
    check(
        spread < 0.2 && cost_up && solve_up && secs < 900.0,
        format!(
            "sarp spread {spread:.3}; joint cost k=0..2 {joint:.1?} increasing: {cost_up}; \
             joint solve {solve:.3?}s increasing: {solve_up}; {secs:.1}s"
        ),
    )
}

fn demo_episode() -> Verdict {
    let start = Instant::now();
    let config = ExperimentConfig::load(fixture("demo.json")).unwrap();
    let demo = run_demo(config, 0).unwrap();
    println!("{}", demo.table);
    let ep = &demo.episode;
    let t = ep.target_location;
    let mut bias_ok = true;
    let mut shift_ok = true;
    let mut detections = 0;
    for s in ep.trace.iter().filter(|s| s.action != Action::Terminate) {
        let detected = s.observation.target_detected();
        bias_ok &= s.bias_applied == detected;
        if detected {
            detections += 1;
            shift_ok &= s.b_prime[t] > s.b[t];
        }
    }
    let reported = ep.terminated && ep.reported_location == Some(t);
    let secs = start.elapsed().as_secs_f64();
    check(
        bias_ok && shift_ok && detections > 0 && reported && secs < 5.0,
        format!(
            "{detections} detection step(s), bias only on detections: {bias_ok}, mass shifted to l{t}: {shift_ok}, \
             reported {:?}, {secs:.2}s",
            ep.reported_location
        ),
    )
}

fn perception_consistency() -> Verdict {
    let env = Environment::load(fixture("hallway.json")).unwrap();
    let map = &env.map;
    let hops = map.hop_distances();
    let calls = 10_000;
    let mut pass = true;
    let mut details = Vec::new();
    for (i, tp) in [0.6, 0.8, 1.0].into_iter().enumerate() {
        let detector = DetectorStats::new(tp, 0.1);
        let mut perception = PerceptionModel::default();
        perception.detectors.insert("banana".into(), detector);
        let model = TargetSearchPomdp::new(map, "banana", detector, PomdpParams::default()).unwrap();
        let mut at_target = vec![0.0; 6];
        at_target[2] = 1.0;
        // Robot on the target, then one hop away.
        for (robot, label) in [(2, "tp"), (3, "fp")] {
            let mut world = WorldState::sample(map, "banana", &at_target, &[], robot, 1.0, 70 + i as u64).unwrap();
            let hits = (0..calls)
                .filter(|&k| world.perceive(map, &perception, &hops, k).1.target_detected())
                .count();
            let p = model.observation_probability(robot, model.hidden_index(&[2]), 1);
            let freq = hits as f64 / calls as f64;
            let sigma = (p * (1.0 - p) / calls as f64).sqrt();
            let ok = (freq - p).abs() <= 3.0 * sigma;
            pass &= ok;
            details.push(format!("{label}@{tp}: {freq:.4} vs {p:.3}"));
        }
    }
    check(pass, details.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("inference oracle equivalence", inference_oracle),
        ("potential table scan", calc_phi_scan),
        ("belief normalization", belief_machinery),
        ("hallway cost reduction", hallway_reproduction),
        ("distractor sweep", distractor_sweep),
        ("demo episode", demo_episode),
        ("model/simulator consistency", perception_consistency),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        failed += usize::from(!v.pass);
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
