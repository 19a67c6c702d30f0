//! Target-search POMDP with a fully observed robot location.
//!
//! The hidden state is the target location (or, for the joint baseline, the
//! joint locations of the target and up to three distractors). The robot
//! location is observed, so beliefs range over hidden states only and the
//! value function keeps a separate set of alpha-vectors per robot location.

use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::simworld::EnvironmentMap;

pub const DISCOUNT: f64 = 0.99;
pub const GO_COST: f64 = 10.0;
pub const SUCCESS_REWARD: f64 = 100.0;
pub const FAILURE_REWARD: f64 = -100.0;
/// Largest distractor count accepted by [`TargetSearchPomdp::joint`].
pub const MAX_JOINT_DISTRACTORS: usize = 3;
pub const POLICY_FORMAT_VERSION: u32 = 1;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PomdpError {
    #[error("environment has no locations")]
    EmptyEnvironment,
    #[error("environment is disconnected: location {0} is unreachable from location 0")]
    Disconnected(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} distractors requested; the joint model supports at most {MAX_JOINT_DISTRACTORS}")]
    TooManyDistractors(usize),
    #[error("action {action:?} is not legal at robot location {location}")]
    IllegalAction { action: Action, location: usize },
    #[error("observation {0:?} is not valid for this action")]
    InvalidObservation(Observation),
    #[error("observation has zero probability under the belief: model inconsistency")]
    ZeroNormalizer,
    #[error("belief must be non-negative and sum to 1, got sum {0}")]
    InvalidBelief(f64),
    #[error("policy artifact: {0}")]
    Artifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Go(usize),
    Terminate,
}

impl Action {
    /// Position in `go_0, ..., go_{n-1}, terminate`; used for tie-breaking.
    pub fn index(&self, location_count: usize) -> usize {
        match *self {
            Action::Go(i) => i,
            Action::Terminate => location_count,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Go(i) => write!(f, "go l{i}"),
            Action::Terminate => f.write_str("terminate"),
        }
    }
}

/// Observation after an action.
///
/// `Joint` carries one detection bit per tracked object, the target in bit
/// 0; for single-object models `Detected` and `NotDetected` are the same as
/// `Joint(1)` and `Joint(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    Detected,
    NotDetected,
    NotApplicable,
    Joint(u32),
}

impl Observation {
    pub fn id(&self) -> Option<usize> {
        match *self {
            Observation::Detected => Some(1),
            Observation::NotDetected => Some(0),
            Observation::Joint(mask) => Some(mask as usize),
            Observation::NotApplicable => None,
        }
    }

    pub fn target_detected(&self) -> bool {
        self.id().is_some_and(|id| id & 1 == 1)
    }

    pub fn short(&self) -> &'static str {
        match self {
            Observation::NotApplicable => "-",
            o if o.target_detected() => "Yes",
            _ => "No",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorStats {
    pub true_positive: f64,
    pub false_positive: f64,
}

impl Default for DetectorStats {
    fn default() -> Self {
        Self {
            true_positive: 0.8,
            false_positive: 0.05,
        }
    }
}

impl DetectorStats {
    pub fn new(true_positive: f64, false_positive: f64) -> Self {
        Self {
            true_positive,
            false_positive,
        }
    }

    pub fn validate(&self) -> Result<(), PomdpError> {
        for (name, p) in [("true_positive", self.true_positive), ("false_positive", self.false_positive)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PomdpError::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn detect_probability(&self, sensed: bool) -> f64 {
        if sensed {
            self.true_positive
        } else {
            self.false_positive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CostMode {
    /// Every navigation action costs `go_cost`.
    Fixed,
    /// Moving costs `per_meter` times the travelled distance; staying in
    /// place to re-observe costs `go_cost`.
    Distance { per_meter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateRule {
    /// Success iff the robot stands at the target's location.
    CoLocation,
    /// Success iff the reported belief argmax is the target's location.
    BeliefArgmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PomdpParams {
    pub go_cost: f64,
    pub cost_mode: CostMode,
    pub success_reward: f64,
    pub failure_reward: f64,
    pub discount: f64,
    /// Probability that a navigation action reaches its destination.
    pub move_success: f64,
    /// Locations within this many hops of the robot are sensed.
    pub sensing_radius: usize,
    pub terminate_rule: TerminateRule,
}

impl Default for PomdpParams {
    fn default() -> Self {
        Self {
            go_cost: GO_COST,
            cost_mode: CostMode::Fixed,
            success_reward: SUCCESS_REWARD,
            failure_reward: FAILURE_REWARD,
            discount: DISCOUNT,
            move_success: 0.95,
            sensing_radius: 0,
            terminate_rule: TerminateRule::CoLocation,
        }
    }
}

impl PomdpParams {
    fn validate(&self) -> Result<(), PomdpError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(PomdpError::InvalidParameter(format!("discount {} outside (0, 1)", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.move_success) {
            return Err(PomdpError::InvalidParameter(format!(
                "move_success {} outside [0, 1]",
                self.move_success
            )));
        }
        if !(self.go_cost >= 0.0) {
            return Err(PomdpError::InvalidParameter("go_cost must be >= 0".into()));
        }
        Ok(())
    }
}

/// Probability vector over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Self(p)
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, PomdpError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PomdpError::InvalidBelief(f64::NAN));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(PomdpError::ZeroNormalizer);
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Wraps an already-normalized vector.
    pub fn new(probabilities: Vec<f64>) -> Result<Self, PomdpError> {
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (total - 1.0).abs() > NORMALIZATION_TOLERANCE
        {
            return Err(PomdpError::InvalidBelief(total));
        }
        Ok(Self(probabilities))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lowest index of the largest entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(b, v)| b * v).sum()
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The target-search model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSearchPomdp {
    query_label: String,
    location_count: usize,
    /// Legal navigation destinations per robot location, sorted, including
    /// the location itself.
    destinations: Vec<Vec<usize>>,
    /// `go_reward[r][i]`, meaningful for legal `i` only.
    go_reward: Vec<Vec<f64>>,
    hops: Vec<Vec<usize>>,
    params: PomdpParams,
    /// Labels of tracked objects; index 0 is the target.
    tracked: Vec<String>,
    detectors: Vec<DetectorStats>,
    hidden_count: usize,
    observation_count: usize,
    /// `O(z | h, r')` at `(r' * hidden_count + h) * observation_count + z`.
    observation_table: Vec<f64>,
}

impl TargetSearchPomdp {
    /// Model whose hidden state is the target location alone.
    pub fn new(
        env: &EnvironmentMap,
        query_label: &str,
        detector: DetectorStats,
        params: PomdpParams,
    ) -> Result<Self, PomdpError> {
        Self::joint(env, query_label, detector, &[], params)
    }

    /// Model tracking the target and `distractors` jointly.
    ///
    /// The world simulates false positives for the query label only, so
    /// distractor detectors use their true-positive rate and a zero
    /// false-positive rate.
    pub fn joint(
        env: &EnvironmentMap,
        query_label: &str,
        detector: DetectorStats,
        distractors: &[(String, DetectorStats)],
        params: PomdpParams,
    ) -> Result<Self, PomdpError> {
        if distractors.len() > MAX_JOINT_DISTRACTORS {
            return Err(PomdpError::TooManyDistractors(distractors.len()));
        }
        params.validate()?;
        detector.validate()?;
        let n = env.location_count();
        if n == 0 {
            return Err(PomdpError::EmptyEnvironment);
        }
        let hops = env.hop_distances();
        if let Some(unreached) = hops[0].iter().position(|&h| h == usize::MAX) {
            return Err(PomdpError::Disconnected(unreached));
        }

        let destinations: Vec<Vec<usize>> = (0..n)
            .map(|r| {
                let mut d: Vec<usize> = env.neighbors(r).to_vec();
                d.push(r);
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();
        let go_reward = (0..n)
            .map(|r| {
                (0..n)
                    .map(|i| match params.cost_mode {
                        CostMode::Fixed => -params.go_cost,
                        CostMode::Distance { .. } if i == r => -params.go_cost,
                        CostMode::Distance { per_meter } => -per_meter * env.distance(r, i),
                    })
                    .collect()
            })
            .collect();

        let mut tracked = vec![query_label.to_string()];
        let mut detectors = vec![detector];
        for (label, stats) in distractors {
            stats.validate()?;
            tracked.push(label.clone());
            detectors.push(DetectorStats::new(stats.true_positive, 0.0));
        }
        let objects = tracked.len();
        let hidden_count = n.pow(objects as u32);
        let observation_count = 1usize << objects;

        let mut observation_table = vec![0.0; n * hidden_count * observation_count];
        for r in 0..n {
            for h in 0..hidden_count {
                let base = (r * hidden_count + h) * observation_count;
                for z in 0..observation_count {
                    let mut p = 1.0;
                    let mut rest = h;
                    for (j, det) in detectors.iter().enumerate() {
                        let loc = rest % n;
                        rest /= n;
                        let pd = det.detect_probability(hops[r][loc] <= params.sensing_radius);
                        p *= if (z >> j) & 1 == 1 { pd } else { 1.0 - pd };
                    }
                    observation_table[base + z] = p;
                }
            }
        }

        Ok(Self {
            query_label: query_label.to_string(),
            location_count: n,
            destinations,
            go_reward,
            hops,
            params,
            tracked,
            detectors,
            hidden_count,
            observation_count,
            observation_table,
        })
    }

    pub fn query_label(&self) -> &str {
        &self.query_label
    }

    pub fn location_count(&self) -> usize {
        self.location_count
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_count
    }

    pub fn observation_count(&self) -> usize {
        self.observation_count
    }

    pub fn tracked_objects(&self) -> &[String] {
        &self.tracked
    }

    pub fn params(&self) -> &PomdpParams {
        &self.params
    }

    pub fn discount(&self) -> f64 {
        self.params.discount
    }

    pub fn target_detector(&self) -> DetectorStats {
        self.detectors[0]
    }

    /// Target location encoded in hidden state `h`.
    pub fn target_of(&self, hidden: usize) -> usize {
        hidden % self.location_count
    }

    /// Location of tracked object `object` in hidden state `h`.
    pub fn object_location(&self, hidden: usize, object: usize) -> usize {
        (hidden / self.location_count.pow(object as u32)) % self.location_count
    }

    /// Hidden state index from per-object locations, target first.
    pub fn hidden_index(&self, locations: &[usize]) -> usize {
        locations
            .iter()
            .rev()
            .fold(0, |acc, &l| acc * self.location_count + l)
    }

    pub fn sensed(&self, robot_location: usize, location: usize) -> bool {
        self.hops[robot_location][location] <= self.params.sensing_radius
    }

    pub fn legal_actions(&self, robot_location: usize) -> Vec<Action> {
        let mut actions: Vec<Action> = self.destinations[robot_location]
            .iter()
            .map(|&i| Action::Go(i))
            .collect();
        actions.push(Action::Terminate);
        actions
    }

    pub fn is_legal(&self, robot_location: usize, action: Action) -> bool {
        match action {
            Action::Terminate => robot_location < self.location_count,
            Action::Go(i) => self
                .destinations
                .get(robot_location)
                .is_some_and(|d| d.binary_search(&i).is_ok()),
        }
    }

    /// `R(s, go_i)` from robot location `r`.
    pub fn go_reward(&self, robot_location: usize, destination: usize) -> f64 {
        self.go_reward[robot_location][destination]
    }

    /// Reward for terminating at `robot_location` while reporting `report`.
    pub fn terminate_reward(&self, robot_location: usize, report: usize, target: usize) -> f64 {
        let claimed = match self.params.terminate_rule {
            TerminateRule::CoLocation => robot_location,
            TerminateRule::BeliefArgmax => report,
        };
        if claimed == target {
            self.params.success_reward
        } else {
            self.params.failure_reward
        }
    }

    /// Next robot location distribution after `go_i` from `r`.
    pub fn move_outcomes(&self, robot_location: usize, destination: usize) -> Vec<(usize, f64)> {
        if destination == robot_location || self.params.move_success >= 1.0 {
            vec![(destination, 1.0)]
        } else if self.params.move_success <= 0.0 {
            vec![(robot_location, 1.0)]
        } else {
            vec![
                (destination, self.params.move_success),
                (robot_location, 1.0 - self.params.move_success),
            ]
        }
    }

    /// `O(z | h, r')`.
    pub fn observation_probability(&self, robot_location: usize, hidden: usize, z: usize) -> f64 {
        self.observation_table[(robot_location * self.hidden_count + hidden) * self.observation_count + z]
    }

    fn observation_row(&self, robot_location: usize, hidden: usize) -> &[f64] {
        let base = (robot_location * self.hidden_count + hidden) * self.observation_count;
        &self.observation_table[base..base + self.observation_count]
    }

    /// Bayes update of `belief` after `action`, arriving at `robot_location`
    /// and observing `observation`.
    ///
    /// The hidden objects are static, so the transition over hidden states is
    /// the identity and the update reduces to reweighting by `O`.
    pub fn belief_update(
        &self,
        belief: &Belief,
        action: Action,
        observation: Observation,
        robot_location: usize,
    ) -> Result<Belief, PomdpError> {
        if belief.len() != self.hidden_count {
            return Err(PomdpError::InvalidBelief(belief.0.iter().sum()));
        }
        match (action, observation.id()) {
            (Action::Terminate, None) => return Ok(belief.clone()),
            (Action::Terminate, Some(_)) | (Action::Go(_), None) => {
                return Err(PomdpError::InvalidObservation(observation))
            }
            (Action::Go(_), Some(z)) if z >= self.observation_count => {
                return Err(PomdpError::InvalidObservation(observation))
            }
            _ => {}
        }
        let z = observation.id().unwrap_or_default();
        let weights: Vec<f64> = (0..self.hidden_count)
            .map(|h| self.observation_probability(robot_location, h, z) * belief[h])
            .collect();
        Belief::from_weights(weights)
    }

    /// Marginal belief over the target's location.
    pub fn target_marginal(&self, belief: &Belief) -> Vec<f64> {
        let mut out = vec![0.0; self.location_count];
        for (h, p) in belief.probabilities().iter().enumerate() {
            out[self.target_of(h)] += p;
        }
        out
    }

    /// Prior over hidden states from a prior over target locations, with
    /// distractor locations uniform.
    pub fn lift_target_prior(&self, target_prior: &[f64]) -> Result<Belief, PomdpError> {
        let rest = (self.hidden_count / self.location_count) as f64;
        Belief::from_weights(
            (0..self.hidden_count)
                .map(|h| target_prior[self.target_of(h)] / rest)
                .collect(),
        )
    }

    /// SHA-256 over the canonical JSON form of the model.
    pub fn model_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn terminate_vectors(&self, robot_location: usize) -> Vec<Vec<f64>> {
        let reports: Vec<usize> = match self.params.terminate_rule {
            TerminateRule::CoLocation => vec![robot_location],
            TerminateRule::BeliefArgmax => (0..self.location_count).collect(),
        };
        reports
            .into_iter()
            .map(|report| {
                (0..self.hidden_count)
                    .map(|h| self.terminate_reward(robot_location, report, self.target_of(h)))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Total belief points, spread over robot locations.
    pub belief_points: usize,
    pub max_iterations: usize,
    /// Stop once no belief point's value improves by more than this.
    pub threshold: f64,
    pub seed: u64,
    /// Maximum length of each sampling rollout.
    pub rollout_depth: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            belief_points: 200,
            max_iterations: 60,
            threshold: 1e-3,
            seed: 0,
            rollout_depth: 15,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), PomdpError> {
        if self.belief_points == 0 || self.max_iterations == 0 || self.rollout_depth == 0 {
            return Err(PomdpError::InvalidParameter("solver counts must be positive".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(PomdpError::InvalidParameter("solver threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub action: Action,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub belief_points: usize,
    /// Sum of point values after each backup sweep.
    pub value_history: Vec<f64>,
}

/// Alpha-vectors per robot location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    location_count: usize,
    alpha: Vec<Vec<AlphaVector>>,
    stats: SolveStats,
    model_hash: String,
}

#[derive(Serialize, Deserialize)]
struct PolicyArtifact {
    format_version: u32,
    model_hash: String,
    policy: Policy,
}

impl Policy {
    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    pub fn alpha_vectors(&self, robot_location: usize) -> &[AlphaVector] {
        &self.alpha[robot_location]
    }

    fn best(&self, belief: &Belief, robot_location: usize) -> (f64, Action) {
        let n = self.location_count;
        let mut best: Option<(f64, Action)> = None;
        for alpha in &self.alpha[robot_location] {
            let v = belief.dot(&alpha.values);
            best = match best {
                Some((bv, ba))
                    if bv > v + 1e-9
                        || ((bv - v).abs() <= 1e-9 && ba.index(n) <= alpha.action.index(n)) =>
                {
                    Some((bv, ba))
                }
                _ => Some((v, alpha.action)),
            };
        }
        best.expect("every robot location has at least one alpha-vector")
    }

    /// Greedy action; ties go to the lower action index.
    pub fn action(&self, belief: &Belief, robot_location: usize) -> Action {
        self.best(belief, robot_location).1
    }

    pub fn value(&self, belief: &Belief, robot_location: usize) -> f64 {
        self.best(belief, robot_location).0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PomdpError> {
        let artifact = PolicyArtifact {
            format_version: POLICY_FORMAT_VERSION,
            model_hash: self.model_hash.clone(),
            policy: self.clone(),
        };
        let json = serde_json::to_string(&artifact).map_err(|e| PomdpError::Artifact(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Loads a saved policy, refusing artifacts built for a different model.
    pub fn load(path: impl AsRef<Path>, model: &TargetSearchPomdp) -> Result<Self, PomdpError> {
        let text = fs::read_to_string(path)?;
        let artifact: PolicyArtifact =
            serde_json::from_str(&text).map_err(|e| PomdpError::Artifact(e.to_string()))?;
        if artifact.format_version != POLICY_FORMAT_VERSION {
            return Err(PomdpError::Artifact(format!(
                "unsupported format version {}",
                artifact.format_version
            )));
        }
        let expected = model.model_hash();
        if artifact.model_hash != expected || artifact.policy.model_hash != expected {
            return Err(PomdpError::Artifact("model hash mismatch".into()));
        }
        Ok(artifact.policy)
    }
}

/// Point-based value iteration.
///
/// Belief points are gathered per robot location by random-action rollouts
/// started from the uniform belief and from random priors. Alpha-vectors
/// start from the terminate-now values, a lower bound, and every backup keeps
/// a point's previous vector whenever the new one is not better, so point
/// values never decrease.
pub fn solve(model: &TargetSearchPomdp, config: &SolverConfig) -> Result<Policy, PomdpError> {
    config.validate()?;
    let n = model.location_count;
    let hc = model.hidden_count;
    let nz = model.observation_count;
    let gamma = model.params.discount;
    let points = sample_belief_points(model, config);

    let terminate: Vec<Vec<AlphaVector>> = (0..n)
        .map(|r| {
            model
                .terminate_vectors(r)
                .into_iter()
                .map(|values| AlphaVector {
                    action: Action::Terminate,
                    values,
                })
                .collect()
        })
        .collect();
    let mut alpha = terminate.clone();
    let mut point_values: Vec<Vec<f64>> = points
        .iter()
        .enumerate()
        .map(|(r, pts)| pts.iter().map(|b| best_value(&alpha[r], b).0).collect())
        .collect();

    let mut stats = SolveStats {
        belief_points: points.iter().map(Vec::len).sum(),
        ..SolveStats::default()
    };
    for _ in 0..config.max_iterations {
        // projected[r'][z][k](h) = O(z | h, r') * alpha[r'][k](h)
        let projected: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
            .map(|r2| {
                (0..nz)
                    .map(|z| {
                        alpha[r2]
                            .iter()
                            .map(|a| {
                                (0..hc)
                                    .map(|h| model.observation_row(r2, h)[z] * a.values[h])
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let mut next_alpha = terminate.clone();
        let mut improvement: f64 = 0.0;
        for r in 0..n {
            for (p, b) in points[r].iter().enumerate() {
                let mut best: Option<(f64, AlphaVector)> = None;
                for &dest in &model.destinations[r] {
                    let mut values = vec![model.go_reward(r, dest); hc];
                    for (r2, pm) in model.move_outcomes(r, dest) {
                        for z in 0..nz {
                            let candidates = &projected[r2][z];
                            let chosen = argmax_dot(candidates, b);
                            for (v, g) in values.iter_mut().zip(&candidates[chosen]) {
                                *v += gamma * pm * g;
                            }
                        }
                    }
                    let value: f64 = b.iter().zip(&values).map(|(x, y)| x * y).sum();
                    if best.as_ref().is_none_or(|(bv, _)| value > *bv + 1e-12) {
                        best = Some((
                            value,
                            AlphaVector {
                                action: Action::Go(dest),
                                values,
                            },
                        ));
                    }
                }
                let (term_value, term_index) = best_value(&terminate[r], b);
                let old = point_values[r][p];
                let candidate = match best {
                    Some((v, a)) if v > term_value + 1e-12 => (v, a),
                    _ => (term_value, terminate[r][term_index].clone()),
                };
                let (value, vector) = if candidate.0 + 1e-12 >= old {
                    candidate
                } else {
                    let (v, k) = best_value(&alpha[r], b);
                    (v, alpha[r][k].clone())
                };
                improvement = improvement.max(value - old);
                point_values[r][p] = value;
                if !next_alpha[r].contains(&vector) {
                    next_alpha[r].push(vector);
                }
            }
        }
        alpha = next_alpha;
        stats.iterations += 1;
        stats.value_history.push(point_values.iter().flatten().sum());
        if improvement < config.threshold {
            stats.converged = true;
            break;
        }
    }
    if !stats.converged {
        warn!(
            "value iteration stopped after {} sweeps without reaching threshold {}",
            stats.iterations, config.threshold
        );
    }
    Ok(Policy {
        location_count: n,
        alpha,
        stats,
        model_hash: model.model_hash(),
    })
}

fn argmax_dot(vectors: &[Vec<f64>], b: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, v) in vectors.iter().enumerate() {
        let d: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
        if d > best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn best_value(vectors: &[AlphaVector], b: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, a) in vectors.iter().enumerate() {
        let d: f64 = b.iter().zip(&a.values).map(|(x, y)| x * y).sum();
        if d > best.0 {
            best = (d, k);
        }
    }
    best
}

fn sample_belief_points(model: &TargetSearchPomdp, config: &SolverConfig) -> Vec<Vec<Vec<f64>>> {
    let n = model.location_count;
    let hc = model.hidden_count;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut total = 0;
    let push = |points: &mut Vec<Vec<Vec<f64>>>, total: &mut usize, r: usize, b: &[f64]| {
        if *total >= config.belief_points {
            return;
        }
        let duplicate = points[r]
            .iter()
            .any(|p| p.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9));
        if !duplicate {
            points[r].push(b.to_vec());
            *total += 1;
        }
    };
    let uniform = Belief::uniform(hc);
    for r in 0..n {
        push(&mut points, &mut total, r, uniform.probabilities());
    }

    let max_rollouts = config.belief_points * 20;
    for rollout in 0..max_rollouts {
        if total >= config.belief_points {
            break;
        }
        let mut r = rng.random_range(0..n);
        let mut belief = if rollout % 2 == 0 {
            uniform.clone()
        } else {
            let w: Vec<f64> = (0..model.location_count)
                .map(|_| Exp1.sample(&mut rng))
                .collect();
            match model.lift_target_prior(&w) {
                Ok(b) => b,
                Err(_) => continue,
            }
        };
        push(&mut points, &mut total, r, belief.probabilities());
        let hidden = sample_index(&mut rng, belief.probabilities());
        for _ in 0..config.rollout_depth {
            let dests = &model.destinations[r];
            let dest = dests[rng.random_range(0..dests.len())];
            let outcomes = model.move_outcomes(r, dest);
            let weights: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
            let r2 = outcomes[sample_index(&mut rng, &weights)].0;
            let z = sample_index(&mut rng, model.observation_row(r2, hidden));
            let Ok(next) = model.belief_update(&belief, Action::Go(dest), Observation::Joint(z as u32), r2) else {
                break;
            };
            belief = next;
            r = r2;
            push(&mut points, &mut total, r, belief.probabilities());
        }
    }
    points
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
