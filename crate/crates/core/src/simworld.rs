//! Seeded discrete world: ground-truth placements, action execution and
//! simulated perception.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pomdp::{Action, DetectorStats, Observation, TargetSearchPomdp};
use crate::scenegraph::{InstanceId, LocalSceneGraph, ObjectInstance, RelationshipEdge};

const DISTRIBUTION_TOLERANCE: f64 = 1e-6;
/// Distance of non-target objects from their location's coordinate.
const OBJECT_RING_RADIUS: f64 = 0.3;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("placement distribution sums to {0}, expected 1")]
    Unnormalized(f64),
    #[error("action {action} is not legal at location {location}")]
    IllegalAction { action: Action, location: usize },
    #[error("episode already terminated")]
    Terminated,
    #[error("invalid perception model: {0}")]
    InvalidPerception(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Discrete locations with 2-D coordinates and symmetric adjacency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentMap {
    name: String,
    locations: Vec<[f64; 2]>,
    adjacency: Vec<Vec<usize>>,
}

impl EnvironmentMap {
    /// Checks indices, symmetry and positive edge lengths. Connectivity is
    /// checked by [`EnvironmentMap::validate_connected`].
    pub fn new(
        name: &str,
        locations: Vec<[f64; 2]>,
        adjacency: Vec<Vec<usize>>,
    ) -> Result<Self, WorldError> {
        let n = locations.len();
        if adjacency.len() != n {
            return Err(WorldError::InvalidMap(format!(
                "{} adjacency lists for {n} locations",
                adjacency.len()
            )));
        }
        let mut adjacency = adjacency;
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &j in list.iter() {
                if j >= n {
                    return Err(WorldError::InvalidMap(format!("location {i} lists unknown neighbor {j}")));
                }
                if j == i {
                    return Err(WorldError::InvalidMap(format!("location {i} lists itself as a neighbor")));
                }
            }
        }
        for i in 0..n {
            for &j in &adjacency[i] {
                if adjacency[j].binary_search(&i).is_err() {
                    return Err(WorldError::InvalidMap(format!("edge {i}-{j} is not symmetric")));
                }
                let [x0, y0] = locations[i];
                let [x1, y1] = locations[j];
                if ((x1 - x0).hypot(y1 - y0)).partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                    return Err(WorldError::InvalidMap(format!("edge {i}-{j} has zero length")));
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            locations,
            adjacency,
        })
    }

    pub fn validate_connected(&self) -> Result<(), WorldError> {
        if self.locations.is_empty() {
            return Err(WorldError::InvalidMap("no locations".into()));
        }
        match self.hop_distances()[0].iter().position(|&h| h == usize::MAX) {
            Some(i) => Err(WorldError::InvalidMap(format!("location {i} is unreachable"))),
            None => Ok(()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn location_count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    pub fn neighbors(&self, location: usize) -> &[usize] {
        &self.adjacency[location]
    }

    /// Euclidean distance between two locations, in meters.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let [x0, y0] = self.locations[a];
        let [x1, y1] = self.locations[b];
        (x1 - x0).hypot(y1 - y0)
    }

    /// All-pairs hop counts; `usize::MAX` marks unreachable pairs.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        (0..self.location_count()).map(|s| self.bfs(s).0).collect()
    }

    fn bfs(&self, source: usize) -> (Vec<usize>, Vec<usize>) {
        let n = self.location_count();
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        (dist, parent)
    }

    /// Next location on a fewest-hop path; ties go to the lower index.
    pub fn next_hop(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            return Some(to);
        }
        let (dist, _) = self.bfs(to);
        self.adjacency[from]
            .iter()
            .copied()
            .filter(|&v| dist[v] != usize::MAX)
            .min_by_key(|&v| (dist[v], v))
    }

    pub fn nearest_location(&self, position: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, &[x, y]) in self.locations.iter().enumerate() {
            let d = (x - position[0]).hypot(y - position[1]);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Where an environment object is placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectLocation {
    Fixed(usize),
    Relative(RelativeLocation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeLocation {
    /// Co-located with the target.
    Target,
    /// Uniformly random location, drawn per world.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub label: String,
    pub location: ObjectLocation,
    /// Chance the object is present in a sampled world.
    #[serde(default = "one")]
    pub probability: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPlacement {
    pub label: String,
    pub distribution: Vec<f64>,
}

#[derive(Deserialize)]
struct EnvironmentFile {
    name: String,
    locations: Vec<[f64; 2]>,
    adjacency: Vec<Vec<usize>>,
    #[serde(default)]
    objects: Vec<ObjectSpec>,
    target_placement: TargetPlacement,
    #[serde(default)]
    robot_start: usize,
}

/// A map plus its object layout and target placement distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub map: EnvironmentMap,
    pub objects: Vec<ObjectSpec>,
    pub target_placement: TargetPlacement,
    pub robot_start: usize,
}

impl Environment {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: EnvironmentFile = serde_json::from_str(text)?;
        let map = EnvironmentMap::new(&file.name, file.locations, file.adjacency)?;
        map.validate_connected()?;
        let env = Self {
            map,
            objects: file.objects,
            target_placement: file.target_placement,
            robot_start: file.robot_start,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), WorldError> {
        let n = self.map.location_count();
        if self.robot_start >= n {
            return Err(WorldError::InvalidEnvironment(format!("robot_start {} out of range", self.robot_start)));
        }
        if self.target_placement.distribution.len() != n {
            return Err(WorldError::InvalidEnvironment(format!(
                "placement distribution has {} entries for {n} locations",
                self.target_placement.distribution.len()
            )));
        }
        check_distribution(&self.target_placement.distribution)?;
        for obj in &self.objects {
            if let ObjectLocation::Fixed(l) = obj.location {
                if l >= n {
                    return Err(WorldError::InvalidEnvironment(format!("{} placed at unknown location {l}", obj.label)));
                }
            }
            if !(0.0..=1.0).contains(&obj.probability) {
                return Err(WorldError::InvalidEnvironment(format!("{} has probability {}", obj.label, obj.probability)));
            }
            if obj.label == self.target_placement.label {
                return Err(WorldError::InvalidEnvironment(format!(
                    "object label {} duplicates the target label",
                    obj.label
                )));
            }
        }
        Ok(())
    }

    pub fn query_label(&self) -> &str {
        &self.target_placement.label
    }

    /// Objects pinned to a location, as `(label, location)`.
    pub fn static_objects(&self) -> impl Iterator<Item = (&str, usize)> {
        self.objects.iter().filter_map(|o| match o.location {
            ObjectLocation::Fixed(l) => Some((o.label.as_str(), l)),
            ObjectLocation::Relative(_) => None,
        })
    }

    /// Copy with the target label and distribution replaced.
    pub fn with_target(&self, label: &str, distribution: Option<Vec<f64>>) -> Result<Self, WorldError> {
        let mut env = self.clone();
        env.target_placement.label = label.to_string();
        if let Some(d) = distribution {
            env.target_placement.distribution = d;
        }
        env.validate()?;
        Ok(env)
    }
}

fn check_distribution(distribution: &[f64]) -> Result<(), WorldError> {
    let total: f64 = distribution.iter().sum();
    if distribution.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(WorldError::Unnormalized(total));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacedObject {
    pub label: String,
    pub location: usize,
    pub position: [f64; 2],
}

/// Emission entry for one label pair: its predicate, direction and,
/// optionally, its own emission probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRule {
    pub subject: String,
    pub object: String,
    pub predicate: String,
    #[serde(default)]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionModel {
    pub default_detector: DetectorStats,
    pub detectors: BTreeMap<String, DetectorStats>,
    /// Locations within this many hops of the robot are visible.
    pub sensing_radius: usize,
    /// Chance that two co-located detected objects without a rule are
    /// reported as related.
    pub relation_probability: f64,
    /// Predicates drawn uniformly for pairs without a rule.
    pub predicates: Vec<String>,
    pub predicate_rules: Vec<PredicateRule>,
    /// Standard deviation of reported positions, in meters.
    pub position_noise: f64,
}

impl Default for PerceptionModel {
    fn default() -> Self {
        Self {
            default_detector: DetectorStats::default(),
            detectors: BTreeMap::new(),
            sensing_radius: 0,
            relation_probability: 0.9,
            predicates: ["on", "in", "belongs"].map(String::from).to_vec(),
            predicate_rules: Vec::new(),
            position_noise: 0.1,
        }
    }
}

impl PerceptionModel {
    pub fn detector(&self, label: &str) -> DetectorStats {
        self.detectors.get(label).copied().unwrap_or(self.default_detector)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        for (label, d) in std::iter::once(("default", &self.default_detector)).chain(self.detectors.iter().map(|(k, v)| (k.as_str(), v))) {
            d.validate().map_err(|e| WorldError::InvalidPerception(format!("{label}: {e}")))?;
            if d.true_positive <= d.false_positive {
                warn!("detector for {label} is uninformative: TP {} <= FP {}", d.true_positive, d.false_positive);
            }
        }
        let rule_probabilities = self.predicate_rules.iter().filter_map(|r| r.probability);
        if std::iter::once(self.relation_probability).chain(rule_probabilities).any(|p| !(0.0..=1.0).contains(&p)) {
            return Err(WorldError::InvalidPerception("relation probability outside [0, 1]".into()));
        }
        if self.predicates.is_empty() {
            return Err(WorldError::InvalidPerception("empty predicate set".into()));
        }
        if !(self.position_noise >= 0.0) {
            return Err(WorldError::InvalidPerception("position_noise must be >= 0".into()));
        }
        Ok(())
    }

    /// `(swap, rule)` for the pair, `swap` meaning `b` is the subject.
    fn rule_for(&self, a: &str, b: &str) -> Option<(bool, &PredicateRule)> {
        self.predicate_rules.iter().find_map(|r| {
            if r.subject == a && r.object == b {
                Some((false, r))
            } else if r.subject == b && r.object == a {
                Some((true, r))
            } else {
                None
            }
        })
    }
}

/// Ground truth and RNG for one episode.
#[derive(Debug, Clone)]
pub struct WorldState {
    robot_location: usize,
    target: PlacedObject,
    objects: Vec<PlacedObject>,
    move_success: f64,
    terminated: bool,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Draws the target location from `distribution`, then places `objects`.
    pub fn sample(
        map: &EnvironmentMap,
        query_label: &str,
        distribution: &[f64],
        objects: &[ObjectSpec],
        robot_start: usize,
        move_success: f64,
        seed: u64,
    ) -> Result<Self, WorldError> {
        let n = map.location_count();
        if distribution.len() != n {
            return Err(WorldError::InvalidEnvironment("placement distribution length mismatch".into()));
        }
        check_distribution(distribution)?;
        if robot_start >= n {
            return Err(WorldError::InvalidEnvironment(format!("robot_start {robot_start} out of range")));
        }
        if !(0.0..=1.0).contains(&move_success) {
            return Err(WorldError::InvalidEnvironment(format!("move_success {move_success} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target_location = sample_index(&mut rng, distribution);
        let target = PlacedObject {
            label: query_label.to_string(),
            location: target_location,
            position: map.locations()[target_location],
        };
        let mut per_location = vec![0usize; n];
        let mut placed = Vec::new();
        for spec in objects {
            let present = rng.random::<f64>() < spec.probability;
            let location = match spec.location {
                ObjectLocation::Fixed(l) => l,
                ObjectLocation::Relative(RelativeLocation::Target) => target_location,
                ObjectLocation::Relative(RelativeLocation::Random) => rng.random_range(0..n),
            };
            if !present {
                continue;
            }
            if location >= n {
                return Err(WorldError::InvalidEnvironment(format!("{} placed at unknown location {location}", spec.label)));
            }
            let k = per_location[location];
            per_location[location] += 1;
            let angle = k as f64 * std::f64::consts::FRAC_PI_4;
            let [x, y] = map.locations()[location];
            placed.push(PlacedObject {
                label: spec.label.clone(),
                location,
                position: [x + OBJECT_RING_RADIUS * angle.cos(), y + OBJECT_RING_RADIUS * angle.sin()],
            });
        }
        Ok(Self {
            robot_location: robot_start,
            target,
            objects: placed,
            move_success,
            terminated: false,
            rng,
        })
    }

    /// Samples a world from an environment file's own placement settings.
    pub fn from_environment(env: &Environment, move_success: f64, seed: u64) -> Result<Self, WorldError> {
        Self::sample(
            &env.map,
            &env.target_placement.label,
            &env.target_placement.distribution,
            &env.objects,
            env.robot_start,
            move_success,
            seed,
        )
    }

    pub fn robot_location(&self) -> usize {
        self.robot_location
    }

    pub fn target(&self) -> &PlacedObject {
        &self.target
    }

    pub fn target_location(&self) -> usize {
        self.target.location
    }

    pub fn objects(&self) -> &[PlacedObject] {
        &self.objects
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Executes `action` and returns its reward. Terminating reports the
    /// robot's own location.
    pub fn step(&mut self, model: &TargetSearchPomdp, action: Action) -> Result<f64, WorldError> {
        self.step_reporting(model, action, self.robot_location)
    }

    /// Like [`WorldState::step`], with `report` as the claimed target
    /// location when terminating.
    pub fn step_reporting(&mut self, model: &TargetSearchPomdp, action: Action, report: usize) -> Result<f64, WorldError> {
        if self.terminated {
            return Err(WorldError::Terminated);
        }
        if !model.is_legal(self.robot_location, action) {
            return Err(WorldError::IllegalAction {
                action,
                location: self.robot_location,
            });
        }
        match action {
            Action::Go(i) => {
                let reward = model.go_reward(self.robot_location, i);
                if i != self.robot_location && (self.move_success >= 1.0 || self.rng.random::<f64>() < self.move_success) {
                    self.robot_location = i;
                }
                Ok(reward)
            }
            Action::Terminate => {
                self.terminated = true;
                Ok(model.terminate_reward(self.robot_location, report, self.target.location))
            }
        }
    }

    /// Simulated view from the robot's location.
    ///
    /// Every visible object is detected independently with its label's
    /// true-positive rate. When the target is not visible, a spurious target
    /// detection appears with the false-positive rate; it never carries
    /// relations. Detected pairs at the same location are related with the
    /// model's relation probability.
    pub fn perceive(
        &mut self,
        map: &EnvironmentMap,
        model: &PerceptionModel,
        hops: &[Vec<usize>],
        timestep: usize,
    ) -> (LocalSceneGraph, Observation) {
        let r = self.robot_location;
        let visible = |loc: usize| hops[r][loc] <= model.sensing_radius;
        let mut graph = LocalSceneGraph::new(timestep, r);
        let mut detected: Vec<(InstanceId, usize)> = Vec::new();
        let mut target_seen = false;

        let target_visible = visible(self.target.location);
        let p = if target_visible {
            model.detector(&self.target.label).true_positive
        } else {
            model.detector(&self.target.label).false_positive
        };
        if self.rng.random::<f64>() < p {
            target_seen = true;
            let (position, location) = if target_visible {
                (self.target.position, self.target.location)
            } else {
                (map.locations()[r], r)
            };
            let id = graph.objects.len() as InstanceId;
            graph.objects.push(ObjectInstance {
                instance_id: id,
                label: self.target.label.clone(),
                position: Some(self.noisy(position, model.position_noise)),
                location_id: Some(location),
            });
            if target_visible {
                detected.push((id, location));
            }
        }

        for k in 0..self.objects.len() {
            let obj = &self.objects[k];
            if !visible(obj.location) {
                continue;
            }
            let (label, position, location) = (obj.label.clone(), obj.position, obj.location);
            if self.rng.random::<f64>() < model.detector(&label).true_positive {
                let id = graph.objects.len() as InstanceId;
                let position = self.noisy(position, model.position_noise);
                graph.objects.push(ObjectInstance {
                    instance_id: id,
                    label,
                    position: Some(position),
                    location_id: Some(map.nearest_location(position)),
                });
                detected.push((id, location));
            }
        }

        for a in 0..detected.len() {
            for b in a + 1..detected.len() {
                let (ia, la) = detected[a];
                let (ib, lb) = detected[b];
                if la != lb {
                    continue;
                }
                let rule = model.rule_for(&graph.objects[ia as usize].label, &graph.objects[ib as usize].label);
                let p = rule.and_then(|(_, r)| r.probability).unwrap_or(model.relation_probability);
                if self.rng.random::<f64>() >= p {
                    continue;
                }
                let (swap, predicate) = match rule {
                    Some((swap, r)) => (swap, r.predicate.clone()),
                    None => (false, model.predicates[self.rng.random_range(0..model.predicates.len())].clone()),
                };
                let (subject_id, object_id) = if swap { (ib, ia) } else { (ia, ib) };
                graph.relations.push(RelationshipEdge {
                    subject_id,
                    predicate,
                    object_id,
                });
            }
        }

        let z = if target_seen {
            Observation::Detected
        } else {
            Observation::NotDetected
        };
        (graph, z)
    }

    fn noisy(&mut self, position: [f64; 2], sigma: f64) -> [f64; 2] {
        if sigma <= 0.0 {
            return position;
        }
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        [
            position[0] + normal.sample(&mut self.rng),
            position[1] + normal.sample(&mut self.rng),
        ]
    }
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
