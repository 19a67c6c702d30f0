//! Pairwise Markov networks over binary presence variables.
//!
//! Networks are built from a [`GlobalSceneGraph`] and one potential table per
//! relation. Marginals come from damped sum-product loopy belief propagation
//! ([`loopy_bp`]); [`exact_marginals`] enumerates all assignments and serves
//! as the reference on small networks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PotentialTable;
use crate::scenegraph::{GlobalSceneGraph, InstanceId, QUERY_DUPLICATE_ID, QUERY_ID};

/// Largest network [`exact_marginals`] will enumerate.
pub const MAX_EXACT_NODES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("{potentials} potentials supplied for {relations} relations")]
    PotentialCountMismatch { potentials: usize, relations: usize },
    #[error("edge joins node {0} to itself")]
    SelfEdge(usize),
    #[error("node index {0} out of range")]
    UnknownNode(usize),
    #[error("potential entries must be finite and non-negative")]
    InvalidPotential,
    #[error("exact enumeration refused: {0} nodes exceeds the limit of {MAX_EXACT_NODES}")]
    TooLarge(usize),
    #[error("evidence has zero probability under the network")]
    ZeroPartition,
    #[error("invalid belief propagation config: {0}")]
    InvalidConfig(&'static str),
}

/// Observed values keyed by node index; `true` means present.
pub type Evidence = BTreeMap<usize, bool>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkNode {
    pub instance_id: InstanceId,
    pub label: String,
}

/// Undirected edge with `table[x_a][x_b]`, `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkEdge {
    pub a: usize,
    pub b: usize,
    pub table: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairwiseMarkovNetwork {
    nodes: Vec<NetworkNode>,
    edges: Vec<NetworkEdge>,
    #[serde(skip)]
    index_of: HashMap<InstanceId, usize>,
}

impl PairwiseMarkovNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, instance_id: InstanceId, label: &str) -> usize {
        if let Some(&i) = self.index_of.get(&instance_id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(NetworkNode {
            instance_id,
            label: label.to_string(),
        });
        self.index_of.insert(instance_id, i);
        i
    }

    /// Adds `table[x_u][x_v]` between `u` and `v`.
    ///
    /// A second table on the same pair is multiplied into the first and the
    /// product rescaled so its largest entry is 1.
    pub fn add_edge(&mut self, u: usize, v: usize, table: [[f64; 2]; 2]) -> Result<(), InferenceError> {
        if u == v {
            return Err(InferenceError::SelfEdge(u));
        }
        for n in [u, v] {
            if n >= self.nodes.len() {
                return Err(InferenceError::UnknownNode(n));
            }
        }
        if table.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(InferenceError::InvalidPotential);
        }
        let (a, b, table) = if u < v {
            (u, v, table)
        } else {
            (v, u, transpose(table))
        };
        if let Some(edge) = self.edges.iter_mut().find(|e| e.a == a && e.b == b) {
            let mut combined = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    combined[i][j] = edge.table[i][j] * table[i][j];
                }
            }
            let max = combined.iter().flatten().cloned().fold(0.0, f64::max);
            if max > 0.0 {
                for x in combined.iter_mut().flatten() {
                    *x /= max;
                }
            }
            edge.table = combined;
        } else {
            self.edges.push(NetworkEdge { a, b, table });
        }
        Ok(())
    }

    /// One node per graph object, one edge per distinct related pair.
    ///
    /// `potentials[i]` scores `graph.relations()[i]` with the relation's
    /// subject as the table's first variable.
    pub fn from_graph(
        graph: &GlobalSceneGraph,
        potentials: &[PotentialTable],
    ) -> Result<Self, InferenceError> {
        if potentials.len() != graph.relations().len() {
            return Err(InferenceError::PotentialCountMismatch {
                potentials: potentials.len(),
                relations: graph.relations().len(),
            });
        }
        let mut net = Self::new();
        for obj in graph.objects() {
            net.add_node(obj.instance_id, &obj.label);
        }
        for (rel, phi) in graph.relations().iter().zip(potentials) {
            let u = net.index_of[&rel.subject_id];
            let v = net.index_of[&rel.object_id];
            net.add_edge(u, v, phi.as_matrix())?;
        }
        Ok(net)
    }

    pub fn nodes(&self) -> &[NetworkNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[NetworkEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, instance_id: InstanceId) -> Option<usize> {
        self.index_of.get(&instance_id).copied()
    }

    /// True when the edge set contains no cycle.
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }

    /// Multiplies every table by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.edges {
            for x in e.table.iter_mut().flatten() {
                *x *= factor;
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn transpose(t: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[t[0][0], t[1][0]], [t[0][1], t[1][1]]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the largest absolute message change.
    pub tolerance: f64,
    /// Weight kept on the previous message; applied only on loopy networks.
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            damping: 0.5,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.max_iterations == 0 {
            return Err(InferenceError::InvalidConfig("max_iterations must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(InferenceError::InvalidConfig("tolerance must be > 0"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(InferenceError::InvalidConfig("damping must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `P(X_i = 1)` per node, in node order.
    pub present: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl Marginals {
    pub fn of(&self, node: usize) -> f64 {
        self.present[node]
    }
}

fn unary(evidence: &Evidence, node: usize) -> [f64; 2] {
    match evidence.get(&node) {
        Some(true) => [0.0, 1.0],
        Some(false) => [1.0, 0.0],
        None => [1.0, 1.0],
    }
}

/// Marginals by summing the normalized product of potentials over every
/// assignment consistent with `evidence`.
pub fn exact_marginals(
    net: &PairwiseMarkovNetwork,
    evidence: &Evidence,
) -> Result<Marginals, InferenceError> {
    let n = net.node_count();
    if n > MAX_EXACT_NODES {
        return Err(InferenceError::TooLarge(n));
    }
    let log_tables: Vec<[[f64; 2]; 2]> = net
        .edges
        .iter()
        .map(|e| {
            let mut t = e.table;
            for x in t.iter_mut().flatten() {
                *x = x.ln();
            }
            t
        })
        .collect();
    let bit = |assignment: usize, node: usize| (assignment >> node) & 1;
    let consistent = |assignment: usize| {
        evidence
            .iter()
            .all(|(&node, &value)| bit(assignment, node) == value as usize)
    };
    let log_weight = |assignment: usize| -> f64 {
        net.edges
            .iter()
            .zip(&log_tables)
            .map(|(e, t)| t[bit(assignment, e.a)][bit(assignment, e.b)])
            .sum()
    };

    let mut max_log = f64::NEG_INFINITY;
    for assignment in (0..1usize << n).filter(|&a| consistent(a)) {
        max_log = max_log.max(log_weight(assignment));
    }
    if max_log == f64::NEG_INFINITY {
        return Err(InferenceError::ZeroPartition);
    }
    let mut z = 0.0;
    let mut present = vec![0.0; n];
    for assignment in (0..1usize << n).filter(|&a| consistent(a)) {
        let w = (log_weight(assignment) - max_log).exp();
        z += w;
        for (node, p) in present.iter_mut().enumerate() {
            if bit(assignment, node) == 1 {
                *p += w;
            }
        }
    }
    for p in &mut present {
        *p /= z;
    }
    Ok(Marginals {
        present,
        converged: true,
        iterations: 0,
    })
}

/// Sum-product belief propagation with a flooding schedule.
///
/// Messages start uniform and are normalized to sum to one. Damping blends
/// each new message with the previous one on loopy networks; on forests the
/// undamped schedule reaches the exact fixed point after a diameter's worth
/// of sweeps. Non-convergence is reported through [`Marginals::converged`].
pub fn loopy_bp(
    net: &PairwiseMarkovNetwork,
    evidence: &Evidence,
    config: &BpConfig,
) -> Result<Marginals, InferenceError> {
    config.validate()?;
    let n = net.node_count();
    let damping = if net.is_forest() { 0.0 } else { config.damping };

    // Directed message 2k flows a->b along edge k, 2k+1 flows b->a.
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in net.edges.iter().enumerate() {
        incoming[e.b].push(2 * k);
        incoming[e.a].push(2 * k + 1);
    }
    let unaries: Vec<[f64; 2]> = (0..n).map(|i| unary(evidence, i)).collect();
    let mut messages = vec![[0.5, 0.5]; 2 * net.edges.len()];
    let mut next = messages.clone();

    let mut converged = net.edges.is_empty();
    let mut iterations = 0;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for (k, e) in net.edges.iter().enumerate() {
            for (dir, from) in [(0, e.a), (1, e.b)] {
                let mut h = unaries[from];
                for &m in &incoming[from] {
                    // Skip the reverse of the message being computed.
                    if m / 2 == k {
                        continue;
                    }
                    h[0] *= messages[m][0];
                    h[1] *= messages[m][1];
                }
                let mut out = [0.0; 2];
                for (x_to, slot) in out.iter_mut().enumerate() {
                    *slot = (0..2)
                        .map(|x_from| {
                            let phi = if dir == 0 {
                                e.table[x_from][x_to]
                            } else {
                                e.table[x_to][x_from]
                            };
                            h[x_from] * phi
                        })
                        .sum();
                }
                let s = out[0] + out[1];
                if s > 0.0 {
                    out = [out[0] / s, out[1] / s];
                } else {
                    out = [0.5, 0.5];
                }
                let old = messages[2 * k + dir];
                let blended = [
                    (1.0 - damping) * out[0] + damping * old[0],
                    (1.0 - damping) * out[1] + damping * old[1],
                ];
                delta = delta
                    .max((blended[0] - old[0]).abs())
                    .max((blended[1] - old[1]).abs());
                next[2 * k + dir] = blended;
            }
        }
        std::mem::swap(&mut messages, &mut next);
        converged = delta < config.tolerance;
    }

    let present = (0..n)
        .map(|i| {
            let mut b = unaries[i];
            for &m in &incoming[i] {
                b[0] *= messages[m][0];
                b[1] *= messages[m][1];
            }
            let s = b[0] + b[1];
            if s > 0.0 {
                b[1] / s
            } else {
                0.5
            }
        })
        .collect();
    Ok(Marginals {
        present,
        converged,
        iterations,
    })
}

/// `P(Q = 1 | objects seen at location l)` for every location.
///
/// Evidence at a location clamps every instance whose `location_id` is that
/// location to present. Locations without instances get the evidence-free
/// marginal of `Q`.
pub fn target_bias_vector(
    net: &PairwiseMarkovNetwork,
    graph: &GlobalSceneGraph,
    location_count: usize,
    config: &BpConfig,
) -> Result<Vec<f64>, InferenceError> {
    let query = net
        .node_index(QUERY_ID)
        .ok_or(InferenceError::UnknownNode(QUERY_ID as usize))?;
    let prior = loopy_bp(net, &Evidence::new(), config)?.of(query);
    let mut bias = vec![prior; location_count];
    for (location, slot) in bias.iter_mut().enumerate() {
        let evidence: Evidence = graph
            .instances_at(location)
            .filter(|o| o.instance_id != QUERY_ID && o.instance_id != QUERY_DUPLICATE_ID)
            .filter_map(|o| net.node_index(o.instance_id))
            .map(|i| (i, true))
            .collect();
        if evidence.is_empty() {
            continue;
        }
        *slot = loopy_bp(net, &evidence, config)?.of(query);
    }
    Ok(bias)
}
