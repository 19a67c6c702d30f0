//! Random instance generators and brute-force oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::Rng;
use sarp::corpus::{CorpusImage, PhiCounts, PotentialTable, Triplet};
use sarp::inference::{Evidence, PairwiseMarkovNetwork};
use sarp::scenegraph::{LocalSceneGraph, ObjectInstance, RelationshipEdge};

pub const LABELS: [&str; 6] = ["banana", "plate", "table", "cup", "sofa", "lamp"];
pub const PREDICATES: [&str; 3] = ["on", "in", "near"];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Smoothed table built from random image counts, as the corpus would.
pub fn random_table(rng: &mut impl Rng) -> [[f64; 2]; 2] {
    let mut count = || rng.random_range(0..50usize);
    let (both_with, both_without, object_only, subject_only) = (count(), count(), count(), count());
    PotentialTable::from_counts(&PhiCounts {
        either: both_with + both_without + object_only + subject_only,
        both_with_relation: both_with,
        both_without_relation: both_without,
        object_without_subject: object_only,
        subject_without_object: subject_only,
    })
    .smoothed()
    .as_matrix()
}

fn with_nodes(n: usize) -> PairwiseMarkovNetwork {
    let mut net = PairwiseMarkovNetwork::new();
    for i in 0..n {
        net.add_node(i as u32, &format!("n{i}"));
    }
    net
}

/// Random forest: each node after the first joins a random earlier node with
/// probability 0.85.
pub fn random_forest(rng: &mut impl Rng, n: usize) -> PairwiseMarkovNetwork {
    let mut net = with_nodes(n);
    for i in 1..n {
        if rng.random_bool(0.85) {
            let j = rng.random_range(0..i);
            let (u, v) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            net.add_edge(u, v, random_table(rng)).unwrap();
        }
    }
    net
}

/// Spanning tree plus `extra` distinct chords, so at least one cycle when
/// `extra > 0`.
pub fn random_loopy(rng: &mut impl Rng, n: usize, extra: usize) -> PairwiseMarkovNetwork {
    let mut net = with_nodes(n);
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.insert((j, i));
        net.add_edge(j, i, random_table(rng)).unwrap();
    }
    let mut added = 0;
    while added < extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let key = (a.min(b), a.max(b));
        if a == b || !pairs.insert(key) {
            continue;
        }
        net.add_edge(a, b, random_table(rng)).unwrap();
        added += 1;
    }
    net
}

pub fn random_evidence(rng: &mut impl Rng, n: usize, rate: f64) -> Evidence {
    let mut evidence = Evidence::new();
    for i in 0..n {
        if rng.random_bool(rate) {
            evidence.insert(i, rng.random_bool(0.5));
        }
    }
    evidence
}

/// Random images over the first five labels; the sixth never appears.
pub fn random_corpus(rng: &mut impl Rng, max_images: usize) -> Vec<CorpusImage> {
    let count = rng.random_range(0..=max_images);
    (0..count)
        .map(|i| {
            let labels: BTreeSet<String> = LABELS[..5]
                .iter()
                .filter(|_| rng.random_bool(0.45))
                .map(|l| l.to_string())
                .collect();
            let present: Vec<&String> = labels.iter().collect();
            let mut relations = BTreeSet::new();
            if present.len() >= 2 {
                for _ in 0..rng.random_range(0..4) {
                    let s = present.choose(rng).unwrap();
                    let o = present.choose(rng).unwrap();
                    if s != o {
                        relations.insert(Triplet::new(s, PREDICATES.choose(rng).unwrap(), o));
                    }
                }
            }
            CorpusImage {
                image_id: format!("img{i}"),
                labels,
                relations,
            }
        })
        .collect()
}

/// Local graph over all six labels with random relations.
pub fn random_local_graph(rng: &mut impl Rng) -> LocalSceneGraph {
    let mut g = LocalSceneGraph::new(0, 0);
    let n = rng.random_range(2..=5);
    for i in 0..n {
        g.objects.push(ObjectInstance {
            instance_id: i,
            label: LABELS.choose(rng).unwrap().to_string(),
            position: Some([0.0, 0.0]),
            location_id: Some(0),
        });
    }
    for _ in 0..rng.random_range(1..=4) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            g.relations.push(RelationshipEdge {
                subject_id: a,
                predicate: PREDICATES.choose(rng).unwrap().to_string(),
                object_id: b,
            });
        }
    }
    g
}

/// Per-image scan of one `(v, e, v')` relation, written without the corpus
/// index.
pub fn brute_force_phi(images: &[CorpusImage], v: &str, e: &str, w: &str) -> PotentialTable {
    let (mut m, mut triplet, mut both_no_triplet, mut w_only, mut v_only) = (0u32, 0u32, 0u32, 0u32, 0u32);
    for image in images {
        let has_v = image.labels.iter().any(|l| l == v);
        let has_w = image.labels.iter().any(|l| l == w);
        if !(has_v || has_w) {
            continue;
        }
        m += 1;
        let has_t = image
            .relations
            .iter()
            .any(|t| t.0 == v && t.1 == e && t.2 == w);
        match (has_v, has_w) {
            (true, true) if has_t => triplet += 1,
            (true, true) => both_no_triplet += 1,
            (false, true) => w_only += 1,
            (true, false) => v_only += 1,
            (false, false) => unreachable!(),
        }
    }
    if m == 0 {
        return PotentialTable {
            present_present: 0.25,
            absent_absent: 0.25,
            absent_present: 0.25,
            present_absent: 0.25,
        };
    }
    let m = f64::from(m);
    PotentialTable {
        present_present: f64::from(triplet) / m,
        absent_absent: f64::from(both_no_triplet) / m,
        absent_present: f64::from(w_only) / m,
        present_absent: f64::from(v_only) / m,
    }
}
