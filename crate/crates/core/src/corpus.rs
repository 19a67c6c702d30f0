//! Scene-graph corpus, co-occurrence counting and edge potentials.
//!
//! The corpus is a set of per-image label sets and relation triplets. All
//! counting is per image: an image with two books counts once for `"book"`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenegraph::LocalSceneGraph;

/// Additive floor applied to every potential entry after counting.
pub const SMOOTHING: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {image:?}: relation endpoint {label:?} is not among the image labels")]
    UnknownEndpoint { image: String, label: String },
    #[error("probability {name} = {value} is outside [0, 1]")]
    InvalidProbability { name: String, value: f64 },
}

/// `(subject_label, predicate, object_label)`, serialized as a 3-array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet(pub String, pub String, pub String);

impl Triplet {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Self(subject.into(), predicate.into(), object.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusImage {
    pub image_id: String,
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub relations: BTreeSet<Triplet>,
}

impl CorpusImage {
    fn validate(&self) -> Result<(), CorpusError> {
        for t in &self.relations {
            for label in [&t.0, &t.2] {
                if !self.labels.contains(label) {
                    return Err(CorpusError::UnknownEndpoint {
                        image: self.image_id.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CorpusIndex {
    by_label: HashMap<String, BTreeSet<usize>>,
    by_pair: HashMap<(String, String), BTreeSet<usize>>,
    by_triplet: HashMap<Triplet, BTreeSet<usize>>,
}

impl CorpusIndex {
    fn build(images: &[CorpusImage]) -> Self {
        let mut index = Self::default();
        for (i, image) in images.iter().enumerate() {
            for label in &image.labels {
                index.by_label.entry(label.clone()).or_default().insert(i);
            }
            let labels: Vec<&String> = image.labels.iter().collect();
            for (a, x) in labels.iter().enumerate() {
                for y in &labels[a + 1..] {
                    index.by_pair.entry(pair_key(x, y)).or_default().insert(i);
                }
            }
            for t in &image.relations {
                index.by_triplet.entry(t.clone()).or_default().insert(i);
            }
        }
        index
    }
}

/// Immutable, indexed corpus of scene graphs.
#[derive(Debug, Clone, Default)]
pub struct SceneGraphCorpus {
    images: Vec<CorpusImage>,
    index: CorpusIndex,
}

impl SceneGraphCorpus {
    pub fn from_images(images: Vec<CorpusImage>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(images.len());
        for image in &images {
            image.validate()?;
            if !seen.insert(image.image_id.clone()) {
                return Err(CorpusError::DuplicateImage(image.image_id.clone()));
            }
        }
        let index = CorpusIndex::build(&images);
        Ok(Self { images, index })
    }

    /// Reads newline-delimited JSON, one image per non-blank line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut images = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let image: CorpusImage =
                serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            image.validate().map_err(|e| CorpusError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            images.push(image);
        }
        Self::from_images(images)
    }

    pub fn write_ndjson(&self, mut out: impl Write) -> Result<(), CorpusError> {
        for image in &self.images {
            serde_json::to_writer(&mut out, image).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn images(&self) -> &[CorpusImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images_with(&self, label: &str) -> usize {
        self.index.by_label.get(label).map_or(0, BTreeSet::len)
    }

    pub fn images_with_pair(&self, a: &str, b: &str) -> usize {
        if a == b {
            return self.images_with(a);
        }
        self.index.by_pair.get(&pair_key(a, b)).map_or(0, BTreeSet::len)
    }

    pub fn images_with_triplet(&self, triplet: &Triplet) -> usize {
        self.index.by_triplet.get(triplet).map_or(0, BTreeSet::len)
    }

    /// The per-relation counts that feed a potential table.
    pub fn phi_counts(&self, subject: &str, predicate: &str, object: &str) -> PhiCounts {
        let with_subject = self.images_with(subject);
        let with_object = self.images_with(object);
        let with_both = self.images_with_pair(subject, object);
        let with_triplet = self.images_with_triplet(&Triplet::new(subject, predicate, object));
        PhiCounts {
            either: with_subject + with_object - with_both,
            both_with_relation: with_triplet,
            both_without_relation: with_both - with_triplet,
            object_without_subject: with_object - with_both,
            subject_without_object: with_subject - with_both,
        }
    }

    /// Potentials for every relation of `local`, in relation order, before
    /// smoothing.
    pub fn calc_phi_raw(&self, local: &LocalSceneGraph) -> Vec<PotentialTable> {
        (0..local.relations.len())
            .filter_map(|i| local.relation_labels(i))
            .map(|(s, p, o)| PotentialTable::from_counts(&self.phi_counts(s, p, o)))
            .collect()
    }

    /// Potentials for every relation of `local`, smoothed.
    pub fn calc_phi(&self, local: &LocalSceneGraph) -> Vec<PotentialTable> {
        (0..local.relations.len())
            .filter_map(|i| local.relation_labels(i))
            .map(|(s, p, o)| self.potential_for(s, p, o))
            .collect()
    }

    /// Smoothed potential for a single labelled triplet.
    pub fn potential_for(&self, subject: &str, predicate: &str, object: &str) -> PotentialTable {
        let counts = self.phi_counts(subject, predicate, object);
        if counts.either == 0 {
            return PotentialTable::UNIFORM;
        }
        PotentialTable::from_counts(&counts).smoothed()
    }

    #[cfg(test)]
    fn index_matches_rebuild(&self) -> bool {
        self.index == CorpusIndex::build(&self.images)
    }
}

/// Image counts for one `(v, e, v')` relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhiCounts {
    /// Images containing `v` or `v'`.
    pub either: usize,
    pub both_with_relation: usize,
    pub both_without_relation: usize,
    pub object_without_subject: usize,
    pub subject_without_object: usize,
}

/// 2x2 edge potential between a relation's subject `v` and object `v'`.
///
/// Field names give the `(v, v')` presence values the entry scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub present_present: f64,
    pub absent_absent: f64,
    pub absent_present: f64,
    pub present_absent: f64,
}

impl PotentialTable {
    pub const UNIFORM: Self = Self {
        present_present: 0.25,
        absent_absent: 0.25,
        absent_present: 0.25,
        present_absent: 0.25,
    };

    /// Fixed identity-leaning table on the `Q`-`Q'` anchor edge.
    pub const QUERY_ANCHOR: Self = Self {
        present_present: 0.45,
        absent_absent: 0.45,
        absent_present: 0.05,
        present_absent: 0.05,
    };

    /// Ratios of each count to the images containing either label; the
    /// uniform table when neither label was ever seen.
    ///
    /// The `absent_absent` entry scores images holding both labels without
    /// the relation. It is not the complement of the other three.
    pub fn from_counts(c: &PhiCounts) -> Self {
        if c.either == 0 {
            return Self::UNIFORM;
        }
        let m = c.either as f64;
        Self {
            present_present: c.both_with_relation as f64 / m,
            absent_absent: c.both_without_relation as f64 / m,
            absent_present: c.object_without_subject as f64 / m,
            present_absent: c.subject_without_object as f64 / m,
        }
    }

    pub fn smoothed(self) -> Self {
        Self {
            present_present: self.present_present + SMOOTHING,
            absent_absent: self.absent_absent + SMOOTHING,
            absent_present: self.absent_present + SMOOTHING,
            present_absent: self.present_absent + SMOOTHING,
        }
    }

    /// `table[subject][object]` with index 1 meaning present.
    pub fn as_matrix(&self) -> [[f64; 2]; 2] {
        [
            [self.absent_absent, self.absent_present],
            [self.present_absent, self.present_present],
        ]
    }

    pub fn from_matrix(m: [[f64; 2]; 2]) -> Self {
        Self {
            present_present: m[1][1],
            absent_absent: m[0][0],
            absent_present: m[0][1],
            present_absent: m[1][0],
        }
    }
}

/// Appearance rule for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub p: f64,
}

/// Co-occurrence rule: with probability `p` both labels are inserted, and
/// then with probability `relation.p` the triplet is emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub subject: String,
    pub object: String,
    pub p: f64,
    #[serde(default)]
    pub relation: Option<RelationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub predicate: String,
    pub p: f64,
}

/// Generator configuration for a synthetic corpus.
///
/// Labels enter an image through independent class draws and pair draws, so
/// a pair's co-occurrence frequency equals its `p` only when neither label
/// has an independent class probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusGeneratorSpec {
    pub images: usize,
    #[serde(default)]
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
}

impl CorpusGeneratorSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let check = |name: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(CorpusError::InvalidProbability { name, value })
            }
        };
        for c in &self.classes {
            check(c.label.clone(), c.p)?;
        }
        for pair in &self.pairs {
            check(format!("{}&{}", pair.subject, pair.object), pair.p)?;
            if let Some(rel) = &pair.relation {
                check(
                    format!("{}-{}-{}", pair.subject, rel.predicate, pair.object),
                    rel.p,
                )?;
            }
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<SceneGraphCorpus, CorpusError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(self.images);
        for i in 0..self.images {
            let mut labels = BTreeSet::new();
            let mut relations = BTreeSet::new();
            for class in &self.classes {
                if rng.random_bool(class.p) {
                    labels.insert(class.label.clone());
                }
            }
            for pair in &self.pairs {
                if !rng.random_bool(pair.p) {
                    continue;
                }
                labels.insert(pair.subject.clone());
                labels.insert(pair.object.clone());
                if let Some(rel) = &pair.relation {
                    if rng.random_bool(rel.p) {
                        relations.insert(Triplet::new(&pair.subject, &rel.predicate, &pair.object));
                    }
                }
            }
            images.push(CorpusImage {
                image_id: format!("synthetic-{i:06}"),
                labels,
                relations,
            });
        }
        SceneGraphCorpus::from_images(images)
    }
}

/// Label frequencies, mostly for reporting.
pub fn label_histogram(corpus: &SceneGraphCorpus) -> BTreeMap<String, usize> {
    corpus
        .index
        .by_label
        .iter()
        .map(|(k, v)| (k.clone(), v.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::{ObjectInstance, RelationshipEdge};
    use proptest::prelude::*;

    fn image(id: &str, labels: &[&str], rels: &[(&str, &str, &str)]) -> CorpusImage {
        CorpusImage {
            image_id: id.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            relations: rels.iter().map(|(s, p, o)| Triplet::new(s, p, o)).collect(),
        }
    }

    fn four_image_corpus() -> SceneGraphCorpus {
        SceneGraphCorpus::from_images(vec![
            image("img1", &["book", "table"], &[("book", "on", "table")]),
            image("img2", &["book"], &[]),
            image("img3", &["table"], &[]),
            image("img4", &["book", "table"], &[]),
        ])
        .unwrap()
    }

    fn local_with(rels: &[(&str, &str, &str)]) -> LocalSceneGraph {
        let mut local = LocalSceneGraph::new(0, 0);
        for (s, p, o) in rels {
            let mut id_of = |label: &str| {
                if let Some(obj) = local.objects.iter().find(|x| x.label == label) {
                    return obj.instance_id;
                }
                let id = local.objects.len() as u32;
                local.objects.push(ObjectInstance {
                    instance_id: id,
                    label: label.into(),
                    position: Some([0.0, 0.0]),
                    location_id: Some(0),
                });
                id
            };
            let (si, oi) = (id_of(s), id_of(o));
            local.relations.push(RelationshipEdge {
                subject_id: si,
                predicate: p.to_string(),
                object_id: oi,
            });
        }
        local
    }

    #[test]
    fn hand_counts_on_four_images() {
        let c = four_image_corpus();
        assert_eq!(c.images_with("book"), 3);
        assert_eq!(c.images_with_pair("book", "table"), 2);
        assert_eq!(c.images_with_pair("table", "book"), 2);
        assert_eq!(c.images_with("unicorn"), 0);
        assert_eq!(c.images_with_triplet(&Triplet::new("book", "on", "table")), 1);
    }

    #[test]
    fn calc_phi_four_image_example() {
        let c = four_image_corpus();
        let phi = c.calc_phi_raw(&local_with(&[("book", "on", "table")]));
        assert_eq!(phi, vec![PotentialTable::UNIFORM]);
    }

    #[test]
    fn zero_triplet_count_gets_smoothing_floor() {
        let c = SceneGraphCorpus::from_images(vec![
            image("a", &["book"], &[]),
            image("b", &["lamp"], &[]),
        ])
        .unwrap();
        let phi = c.calc_phi(&local_with(&[("book", "on", "lamp")]));
        assert_eq!(phi[0].present_present, SMOOTHING);
        assert_eq!(phi[0].absent_absent, SMOOTHING);
        assert!((phi[0].present_absent - (0.5 + SMOOTHING)).abs() < 1e-15);
    }

    #[test]
    fn unseen_labels_give_uniform_table() {
        let c = SceneGraphCorpus::default();
        let phi = c.calc_phi(&local_with(&[("ghost", "near", "phantom")]));
        assert_eq!(phi, vec![PotentialTable::UNIFORM]);
        assert!(c.calc_phi(&LocalSceneGraph::new(0, 0)).is_empty());
    }

    #[test]
    fn duplicate_ids_and_bad_endpoints_are_rejected() {
        let dup = SceneGraphCorpus::from_images(vec![image("x", &["a"], &[]), image("x", &["b"], &[])]);
        assert!(matches!(dup, Err(CorpusError::DuplicateImage(_))));
        let bad = SceneGraphCorpus::from_images(vec![image("x", &["a"], &[("a", "on", "b")])]);
        assert!(matches!(bad, Err(CorpusError::UnknownEndpoint { .. })));
    }

    #[test]
    fn generator_rejects_bad_probability() {
        let spec = CorpusGeneratorSpec {
            images: 1,
            classes: vec![ClassSpec { label: "x".into(), p: 1.5 }],
            pairs: vec![],
        };
        assert!(matches!(spec.generate(0), Err(CorpusError::InvalidProbability { .. })));
    }

    #[test]
    fn generator_certain_class_and_determinism() {
        let spec = CorpusGeneratorSpec {
            images: 100,
            classes: vec![
                ClassSpec { label: "book".into(), p: 1.0 },
                ClassSpec { label: "mug".into(), p: 0.3 },
            ],
            pairs: vec![],
        };
        let a = spec.generate(7).unwrap();
        assert_eq!(a.images_with("book"), 100);
        let b = spec.generate(7).unwrap();
        assert_eq!(a.images(), b.images());
    }

    #[test]
    fn generator_pair_frequency_within_binomial_bounds() {
        let spec = CorpusGeneratorSpec {
            images: 10_000,
            classes: vec![],
            pairs: vec![PairSpec {
                subject: "book".into(),
                object: "table".into(),
                p: 0.5,
                relation: None,
            }],
        };
        let c = spec.generate(11).unwrap();
        let count = c.images_with_pair("book", "table") as f64;
        let sigma = (10_000.0f64 * 0.5 * 0.5).sqrt();
        assert!((count - 5_000.0).abs() <= 3.0 * sigma, "count {count}");
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<CorpusImage>> {
        let labels = ["a", "b", "c", "d", "e"];
        let preds = ["on", "in"];
        prop::collection::vec(
            (
                prop::collection::btree_set(0usize..5, 0..5),
                prop::collection::vec((0usize..5, 0usize..2, 0usize..5), 0..4),
            ),
            0..60,
        )
        .prop_map(move |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (set, rels))| {
                    let labels_set: BTreeSet<String> = set.iter().map(|&j| labels[j].to_string()).collect();
                    let relations = rels
                        .into_iter()
                        .filter(|(s, _, o)| set.contains(s) && set.contains(o) && s != o)
                        .map(|(s, p, o)| Triplet::new(labels[s], preds[p], labels[o]))
                        .collect();
                    CorpusImage {
                        image_id: format!("i{i}"),
                        labels: labels_set,
                        relations,
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn indexed_counts_match_scan(images in corpus_strategy()) {
            let corpus = SceneGraphCorpus::from_images(images.clone()).unwrap();
            prop_assert!(corpus.index_matches_rebuild());
            for a in ["a", "b", "c", "d", "e", "z"] {
                let scan = images.iter().filter(|im| im.labels.contains(a)).count();
                prop_assert_eq!(corpus.images_with(a), scan);
                for b in ["a", "b", "c", "d", "e"] {
                    let scan = images.iter().filter(|im| im.labels.contains(a) && im.labels.contains(b)).count();
                    prop_assert_eq!(corpus.images_with_pair(a, b), scan);
                    let t = Triplet::new(a, "on", b);
                    let scan = images.iter().filter(|im| im.relations.contains(&t)).count();
                    prop_assert_eq!(corpus.images_with_triplet(&t), scan);
                }
            }
        }

        #[test]
        fn calc_phi_is_order_invariant(images in corpus_strategy()) {
            let local = local_with(&[("a", "on", "b"), ("c", "in", "a")]);
            let forward = SceneGraphCorpus::from_images(images.clone()).unwrap();
            let mut rev = images;
            rev.reverse();
            let backward = SceneGraphCorpus::from_images(rev).unwrap();
            let phi = forward.calc_phi_raw(&local);
            prop_assert_eq!(&phi, &backward.calc_phi_raw(&local));
            for t in phi {
                for v in [t.present_present, t.absent_absent, t.absent_present, t.present_absent] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
