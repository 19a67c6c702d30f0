//! Local and global scene graphs.
//!
//! A [`LocalSceneGraph`] is what a single view produces. The episode-wide
//! [`GlobalSceneGraph`] accumulates views, associating repeated detections of
//! the same physical object with one instance through a spatial hash keyed by
//! `(label, cell)`.
//!
//! The global graph always carries the query node `Q` (id 0) and its
//! duplicate `Q'` (id 1), joined by an anchor relation. Detections whose
//! label equals the query are folded into `Q` so that relations observed
//! around the target become edges incident to the query node.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an object instance inside one graph.
pub type InstanceId = u32;

/// Id of the query node `Q` in every global graph.
pub const QUERY_ID: InstanceId = 0;
/// Id of the duplicate query node `Q'`.
pub const QUERY_DUPLICATE_ID: InstanceId = 1;
/// Predicate of the `Q`-`Q'` anchor relation.
pub const ANCHOR_PREDICATE: &str = "duplicate_of";

/// Default association radius in meters.
pub const DEFAULT_ASSOCIATION_RADIUS: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SceneGraphError {
    #[error("query label must not be empty")]
    EmptyQueryLabel,
    #[error("association radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("relation endpoint {0} does not index a local object")]
    DanglingEndpoint(InstanceId),
    #[error("relation on instance {0} points at itself")]
    SelfRelation(InstanceId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub instance_id: InstanceId,
    pub label: String,
    /// Estimated world position in meters; `None` for `Q` and `Q'`.
    pub position: Option<[f64; 2]>,
    /// Nearest discrete environment location; `None` for `Q` and `Q'`.
    pub location_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationshipEdge {
    pub subject_id: InstanceId,
    pub predicate: String,
    pub object_id: InstanceId,
}

/// Scene graph produced from a single view.
///
/// Instance ids are local: relations refer to `objects[i].instance_id`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalSceneGraph {
    pub timestep: usize,
    pub robot_location: usize,
    pub objects: Vec<ObjectInstance>,
    pub relations: Vec<RelationshipEdge>,
}

impl LocalSceneGraph {
    pub fn new(timestep: usize, robot_location: usize) -> Self {
        Self {
            timestep,
            robot_location,
            objects: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn object(&self, id: InstanceId) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.instance_id == id)
    }

    /// Checks that every relation endpoint indexes into `objects`.
    pub fn validate(&self) -> Result<(), SceneGraphError> {
        for rel in &self.relations {
            if rel.subject_id == rel.object_id {
                return Err(SceneGraphError::SelfRelation(rel.subject_id));
            }
            for id in [rel.subject_id, rel.object_id] {
                if self.object(id).is_none() {
                    return Err(SceneGraphError::DanglingEndpoint(id));
                }
            }
        }
        Ok(())
    }

    /// `(subject_label, predicate, object_label)` of relation `index`.
    pub fn relation_labels(&self, index: usize) -> Option<(&str, &str, &str)> {
        let rel = self.relations.get(index)?;
        let s = self.object(rel.subject_id)?;
        let o = self.object(rel.object_id)?;
        Some((&s.label, &rel.predicate, &o.label))
    }
}

/// What a [`GlobalSceneGraph::merge_local`] call changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    /// Global id assigned to each local object, in local order.
    pub instance_map: Vec<InstanceId>,
    /// Ids of instances created by this merge.
    pub new_instances: Vec<InstanceId>,
    /// Indices into the local relation list of relations that were inserted.
    pub inserted_relations: Vec<usize>,
}

impl MergeReport {
    pub fn is_empty(&self) -> bool {
        self.new_instances.is_empty() && self.inserted_relations.is_empty()
    }
}

type Cell = (i64, i64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalSceneGraph {
    query_label: String,
    objects: Vec<ObjectInstance>,
    relations: Vec<RelationshipEdge>,
    #[serde(skip_serializing)]
    registry: HashMap<(String, Cell), Vec<InstanceId>>,
    #[serde(skip_serializing)]
    relation_set: HashSet<RelationshipEdge>,
    cell_size: f64,
}

impl GlobalSceneGraph {
    /// Creates the graph `({Q, Q'}, {Q-Q'})` for the given query.
    pub fn new(query_label: &str) -> Result<Self, SceneGraphError> {
        Self::with_cell_size(query_label, DEFAULT_ASSOCIATION_RADIUS)
    }

    /// Like [`new`](Self::new) with a spatial-hash cell size matched to the
    /// association radius that will be used in merges.
    pub fn with_cell_size(query_label: &str, cell_size: f64) -> Result<Self, SceneGraphError> {
        if query_label.trim().is_empty() {
            return Err(SceneGraphError::EmptyQueryLabel);
        }
        check_radius(cell_size)?;
        let anchor = RelationshipEdge {
            subject_id: QUERY_ID,
            predicate: ANCHOR_PREDICATE.to_string(),
            object_id: QUERY_DUPLICATE_ID,
        };
        let query = |id| ObjectInstance {
            instance_id: id,
            label: query_label.to_string(),
            position: None,
            location_id: None,
        };
        Ok(Self {
            query_label: query_label.to_string(),
            objects: vec![query(QUERY_ID), query(QUERY_DUPLICATE_ID)],
            relation_set: HashSet::from([anchor.clone()]),
            relations: vec![anchor],
            registry: HashMap::new(),
            cell_size,
        })
    }

    pub fn query_label(&self) -> &str {
        &self.query_label
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn relations(&self) -> &[RelationshipEdge] {
        &self.relations
    }

    pub fn node_count(&self) -> usize {
        self.objects.len()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.len()
    }

    /// Instances are stored densely, so the id doubles as the index.
    pub fn object(&self, id: InstanceId) -> Option<&ObjectInstance> {
        self.objects.get(id as usize)
    }

    pub fn relation_labels(&self, index: usize) -> Option<(&str, &str, &str)> {
        let rel = self.relations.get(index)?;
        Some((
            &self.object(rel.subject_id)?.label,
            &rel.predicate,
            &self.object(rel.object_id)?.label,
        ))
    }

    fn cell(&self, position: [f64; 2]) -> Cell {
        (
            (position[0] / self.cell_size).floor() as i64,
            (position[1] / self.cell_size).floor() as i64,
        )
    }

    /// Nearest same-label instance within `radius`, ties to the lowest id.
    pub fn find_instance(&self, label: &str, position: [f64; 2], radius: f64) -> Option<InstanceId> {
        let (cx, cy) = self.cell(position);
        let reach = (radius / self.cell_size).ceil() as i64;
        let mut best: Option<(f64, InstanceId)> = None;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                let Some(ids) = self.registry.get(&(label.to_string(), (cx + dx, cy + dy))) else {
                    continue;
                };
                for &id in ids {
                    let Some(p) = self.objects[id as usize].position else {
                        continue;
                    };
                    let d = ((p[0] - position[0]).powi(2) + (p[1] - position[1]).powi(2)).sqrt();
                    if d > radius {
                        continue;
                    }
                    best = match best {
                        Some((bd, bid)) if bd < d || (bd == d && bid < id) => Some((bd, bid)),
                        _ => Some((d, id)),
                    };
                }
            }
        }
        best.map(|(_, id)| id)
    }

    /// Returns the id of a matching instance or inserts a new one.
    ///
    /// Detections carrying the query label resolve to `Q`.
    pub fn associate_instance(
        &mut self,
        label: &str,
        position: [f64; 2],
        location_id: usize,
        radius: f64,
    ) -> Result<InstanceId, SceneGraphError> {
        check_radius(radius)?;
        Ok(self.associate(label, position, location_id, radius).0)
    }

    fn associate(
        &mut self,
        label: &str,
        position: [f64; 2],
        location_id: usize,
        radius: f64,
    ) -> (InstanceId, bool) {
        if label == self.query_label {
            return (QUERY_ID, false);
        }
        if let Some(id) = self.find_instance(label, position, radius) {
            return (id, false);
        }
        let id = self.objects.len() as InstanceId;
        self.objects.push(ObjectInstance {
            instance_id: id,
            label: label.to_string(),
            position: Some(position),
            location_id: Some(location_id),
        });
        let cell = self.cell(position);
        self.registry
            .entry((label.to_string(), cell))
            .or_default()
            .push(id);
        (id, true)
    }

    /// Folds a local graph into this one.
    ///
    /// Objects are associated by label and position; relations are re-indexed
    /// onto global ids and inserted unless the same triplet is already present.
    pub fn merge_local(
        &mut self,
        local: &LocalSceneGraph,
        radius: f64,
    ) -> Result<MergeReport, SceneGraphError> {
        check_radius(radius)?;
        local.validate()?;
        let mut report = MergeReport::default();
        let mut local_to_global = HashMap::with_capacity(local.objects.len());
        for obj in &local.objects {
            let position = obj.position.unwrap_or([0.0, 0.0]);
            let location = obj.location_id.unwrap_or(local.robot_location);
            let (id, created) = self.associate(&obj.label, position, location, radius);
            if created {
                report.new_instances.push(id);
            }
            local_to_global.insert(obj.instance_id, id);
            report.instance_map.push(id);
        }
        for (index, rel) in local.relations.iter().enumerate() {
            let subject_id = local_to_global[&rel.subject_id];
            let object_id = local_to_global[&rel.object_id];
            if subject_id == object_id {
                // Two local detections collapsed onto one instance.
                continue;
            }
            let edge = RelationshipEdge {
                subject_id,
                predicate: rel.predicate.clone(),
                object_id,
            };
            if self.relation_set.insert(edge.clone()) {
                self.relations.push(edge);
                report.inserted_relations.push(index);
            }
        }
        Ok(report)
    }

    /// Instances located at `location`, excluding `Q` and `Q'`.
    pub fn instances_at(&self, location: usize) -> impl Iterator<Item = &ObjectInstance> {
        self.objects
            .iter()
            .filter(move |o| o.location_id == Some(location))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&GraphSnapshot {
            objects: &self.objects,
            relations: &self.relations,
        })
    }
}

#[derive(Serialize)]
struct GraphSnapshot<'a> {
    objects: &'a [ObjectInstance],
    relations: &'a [RelationshipEdge],
}

fn check_radius(radius: f64) -> Result<(), SceneGraphError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(SceneGraphError::InvalidRadius(radius))
    }
}
