//! Target search guided by scene-graph co-occurrence.
//!
//! A robot searches a discrete map for a query object. A POMDP planner picks
//! navigation actions from a belief over the target's location, and a
//! pairwise Markov network built from the scene graph observed so far, with
//! potentials counted from an annotated image corpus, biases that belief
//! whenever the target is detected.

pub mod agent;
pub mod corpus;
pub mod experiment;
pub mod inference;
pub mod pomdp;
pub mod scenegraph;
pub mod simworld;
