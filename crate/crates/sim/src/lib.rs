//! Procedural tabletop world for language-conditioned rearrangement:
//! parametric primitive objects, ground-truth structure templates, partial
//! point-cloud rendering with occlusion, dataset and collision-pair
//! generation, and the physics-lite evaluator with model-based semantic
//! classifiers.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod primitives;
pub mod reference;
pub mod render;
pub mod structures;

pub use error::{SimError, SimResult};
