//! Core library for language-conditioned multi-object rearrangement:
//! SE(3) geometry, a reverse-mode autodiff engine, multimodal token
//! encoders, a masked transformer backbone, pose diffusion, and the
//! collision/structure discriminators.

pub mod autodiff;
pub mod backbone;
pub mod checkpoint;
pub mod diffusion;
pub mod discriminators;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod vocab;

pub use error::{CoreError, CoreResult};
