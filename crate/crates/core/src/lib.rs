//! Strand-based hair simulation core: hair geometry and procedural generation,
//! an articulated capsule body with signed-distance queries, the physics loss
//! terms used for self-supervised draping, and the evaluation metrics.

pub mod body;
pub mod energy;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod scenes;

mod error;

pub use error::CoreError;

/// Result alias used across the core crate.
pub type Result<T> = std::result::Result<T, CoreError>;
