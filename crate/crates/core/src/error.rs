use thiserror::Error;

/// Errors produced by the core geometry, body and energy modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty hairstyle: every strand fell below the minimum length")]
    EmptyHairstyle,

    #[error("non-rigid head transform (rotation block deviates by {deviation:.3e})")]
    NonRigidHeadTransform { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rig definition: {0}")]
    Rig(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
