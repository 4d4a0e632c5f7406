//! The static hair drape transformer and the dynamic GRU + cross-attention
//! network: encoders, attention blocks, prediction heads, deformation-map
//! lookup with tapering, motion descriptors, functional regularization and
//! checkpoint serialization.

pub mod checkpoint;
pub mod config;
pub mod deformation;
pub mod dynamic_net;
pub mod params;
pub mod static_net;

pub use checkpoint::Checkpoint;
pub use config::NetConfig;
pub use deformation::{apply_deformation, deformation_grad_to_tensor, taper, DeformationMap};
pub use dynamic_net::{
    dynamic_encoder_step, dynamic_forward, func_reg_loss, motion_descriptor_dim,
    motion_descriptors, simulate_sequence, x_motion_input_dim, DynamicOutputs, MotionWindow,
    SimulatedFrame,
};
pub use params::{init_dynamic_params, init_static_params, BoundParams, ParamSet};
pub use static_net::{
    body_encoder, cross_attention_blocks, hair_encoder, static_forward, static_forward_eval,
    StaticOutputs,
};

/// Errors from network construction, evaluation and checkpointing.
#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("autodiff: {0}")]
    Ad(#[from] strandsim_autodiff::AdError),
    #[error("core: {0}")]
    Core(#[from] strandsim_core::CoreError),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("motion window needs at least 3 poses, got {0}")]
    WindowTooShort(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
