use serde::{Deserialize, Serialize};

use crate::{NetError, Result};

/// Architecture configuration shared by the static and dynamic networks.
///
/// The deformation grid has `grid.0` rows and `grid.1` columns, giving
/// `L = grid.0 * grid.1` hair tokens.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NetConfig {
    pub d_z: usize,
    pub d_m: usize,
    pub grid: (usize, usize),
    pub n_enc: usize,
    pub n_hb: usize,
    pub n_sd: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub verts_per_strand: usize,
    /// Initial deformation magnitude bound, meters.
    pub deformation_clip: f64,
    /// GRU window size in frames.
    pub t_window: usize,
    pub beta_dim: usize,
    pub theta_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            d_z: 512,
            d_m: 512,
            grid: (8, 8),
            n_enc: 2,
            n_hb: 2,
            n_sd: 2,
            heads: 4,
            ffn_dim: 1024,
            verts_per_strand: 100,
            deformation_clip: 0.01,
            t_window: 10,
            beta_dim: 16,
            theta_dim: 66,
        }
    }
}

impl NetConfig {
    /// Small configuration for desk-scale runs and tests.
    pub fn desk() -> NetConfig {
        NetConfig {
            d_m: 64,
            grid: (4, 4),
            ffn_dim: 128,
            ..Default::default()
        }
    }

    /// Number of hair tokens / deformation cells.
    pub fn seq_len(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Width of the body parameter vector fed to the body encoder.
    pub fn body_dim(&self) -> usize {
        self.beta_dim + self.theta_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len() == 0 {
            return Err(NetError::Config("deformation grid must be non-empty".into()));
        }
        if self.heads == 0 || !self.d_m.is_multiple_of(self.heads) {
            return Err(NetError::Config(format!(
                "d_m {} must be divisible by heads {}",
                self.d_m, self.heads
            )));
        }
        if !self.d_m.is_multiple_of(4) {
            return Err(NetError::Config(
                "d_m must be divisible by 4 for the 2D positional encoding".into(),
            ));
        }
        if self.verts_per_strand < 3 {
            return Err(NetError::Config("verts_per_strand must be >= 3".into()));
        }
        if self.t_window < 3 {
            return Err(NetError::Config("t_window must be >= 3".into()));
        }
        if self.ffn_dim == 0 || self.d_z == 0 {
            return Err(NetError::Config("zero-sized layer".into()));
        }
        Ok(())
    }
}
