//! Checkpoint format: a JSON manifest (names, shapes, offsets, config echo,
//! seed) next to a little-endian float32 blob. Round trips are bit-exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strandsim_autodiff::{Elem, Tensor};

use crate::config::NetConfig;
use crate::params::ParamSet;
use crate::{NetError, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
    trainable: bool,
    /// Byte offset into the blob.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    dtype: String,
    seed: u64,
    iteration: u64,
    config: NetConfig,
    blob_bytes: u64,
    entries: Vec<ManifestEntry>,
}

/// A parameter set with its provenance (config echo, seed, iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub iteration: u64,
    pub config: NetConfig,
    pub params: ParamSet,
}

/// Serializes all parameter values as little-endian f32.
pub fn params_blob(params: &ParamSet) -> Vec<u8> {
    let mut blob = Vec::with_capacity(params.value_count() * 4);
    for e in params.entries() {
        for &v in e.tensor.data() {
            blob.extend_from_slice(&((v as f64) as f32).to_le_bytes());
        }
    }
    blob
}

impl Checkpoint {
    pub fn new(seed: u64, iteration: u64, config: NetConfig, params: ParamSet) -> Checkpoint {
        Checkpoint {
            seed,
            iteration,
            config,
            params,
        }
    }

    fn blob_path(manifest_path: &Path) -> PathBuf {
        let mut p = manifest_path.as_os_str().to_owned();
        p.push(".bin");
        PathBuf::from(p)
    }

    /// Writes `path` (JSON manifest) and `path.bin` (float32 blob).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut offset = 0u64;
        for e in self.params.entries() {
            entries.push(ManifestEntry {
                name: e.name.clone(),
                rows: e.tensor.rows(),
                cols: e.tensor.cols(),
                trainable: e.trainable,
                offset,
            });
            offset += (e.tensor.len() * 4) as u64;
        }
        let blob = params_blob(&self.params);
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT,
            dtype: "f32".into(),
            seed: self.seed,
            iteration: self.iteration,
            config: self.config.clone(),
            blob_bytes: blob.len() as u64,
            entries,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| NetError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        std::fs::write(Self::blob_path(path), blob)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let json = std::fs::read_to_string(path)?;
        let manifest: Manifest =
            serde_json::from_str(&json).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(NetError::Checkpoint(format!(
                "unsupported checkpoint format {}",
                manifest.format
            )));
        }
        if manifest.dtype != "f32" {
            return Err(NetError::Checkpoint(format!(
                "unsupported dtype {}",
                manifest.dtype
            )));
        }
        let blob = std::fs::read(Self::blob_path(path))?;
        if blob.len() as u64 != manifest.blob_bytes {
            return Err(NetError::Checkpoint(format!(
                "blob is {} bytes, manifest says {}",
                blob.len(),
                manifest.blob_bytes
            )));
        }
        let mut params = ParamSet::new();
        for e in &manifest.entries {
            let count = e.rows * e.cols;
            let start = e.offset as usize;
            let end = start + count * 4;
            if end > blob.len() {
                return Err(NetError::Checkpoint(format!(
                    "entry {} overruns the blob",
                    e.name
                )));
            }
            let data: Vec<Elem> = blob[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as Elem)
                .collect();
            let tensor =
                Tensor::from_vec(e.rows, e.cols, data).map_err(NetError::Ad)?;
            params.push(&e.name, tensor, e.trainable);
        }
        Ok(Checkpoint {
            seed: manifest.seed,
            iteration: manifest.iteration,
            config: manifest.config,
            params,
        })
    }
}
