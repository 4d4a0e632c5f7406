//! Named parameter sets, deterministic initialization, and tape binding.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strandsim_autodiff::{Elem, Tape, Tensor, TensorId};

use crate::config::NetConfig;
use crate::{NetError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Non-trainable entries (the positional encoding) bind as constants.
    pub trainable: bool,
}

/// Ordered, named tensor collection; the order fixes the checkpoint layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, name: &str, tensor: Tensor, trainable: bool) {
        assert!(
            self.index.insert(name.to_string(), self.entries.len()).is_none(),
            "duplicate parameter {name}"
        );
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        let i = self
            .index
            .get(name)
            .ok_or_else(|| NetError::Config(format!("unknown parameter {name}")))?;
        Ok(&self.entries[*i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self
            .index
            .get(name)
            .ok_or_else(|| NetError::Config(format!("unknown parameter {name}")))?;
        Ok(&mut self.entries[*i].tensor)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Mutable views of the trainable tensors, in entry order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.entries
            .iter_mut()
            .filter(|e| e.trainable)
            .map(|e| &mut e.tensor)
            .collect()
    }

    /// Total number of scalar values across all entries.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Binds every entry onto a tape. With `trainable = true`, trainable
    /// entries become differentiable leaves; otherwise everything binds as
    /// constants (frozen network).
    pub fn bind<'a>(&'a self, tape: &mut Tape, trainable: bool) -> BoundParams<'a> {
        let ids = self
            .entries
            .iter()
            .map(|e| {
                if trainable && e.trainable {
                    tape.param(&e.tensor)
                } else {
                    tape.input(e.tensor.clone())
                }
            })
            .collect();
        BoundParams { set: self, ids }
    }
}

/// A parameter set bound to one tape.
pub struct BoundParams<'a> {
    set: &'a ParamSet,
    ids: Vec<TensorId>,
}

impl<'a> BoundParams<'a> {
    pub fn id(&self, name: &str) -> TensorId {
        let i = self
            .set
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.ids[i]
    }

    pub fn set(&self) -> &ParamSet {
        self.set
    }

    /// (name, id) pairs for trainable entries, in entry order.
    pub fn trainable_ids(&self) -> Vec<(&str, TensorId)> {
        self.set
            .entries
            .iter()
            .zip(&self.ids)
            .filter(|(e, _)| e.trainable)
            .map(|(e, id)| (e.name.as_str(), *id))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Initialization

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn new(seed: u64) -> Init {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform(&mut self, rows: usize, cols: usize, limit: f64) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| (self.rng.gen::<f64>() * 2.0 - 1.0) * limit)
            .map(|v| v as Elem)
            .collect();
        Tensor::from_vec(rows, cols, data).expect("sized")
    }

    fn xavier(&mut self, rows: usize, cols: usize) -> Tensor {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(rows, cols, limit)
    }

    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| {
                let u1: f64 = self.rng.gen::<f64>().max(1e-12);
                let u2: f64 = self.rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (z * std) as Elem
            })
            .collect();
        Tensor::from_vec(rows, cols, data).expect("sized")
    }
}

/// 2D sinusoidal positional encoding over the deformation grid: the first
/// half of the feature dimension encodes the row, the second half the column.
pub fn sinusoidal_pe_2d(grid: (usize, usize), d_m: usize) -> Tensor {
    let (mh, mw) = grid;
    let half = d_m / 2;
    let mut pe = Tensor::zeros(mh * mw, d_m);
    let fill = |pe: &mut Tensor, l: usize, base: usize, pos: f64, width: usize| {
        let mut k = 0;
        while 2 * k + 1 < width {
            let w = 1.0 / 10000f64.powf(2.0 * k as f64 / width as f64);
            pe.set(l, base + 2 * k, (pos * w).sin() as Elem);
            pe.set(l, base + 2 * k + 1, (pos * w).cos() as Elem);
            k += 1;
        }
    };
    for r in 0..mh {
        for c in 0..mw {
            let l = r * mw + c;
            fill(&mut pe, l, 0, r as f64, half);
            fill(&mut pe, l, half, c as f64, d_m - half);
        }
    }
    pe
}

fn push_mha(set: &mut ParamSet, init: &mut Init, prefix: &str, d_m: usize, zero_out: bool) {
    set.push(&format!("{prefix}.wq"), init.xavier(d_m, d_m), true);
    set.push(&format!("{prefix}.bq"), Tensor::zeros(1, d_m), true);
    set.push(&format!("{prefix}.wk"), init.xavier(d_m, d_m), true);
    set.push(&format!("{prefix}.bk"), Tensor::zeros(1, d_m), true);
    set.push(&format!("{prefix}.wv"), init.xavier(d_m, d_m), true);
    set.push(&format!("{prefix}.bv"), Tensor::zeros(1, d_m), true);
    let wo = if zero_out {
        Tensor::zeros(d_m, d_m)
    } else {
        init.xavier(d_m, d_m)
    };
    set.push(&format!("{prefix}.wo"), wo, true);
}

fn push_ln(set: &mut ParamSet, prefix: &str, d_m: usize) {
    set.push(&format!("{prefix}.gain"), Tensor::ones(1, d_m), true);
    set.push(&format!("{prefix}.bias"), Tensor::zeros(1, d_m), true);
}

fn push_ffn(set: &mut ParamSet, init: &mut Init, prefix: &str, d_m: usize, ffn: usize, zero_out: bool) {
    set.push(&format!("{prefix}.w1"), init.xavier(d_m, ffn), true);
    set.push(&format!("{prefix}.b1"), Tensor::zeros(1, ffn), true);
    let w2 = if zero_out {
        Tensor::zeros(ffn, d_m)
    } else {
        init.xavier(ffn, d_m)
    };
    set.push(&format!("{prefix}.w2"), w2, true);
    set.push(&format!("{prefix}.b2"), Tensor::zeros(1, d_m), true);
}

/// Builds the static network parameters for a configuration and seed.
pub fn init_static_params(cfg: &NetConfig, seed: u64) -> ParamSet {
    let mut init = Init::new(seed);
    let mut set = ParamSet::new();
    let (d_m, ffn, l) = (cfg.d_m, cfg.ffn_dim, cfg.seq_len());

    set.push("hair.queries", init.normal(l, d_m, 0.02), true);
    set.push("hair.pe", sinusoidal_pe_2d(cfg.grid, d_m), false);
    set.push("hair.z_proj.w", init.xavier(cfg.d_z, d_m), true);
    set.push("hair.z_proj.b", Tensor::zeros(1, d_m), true);
    for layer in 0..cfg.n_enc {
        let p = format!("hair.enc{layer}");
        push_ln(&mut set, &format!("{p}.ln1"), d_m);
        push_mha(&mut set, &mut init, &format!("{p}.attn"), d_m, false);
        push_ln(&mut set, &format!("{p}.ln2"), d_m);
        push_ffn(&mut set, &mut init, &format!("{p}.ffn"), d_m, ffn, false);
    }

    set.push("body.w1", init.xavier(cfg.body_dim(), d_m), true);
    set.push("body.b1", Tensor::zeros(1, d_m), true);
    set.push("body.w2", init.xavier(d_m, d_m), true);
    set.push("body.b2", Tensor::zeros(1, d_m), true);

    for block in 0..cfg.n_hb {
        let p = format!("hb{block}");
        push_mha(&mut set, &mut init, &format!("{p}.attn"), d_m, false);
        push_ln(&mut set, &format!("{p}.ln1"), d_m);
        push_ffn(&mut set, &mut init, &format!("{p}.ffn"), d_m, ffn, false);
        push_ln(&mut set, &format!("{p}.ln2"), d_m);
    }

    let out_dim = cfg.verts_per_strand * 3;
    set.push("head.w1", init.xavier(d_m, ffn), true);
    set.push("head.b1", Tensor::zeros(1, ffn), true);
    // Small final layer: initial deformations stay within the clip bound.
    let limit = cfg.deformation_clip / ffn as f64;
    set.push("head.w2", init.uniform(ffn, out_dim, limit), true);
    set.push("head.b2", Tensor::zeros(1, out_dim), true);
    set
}

/// Builds the dynamic network parameters. The prediction head is initialized
/// as a copy of the static head; the static-dynamic blocks start with zeroed
/// output projections so the dynamic network reproduces the static head's
/// output exactly at initialization.
pub fn init_dynamic_params(cfg: &NetConfig, seed: u64, static_params: &ParamSet) -> Result<ParamSet> {
    let mut init = Init::new(seed ^ 0x00d1_dac7);
    let mut set = ParamSet::new();
    let (d_m, ffn) = (cfg.d_m, cfg.ffn_dim);

    let x_dim = crate::dynamic_net::x_motion_input_dim(cfg);
    set.push("dyn.in.w1", init.xavier(x_dim, d_m), true);
    set.push("dyn.in.b1", Tensor::zeros(1, d_m), true);
    set.push("dyn.in.w2", init.xavier(d_m, d_m), true);
    set.push("dyn.in.b2", Tensor::zeros(1, d_m), true);

    for gate in ["z", "r", "n"] {
        set.push(&format!("dyn.gru.w_x{gate}"), init.xavier(d_m, d_m), true);
        set.push(&format!("dyn.gru.w_h{gate}"), init.xavier(d_m, d_m), true);
        set.push(&format!("dyn.gru.b_{gate}"), Tensor::zeros(1, d_m), true);
    }

    for block in 0..cfg.n_sd {
        let p = format!("sd{block}");
        push_ln(&mut set, &format!("{p}.ln1"), d_m);
        push_mha(&mut set, &mut init, &format!("{p}.attn"), d_m, true);
        push_ln(&mut set, &format!("{p}.ln2"), d_m);
        push_ffn(&mut set, &mut init, &format!("{p}.ffn"), d_m, ffn, true);
    }

    for name in ["head.w1", "head.b1", "head.w2", "head.b2"] {
        let t = static_params.get(name)?.clone();
        set.push(&format!("dyn_{name}"), t, true);
    }
    Ok(set)
}
