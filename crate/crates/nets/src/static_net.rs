//! Static drape network: hair encoder (learnable queries + latent token
//! through self-attention), body encoder MLP, hair-body cross-attention
//! blocks, and the deformation prediction head.

use strandsim_autodiff::{linear, softmax_attention, Elem, Tape, Tensor, TensorId};

use crate::config::NetConfig;
use crate::deformation::DeformationMap;
use crate::params::{BoundParams, ParamSet};
use crate::Result;

fn mha(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    queries: TensorId,
    keys_values: TensorId,
    heads: usize,
) -> Result<TensorId> {
    let q = linear(
        tape,
        queries,
        bound.id(&format!("{prefix}.wq")),
        bound.id(&format!("{prefix}.bq")),
    )?;
    let k = linear(
        tape,
        keys_values,
        bound.id(&format!("{prefix}.wk")),
        bound.id(&format!("{prefix}.bk")),
    )?;
    let v = linear(
        tape,
        keys_values,
        bound.id(&format!("{prefix}.wv")),
        bound.id(&format!("{prefix}.bv")),
    )?;
    Ok(softmax_attention(
        tape,
        q,
        k,
        v,
        bound.id(&format!("{prefix}.wo")),
        heads,
    )?)
}

fn ffn(tape: &mut Tape, bound: &BoundParams, prefix: &str, x: TensorId) -> Result<TensorId> {
    let h = linear(
        tape,
        x,
        bound.id(&format!("{prefix}.w1")),
        bound.id(&format!("{prefix}.b1")),
    )?;
    let a = tape.relu(h);
    Ok(linear(
        tape,
        a,
        bound.id(&format!("{prefix}.w2")),
        bound.id(&format!("{prefix}.b2")),
    )?)
}

fn layernorm(tape: &mut Tape, bound: &BoundParams, prefix: &str, x: TensorId) -> Result<TensorId> {
    Ok(tape.layernorm(
        x,
        bound.id(&format!("{prefix}.gain")),
        bound.id(&format!("{prefix}.bias")),
    )?)
}

/// Pre-norm self-attention layer: x += attn(LN(x)); x += ffn(LN(x)).
fn self_attention_layer(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    heads: usize,
    x: TensorId,
) -> Result<TensorId> {
    let n1 = layernorm(tape, bound, &format!("{prefix}.ln1"), x)?;
    let a = mha(tape, bound, &format!("{prefix}.attn"), n1, n1, heads)?;
    let x = tape.add(x, a)?;
    let n2 = layernorm(tape, bound, &format!("{prefix}.ln2"), x)?;
    let f = ffn(tape, bound, &format!("{prefix}.ffn"), n2)?;
    Ok(tape.add(x, f)?)
}

/// Encodes the hair latent into L body-agnostic hair tokens: learnable
/// queries with a 2D positional encoding, joined by the projected latent as
/// an extra token, run through the self-attention stack; the latent token is
/// discarded from the output.
pub fn hair_encoder(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &NetConfig,
    z: TensorId,
) -> Result<TensorId> {
    let queries = bound.id("hair.queries");
    let pe = bound.id("hair.pe");
    let q = tape.add(queries, pe)?;
    let token = linear(tape, z, bound.id("hair.z_proj.w"), bound.id("hair.z_proj.b"))?;
    let mut x = tape.concat_rows(&[q, token])?;
    for layer in 0..cfg.n_enc {
        x = self_attention_layer(tape, bound, &format!("hair.enc{layer}"), cfg.heads, x)?;
    }
    // Drop the latent token (last row).
    let xt = tape.transpose(x);
    let kept = tape.slice_cols(xt, 0, cfg.seq_len())?;
    Ok(tape.transpose(kept))
}

/// MLP over the concatenated shape and pose vector.
pub fn body_encoder(tape: &mut Tape, bound: &BoundParams, body_vec: TensorId) -> Result<TensorId> {
    let h = linear(tape, body_vec, bound.id("body.w1"), bound.id("body.b1"))?;
    let a = tape.relu(h);
    Ok(linear(tape, a, bound.id("body.w2"), bound.id("body.b2"))?)
}

/// Post-norm cross-attention blocks: h = LN(h + attn(h, c)); h = LN(h + ffn(h)).
pub fn cross_attention_blocks(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &NetConfig,
    mut h: TensorId,
    c: TensorId,
) -> Result<TensorId> {
    for block in 0..cfg.n_hb {
        let p = format!("hb{block}");
        let a = mha(tape, bound, &format!("{p}.attn"), h, c, cfg.heads)?;
        let sum = tape.add(h, a)?;
        h = layernorm(tape, bound, &format!("{p}.ln1"), sum)?;
        let f = ffn(tape, bound, &format!("{p}.ffn"), h)?;
        let sum = tape.add(h, f)?;
        h = layernorm(tape, bound, &format!("{p}.ln2"), sum)?;
    }
    Ok(h)
}

/// MLP head from hair tokens to per-cell deformation rows.
pub fn prediction_head(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    h: TensorId,
) -> Result<TensorId> {
    let x = linear(
        tape,
        h,
        bound.id(&format!("{prefix}.w1")),
        bound.id(&format!("{prefix}.b1")),
    )?;
    let a = tape.relu(x);
    Ok(linear(
        tape,
        a,
        bound.id(&format!("{prefix}.w2")),
        bound.id(&format!("{prefix}.b2")),
    )?)
}

pub struct StaticOutputs {
    /// L x (N*3) raw deformation rows.
    pub deformation: TensorId,
    /// L x d_m body-aware hair tokens.
    pub h_static: TensorId,
}

/// Full static forward pass on a tape.
pub fn static_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &NetConfig,
    z: TensorId,
    body_vec: TensorId,
) -> Result<StaticOutputs> {
    let h_ctx = hair_encoder(tape, bound, cfg, z)?;
    let c_body = body_encoder(tape, bound, body_vec)?;
    let h_static = cross_attention_blocks(tape, bound, cfg, h_ctx, c_body)?;
    let deformation = prediction_head(tape, bound, "head", h_static)?;
    Ok(StaticOutputs {
        deformation,
        h_static,
    })
}

/// Packs beta and theta into the 1 x (beta_dim + theta_dim) network input.
pub fn body_input_vec(beta: &[f64], theta: &[f64]) -> Tensor {
    let data: Vec<Elem> = beta
        .iter()
        .chain(theta.iter())
        .map(|&v| v as Elem)
        .collect();
    Tensor::from_vec(1, data.len(), data).expect("sized")
}

pub fn latent_input_vec(latent: &[f64]) -> Tensor {
    let data: Vec<Elem> = latent.iter().map(|&v| v as Elem).collect();
    Tensor::from_vec(1, data.len(), data).expect("sized")
}

/// No-gradient evaluation: returns the deformation map and the static hair
/// tokens as plain tensors.
pub fn static_forward_eval(
    params: &ParamSet,
    cfg: &NetConfig,
    latent: &[f64],
    beta: &[f64],
    theta: &[f64],
) -> Result<(DeformationMap, Tensor)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let z = tape.input(latent_input_vec(latent));
    let body_vec = tape.input(body_input_vec(beta, theta));
    let out = static_forward(&mut tape, &bound, cfg, z, body_vec)?;
    let map = DeformationMap::from_tensor(tape.value(out.deformation), cfg.grid, cfg.verts_per_strand)?;
    Ok((map, tape.value(out.h_static).clone()))
}
