//! Dynamic network: per-frame motion descriptors, the recurrent motion
//! encoder (fully-connected layers + GRU), static-dynamic cross-attention
//! blocks with a pass-through initialization, the dynamic prediction head,
//! and functional regularization against the frozen static head.

use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use strandsim_autodiff::{gru_cell, linear, softmax_attention, Elem, GruWeights, Tape, Tensor, TensorId};
use strandsim_core::body::{pose_body, BodyParams, BodyRig, POSE_DIM};
use strandsim_core::geometry::{rigid_pose_hair, HairAsset, PosedHair};

use crate::config::NetConfig;
use crate::deformation::{apply_deformation, DeformationMap};
use crate::params::{BoundParams, ParamSet};
use crate::static_net::{body_input_vec, latent_input_vec, prediction_head, static_forward};
use crate::{NetError, Result};

/// Width of one per-frame motion descriptor: joint rotation velocities,
/// root-frame gravity direction and its velocity, and root-frame joint
/// position accelerations.
pub fn motion_descriptor_dim() -> usize {
    2 * POSE_DIM + 6
}

/// Width of the per-frame input to the motion encoder (descriptor + shape).
pub fn x_motion_input_dim(cfg: &NetConfig) -> usize {
    motion_descriptor_dim() + cfg.beta_dim
}

/// Per-frame kinematic descriptors over a pose window. Frames before the
/// window start are padded by repeating the first pose. Layout per frame:
/// `[0, 66)` joint rotation velocities (relative-rotation log map / dt),
/// `[66, 69)` gravity direction in the root frame, `[69, 72)` its velocity,
/// `[72, 138)` joint position accelerations in the root frame.
pub fn motion_descriptors(
    rig: &Arc<BodyRig>,
    poses: &[BodyParams],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    if poses.len() < 3 {
        return Err(NetError::WindowTooShort(poses.len()));
    }
    let n_joints = POSE_DIM / 3;
    let bodies: Vec<_> = poses
        .iter()
        .map(|p| pose_body(rig, p))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    // Root-frame joint positions and gravity per frame.
    let mut root_gravity = Vec::with_capacity(poses.len());
    let mut local_joints = Vec::with_capacity(poses.len());
    for body in &bodies {
        let root = body.joint_transforms()[0];
        let inv_rot = root.rotation.inverse();
        root_gravity.push(inv_rot * Vector3::new(0.0, -1.0, 0.0));
        let joints: Vec<Vector3<f64>> = body
            .joint_transforms()
            .iter()
            .map(|g| inv_rot * (g.translation.vector - root.translation.vector))
            .collect();
        local_joints.push(joints);
    }

    let mut out = Vec::with_capacity(poses.len());
    for f in 0..poses.len() {
        let prev = f.saturating_sub(1);
        let prev2 = f.saturating_sub(2);
        let mut m = Vec::with_capacity(motion_descriptor_dim());
        for j in 0..n_joints {
            let r_prev = UnitQuaternion::from_scaled_axis(poses[prev].joint_rotation(j));
            let r_cur = UnitQuaternion::from_scaled_axis(poses[f].joint_rotation(j));
            let rel = (r_prev.inverse() * r_cur).scaled_axis() / dt;
            m.extend_from_slice(&[rel.x, rel.y, rel.z]);
        }
        let g = root_gravity[f];
        m.extend_from_slice(&[g.x, g.y, g.z]);
        let gv = (root_gravity[f] - root_gravity[prev]) / dt;
        m.extend_from_slice(&[gv.x, gv.y, gv.z]);
        for ((cur, p1), p2) in local_joints[f]
            .iter()
            .zip(&local_joints[prev])
            .zip(&local_joints[prev2])
        {
            let a = (cur - p1 * 2.0 + p2) / (dt * dt);
            m.extend_from_slice(&[a.x, a.y, a.z]);
        }
        debug_assert_eq!(m.len(), motion_descriptor_dim());
        out.push(m);
    }
    Ok(out)
}

/// A pose window with derived descriptors and the GRU carry state.
#[derive(Debug, Clone)]
pub struct MotionWindow {
    pub poses: Vec<BodyParams>,
    pub descriptors: Vec<Vec<f64>>,
    /// GRU hidden state carried from the previous timestep (detached).
    pub hidden: Tensor,
    pub dt: f64,
}

impl MotionWindow {
    pub fn new(rig: &Arc<BodyRig>, poses: Vec<BodyParams>, dt: f64, d_m: usize) -> Result<MotionWindow> {
        let descriptors = motion_descriptors(rig, &poses, dt)?;
        Ok(MotionWindow {
            poses,
            descriptors,
            hidden: Tensor::zeros(1, d_m),
            dt,
        })
    }

    /// Replaces the pose window, recomputing descriptors; keeps the carry.
    pub fn advance(&mut self, rig: &Arc<BodyRig>, poses: Vec<BodyParams>) -> Result<()> {
        self.descriptors = motion_descriptors(rig, &poses, self.dt)?;
        self.poses = poses;
        Ok(())
    }
}

fn gru_weights(bound: &BoundParams) -> GruWeights {
    GruWeights {
        w_xz: bound.id("dyn.gru.w_xz"),
        w_hz: bound.id("dyn.gru.w_hz"),
        b_z: bound.id("dyn.gru.b_z"),
        w_xr: bound.id("dyn.gru.w_xr"),
        w_hr: bound.id("dyn.gru.w_hr"),
        b_r: bound.id("dyn.gru.b_r"),
        w_xn: bound.id("dyn.gru.w_xn"),
        w_hn: bound.id("dyn.gru.w_hn"),
        b_n: bound.id("dyn.gru.b_n"),
    }
}

/// Runs the motion encoder over the window: per-frame fully-connected layers
/// on [descriptor, shape], then the GRU from the carried hidden state. The
/// returned id is the dynamic context for this timestep (and the next carry).
pub fn dynamic_encoder_step(
    tape: &mut Tape,
    bound: &BoundParams,
    window: &MotionWindow,
) -> Result<TensorId> {
    let mut h = tape.input(window.hidden.clone());
    let w = gru_weights(bound);
    for (pose, desc) in window.poses.iter().zip(&window.descriptors) {
        let data: Vec<Elem> = desc
            .iter()
            .chain(pose.shape.iter())
            .map(|&v| v as Elem)
            .collect();
        let x = tape.input(Tensor::from_vec(1, data.len(), data).map_err(NetError::Ad)?);
        let h1 = linear(tape, x, bound.id("dyn.in.w1"), bound.id("dyn.in.b1"))?;
        let a1 = tape.relu(h1);
        let h2 = linear(tape, a1, bound.id("dyn.in.w2"), bound.id("dyn.in.b2"))?;
        let a2 = tape.relu(h2);
        h = gru_cell(tape, a2, h, &w)?;
    }
    Ok(h)
}

pub struct DynamicOutputs {
    /// L x (N*3) raw deformation rows.
    pub deformation: TensorId,
    /// L x d_m dynamic hair tokens.
    pub h_dyn: TensorId,
}

/// Static-dynamic cross-attention blocks (pre-norm with residuals) followed
/// by the dynamic prediction head. With the attention and FFN output
/// projections zero-initialized and the head copied from the static head,
/// this reproduces the static head's output exactly at initialization.
pub fn dynamic_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &NetConfig,
    h_static: TensorId,
    c_dyn: TensorId,
) -> Result<DynamicOutputs> {
    let mut h = h_static;
    for block in 0..cfg.n_sd {
        let p = format!("sd{block}");
        let n1 = tape.layernorm(
            h,
            bound.id(&format!("{p}.ln1.gain")),
            bound.id(&format!("{p}.ln1.bias")),
        )?;
        let q = linear(
            tape,
            n1,
            bound.id(&format!("{p}.attn.wq")),
            bound.id(&format!("{p}.attn.bq")),
        )?;
        let k = linear(
            tape,
            c_dyn,
            bound.id(&format!("{p}.attn.wk")),
            bound.id(&format!("{p}.attn.bk")),
        )?;
        let v = linear(
            tape,
            c_dyn,
            bound.id(&format!("{p}.attn.wv")),
            bound.id(&format!("{p}.attn.bv")),
        )?;
        let a = softmax_attention(tape, q, k, v, bound.id(&format!("{p}.attn.wo")), cfg.heads)?;
        h = tape.add(h, a)?;
        let n2 = tape.layernorm(
            h,
            bound.id(&format!("{p}.ln2.gain")),
            bound.id(&format!("{p}.ln2.bias")),
        )?;
        let f1 = linear(
            tape,
            n2,
            bound.id(&format!("{p}.ffn.w1")),
            bound.id(&format!("{p}.ffn.b1")),
        )?;
        let fa = tape.relu(f1);
        let f2 = linear(
            tape,
            fa,
            bound.id(&format!("{p}.ffn.w2")),
            bound.id(&format!("{p}.ffn.b2")),
        )?;
        h = tape.add(h, f2)?;
    }
    let deformation = prediction_head(tape, bound, "dyn_head", h)?;
    Ok(DynamicOutputs {
        deformation,
        h_dyn: h,
    })
}

/// Functional regularization: the dynamic head must stay close to the frozen
/// static head on the static hair tokens. Returns the on-tape scalar
/// `lambda_fr * MSE(dyn_head(H_static), frozen_static_head(H_static))`; no
/// gradient reaches the static head.
pub fn func_reg_loss(
    tape: &mut Tape,
    dyn_bound: &BoundParams,
    static_params: &ParamSet,
    h_static_value: &Tensor,
    lambda_fr: f64,
) -> Result<TensorId> {
    // Frozen target evaluated off-tape.
    let target_value = {
        let mut scratch = Tape::new();
        let bound = static_params.bind(&mut scratch, false);
        let h = scratch.input(h_static_value.clone());
        let out = prediction_head(&mut scratch, &bound, "head", h)?;
        scratch.value(out).clone()
    };
    let h_in = tape.input(h_static_value.clone());
    let out = prediction_head(tape, dyn_bound, "dyn_head", h_in)?;
    let target = tape.input(target_value);
    let mse = tape.mse(out, target)?;
    Ok(tape.scale(mse, lambda_fr as Elem))
}

/// One frame of a dynamic rollout.
pub struct SimulatedFrame {
    pub hair: PosedHair,
    pub static_hair: PosedHair,
    pub rigid: PosedHair,
}

/// Rolls the frozen networks over a pose sequence: per frame, rigid posing,
/// static inference, the recurrent dynamic step, and deformation application.
/// The first `t_window - 1` window slots are padded by repeating the first
/// pose. Returns one frame per input pose.
pub fn simulate_sequence(
    rig: &Arc<BodyRig>,
    asset: &Arc<HairAsset>,
    static_params: &ParamSet,
    dyn_params: &ParamSet,
    cfg: &NetConfig,
    poses: &[BodyParams],
    dt: f64,
) -> Result<Vec<SimulatedFrame>> {
    cfg.validate()?;
    let mut carry = Tensor::zeros(1, cfg.d_m);
    let mut out = Vec::with_capacity(poses.len());
    for t in 0..poses.len() {
        let window_poses: Vec<BodyParams> = (0..cfg.t_window)
            .map(|k| {
                let idx = (t + k).saturating_sub(cfg.t_window - 1);
                poses[idx.min(t)].clone()
            })
            .collect();
        let mut window = MotionWindow::new(rig, window_poses, dt, cfg.d_m)?;
        window.hidden = carry.clone();

        let body = pose_body(rig, &poses[t])?;
        let rigid = rigid_pose_hair(asset, &body)?;

        let mut tape = Tape::new();
        let static_bound = static_params.bind(&mut tape, false);
        let z = tape.input(latent_input_vec(&asset.latent));
        let body_vec = tape.input(body_input_vec(&poses[t].shape, &poses[t].pose));
        let st = static_forward(&mut tape, &static_bound, cfg, z, body_vec)?;

        let dyn_bound = dyn_params.bind(&mut tape, false);
        let c_dyn = dynamic_encoder_step(&mut tape, &dyn_bound, &window)?;
        let dy = dynamic_forward(&mut tape, &dyn_bound, cfg, st.h_static, c_dyn)?;

        let static_map =
            DeformationMap::from_tensor(tape.value(st.deformation), cfg.grid, cfg.verts_per_strand)?;
        let dyn_map =
            DeformationMap::from_tensor(tape.value(dy.deformation), cfg.grid, cfg.verts_per_strand)?;
        carry = tape.value(c_dyn).clone();

        out.push(SimulatedFrame {
            hair: apply_deformation(&rigid, &dyn_map, asset),
            static_hair: apply_deformation(&rigid, &static_map, asset),
            rigid,
        });
    }
    Ok(out)
}
