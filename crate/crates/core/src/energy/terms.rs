//! Strand-local physics loss terms with analytic gradients: stretching,
//! bending, shape preservation, smoothness, gravity, root alignment and
//! inertia. Gradients on the two fixed vertices of every strand are zero.

use nalgebra::Vector3;

use crate::body::PosedBody;
use crate::geometry::{HairAsset, PosedHair, FIXED_VERTICES_PER_STRAND};

use super::EnergyParams;

pub type Grad = Vec<Vector3<f64>>;

pub(crate) fn zero_fixed(grad: &mut [Vector3<f64>], verts_per_strand: usize) {
    for chunk in grad.chunks_mut(verts_per_strand) {
        for g in chunk.iter_mut().take(FIXED_VERTICES_PER_STRAND) {
            *g = Vector3::zeros();
        }
    }
}

/// Elastic stretch penalty: mean squared deviation of segment lengths from
/// their rest lengths, scaled by `k_stretch`.
pub fn stretch_loss(hair: &PosedHair, asset: &HairAsset, p: &EnergyParams) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let norm = 1.0 / (m * (n - 1)) as f64;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    for s in 0..m {
        for i in 0..n - 1 {
            let e = hair.vertex(s, i + 1) - hair.vertex(s, i);
            let len = e.norm();
            let rest = asset.rest_length(s, i);
            let diff = len - rest;
            loss += diff * diff;
            if len > 1e-12 {
                let g = e * (2.0 * p.k_stretch * norm * diff / len);
                grad[s * n + i + 1] += g;
                grad[s * n + i] -= g;
            }
        }
    }
    zero_fixed(&mut grad, n);
    (p.k_stretch * norm * loss, grad)
}

/// Bending penalty: accumulated turning angles between consecutive segments.
/// Joints with a degenerate edge contribute zero; the arccos argument is
/// clamped away from +-1 and the clamped region takes a zero subgradient.
/// Unnormalized sum by default; `normalize_bending` divides by M(N-2).
pub fn bending_loss(hair: &PosedHair, p: &EnergyParams) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let scale = if p.normalize_bending {
        p.k_bend / (m * (n - 2)) as f64
    } else {
        p.k_bend
    };
    let eps = p.eps;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    for s in 0..m {
        for i in 0..n - 2 {
            let e0 = hair.vertex(s, i + 1) - hair.vertex(s, i);
            let e1 = hair.vertex(s, i + 2) - hair.vertex(s, i + 1);
            let n0 = e0.norm();
            let n1 = e1.norm();
            if n0 <= eps || n1 <= eps {
                continue;
            }
            let u = e0 / (n0 + eps);
            let v = e1 / (n1 + eps);
            let theta = u.dot(&v);
            let clamped = theta.clamp(-1.0 + eps, 1.0 - eps);
            loss += clamped.acos();
            if theta <= -1.0 + eps || theta >= 1.0 - eps {
                continue; // clamped: zero subgradient
            }
            let dalpha = -1.0 / (1.0 - theta * theta).sqrt();
            // d theta / d e0 and / d e1 under the eps-regularized normalization
            let dt_de0 = v / (n0 + eps) - e0 * (e0.dot(&v) / (n0 * (n0 + eps) * (n0 + eps)));
            let dt_de1 = u / (n1 + eps) - e1 * (e1.dot(&u) / (n1 * (n1 + eps) * (n1 + eps)));
            let c = scale * dalpha;
            grad[s * n + i] += -dt_de0 * c;
            grad[s * n + i + 1] += (dt_de0 - dt_de1) * c;
            grad[s * n + i + 2] += dt_de1 * c;
        }
    }
    zero_fixed(&mut grad, n);
    (scale * loss, grad)
}

/// Deviation from the rigidly posed configuration, averaged over coordinates.
pub fn aux_loss(hair: &PosedHair, rigid: &PosedHair, p: &EnergyParams) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let norm = 1.0 / (3 * m * n) as f64;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    for (idx, (a, b)) in hair.positions().iter().zip(rigid.positions()).enumerate() {
        let d = a - b;
        loss += d.norm_squared();
        grad[idx] = d * (2.0 * p.lambda_aux * norm);
    }
    zero_fixed(&mut grad, n);
    (p.lambda_aux * norm * loss, grad)
}

/// Second-difference smoothness over interior vertices.
pub fn smoothness_loss(hair: &PosedHair, p: &EnergyParams) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let norm = 1.0 / (m * (n - 2)) as f64;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    for s in 0..m {
        for v in 1..n - 1 {
            let lap = hair.vertex(s, v + 1) - hair.vertex(s, v) * 2.0 + hair.vertex(s, v - 1);
            loss += lap.norm_squared();
            let g = lap * (2.0 * p.lambda_smooth * norm);
            grad[s * n + v + 1] += g;
            grad[s * n + v] -= g * 2.0;
            grad[s * n + v - 1] += g;
        }
    }
    zero_fixed(&mut grad, n);
    (p.lambda_smooth * norm * loss, grad)
}

/// Gravitational potential of the moving vertices (signed).
pub fn gravity_loss(hair: &PosedHair, p: &EnergyParams) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    let mg = p.gravity_vec() * p.vertex_mass;
    for s in 0..m {
        for v in FIXED_VERTICES_PER_STRAND..n {
            loss -= mg.dot(&hair.vertex(s, v));
            grad[s * n + v] = -mg;
        }
    }
    (loss, grad)
}

/// Alignment of the first moving segments with the scalp normals.
pub fn root_alignment_loss(
    hair: &PosedHair,
    body: &PosedBody,
    asset: &HairAsset,
    p: &EnergyParams,
) -> (f64, Grad) {
    let n = hair.verts_per_strand;
    let m = hair.num_strands;
    let k = p.root_align_segments.min(n - 2).max(1);
    let norm = 1.0 / (m * k) as f64;
    let eps = p.eps_norm;
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut mean_dot = 0.0;
    for s in 0..m {
        let (_, normal) = body.scalp_frame(asset.root_uv(s));
        for i in 1..=k {
            let e = hair.vertex(s, i + 1) - hair.vertex(s, i);
            let len = e.norm();
            let dir = e / (len + eps);
            mean_dot += dir.dot(&normal);
            if len > 1e-12 {
                let dd_de =
                    normal / (len + eps) - e * (e.dot(&normal) / (len * (len + eps) * (len + eps)));
                let g = dd_de * (-p.lambda_root * norm);
                grad[s * n + i + 1] += g;
                grad[s * n + i] -= g;
            }
        }
    }
    zero_fixed(&mut grad, n);
    (p.lambda_root * (1.0 - norm * mean_dot), grad)
}

/// Gradients of the inertia loss. History buffers are identically zero: the
/// loss never back-propagates through previous states.
pub struct InertiaGrads {
    pub current: Grad,
    pub prev1: Grad,
    pub prev2: Grad,
}

/// Deviation from the constant-velocity extrapolation of the two previous
/// states, over moving vertices only.
pub fn inertia_loss(
    current: &PosedHair,
    prev1: &PosedHair,
    prev2: &PosedHair,
    p: &EnergyParams,
) -> (f64, InertiaGrads) {
    let n = current.verts_per_strand;
    let m = current.num_strands;
    assert_eq!(prev1.num_strands, m);
    assert_eq!(prev2.num_strands, m);
    assert_eq!(prev1.verts_per_strand, n);
    assert_eq!(prev2.verts_per_strand, n);
    let n_mov = n - FIXED_VERTICES_PER_STRAND;
    let norm = p.lambda_inertia / (m * n_mov) as f64;
    let coeff = p.vertex_mass / (2.0 * p.dt * p.dt);
    let mut grad = vec![Vector3::zeros(); m * n];
    let mut loss = 0.0;
    for s in 0..m {
        for v in FIXED_VERTICES_PER_STRAND..n {
            let proj = prev1.vertex(s, v) * 2.0 - prev2.vertex(s, v);
            let dev = current.vertex(s, v) - proj;
            loss += coeff * dev.norm_squared();
            grad[s * n + v] = dev * (2.0 * coeff * norm);
        }
    }
    (
        norm * loss,
        InertiaGrads {
            current: grad,
            prev1: vec![Vector3::zeros(); m * n],
            prev2: vec![Vector3::zeros(); m * n],
        },
    )
}
