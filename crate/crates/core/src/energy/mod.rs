//! Physics loss terms with analytic gradients over movable vertices, and the
//! combined static/dynamic totals.

pub mod barrier;
pub mod contact;
pub mod terms;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body::PosedBody;
use crate::geometry::{HairAsset, PosedHair};
use crate::{CoreError, Result};

pub use barrier::{barrier, barrier_coeffs, barrier_d, BarrierCoeffs};
pub use contact::{body_contact_loss, hair_contact_loss, near_segment_pairs, PairHit};
pub use terms::{
    aux_loss, bending_loss, gravity_loss, inertia_loss, root_alignment_loss, smoothness_loss,
    stretch_loss, Grad, InertiaGrads,
};

/// Weights, material constants and barrier settings for all loss terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub k_stretch: f64,
    pub k_bend: f64,
    pub lambda_aux: f64,
    pub lambda_smooth: f64,
    pub lambda_contact: f64,
    pub lambda_root: f64,
    pub lambda_inertia: f64,
    pub lambda_func_reg: f64,
    /// Mass per moving vertex, kg.
    pub vertex_mass: f64,
    pub gravity: [f64; 3],
    pub eps: f64,
    pub eps_norm: f64,
    /// Number of initial moving segments entering root alignment.
    pub root_align_segments: usize,
    /// Timestep for the inertia term, seconds.
    pub dt: f64,
    /// Hard barrier distance for hair-body contact, meters.
    pub xi_body: f64,
    /// Hard barrier distance for hair-hair contact (guide strand diameter).
    pub xi_hair: f64,
    /// Soft barrier = multiplier * hard barrier.
    pub dhat_multiplier: f64,
    /// Join-point fraction of the quartic extrapolation, in (0, 1).
    pub b_p: f64,
    /// Divide the bending sum by M(N-2) instead of keeping the raw sum.
    pub normalize_bending: bool,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            k_stretch: 50.0,
            k_bend: 0.01,
            lambda_aux: 1.0,
            lambda_smooth: 0.1,
            lambda_contact: 1e3,
            lambda_root: 0.1,
            lambda_inertia: 1.0,
            lambda_func_reg: 1.0,
            vertex_mass: 1e-5,
            gravity: [0.0, -9.81, 0.0],
            eps: 1e-7,
            eps_norm: 1e-8,
            root_align_segments: 3,
            dt: 1.0 / 60.0,
            xi_body: 1e-3,
            xi_hair: 5e-4,
            dhat_multiplier: 1.5,
            b_p: 0.01,
            normalize_bending: false,
        }
    }
}

impl EnergyParams {
    pub fn gravity_vec(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("k_stretch", self.k_stretch),
            ("k_bend", self.k_bend),
            ("lambda_aux", self.lambda_aux),
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_contact", self.lambda_contact),
            ("lambda_root", self.lambda_root),
            ("lambda_inertia", self.lambda_inertia),
            ("lambda_func_reg", self.lambda_func_reg),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let positive = [
            ("vertex_mass", self.vertex_mass),
            ("eps", self.eps),
            ("eps_norm", self.eps_norm),
            ("dt", self.dt),
            ("xi_body", self.xi_body),
            ("xi_hair", self.xi_hair),
            ("dhat_multiplier", self.dhat_multiplier),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.b_p > 0.0 && self.b_p < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "b_p must lie in (0, 1), got {}",
                self.b_p
            )));
        }
        if self.root_align_segments == 0 {
            return Err(CoreError::InvalidParameter(
                "root_align_segments must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term loss values.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct EnergyTerms {
    pub stretch: f64,
    pub bending: f64,
    pub aux: f64,
    pub smooth: f64,
    pub gravity: f64,
    pub contact_body: f64,
    pub contact_hair: f64,
    pub root_align: f64,
    pub inertia: f64,
    pub func_reg: f64,
}

impl EnergyTerms {
    pub fn static_sum(&self) -> f64 {
        self.stretch
            + self.bending
            + self.aux
            + self.smooth
            + self.gravity
            + self.contact_body
            + self.contact_hair
            + self.root_align
    }

    pub fn dynamic_sum(&self) -> f64 {
        self.static_sum() + self.inertia + self.func_reg
    }
}

/// Per-term losses plus the total, with the gradient over movable vertices.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub terms: EnergyTerms,
    pub total: f64,
    pub grad: Grad,
}

impl EnergyReport {
    /// Structured-text record: term name to value, plus the total.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self.terms).expect("terms serialize");
        v["total"] = serde_json::json!(self.total);
        v
    }
}

fn add_grad(acc: &mut Grad, g: &Grad) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += *b;
    }
}

/// Total static loss: stretch, bending, aux, smoothness, gravity, both
/// contact terms and root alignment, with per-term breakdown.
pub fn total_static_loss(
    hair: &PosedHair,
    rigid: &PosedHair,
    body: &PosedBody,
    asset: &HairAsset,
    params: &EnergyParams,
) -> EnergyReport {
    let (stretch, g_s) = stretch_loss(hair, asset, params);
    let (bending, g_b) = bending_loss(hair, params);
    let (aux, g_a) = aux_loss(hair, rigid, params);
    let (smooth, g_sm) = smoothness_loss(hair, params);
    let (gravity, g_g) = gravity_loss(hair, params);
    let (contact_body, g_cb) = body_contact_loss(hair, body, params);
    let (contact_hair, g_ch) = hair_contact_loss(hair, params);
    let (root_align, g_r) = root_alignment_loss(hair, body, asset, params);

    let mut grad = g_s;
    for g in [&g_b, &g_a, &g_sm, &g_g, &g_cb, &g_ch, &g_r] {
        add_grad(&mut grad, g);
    }
    let terms = EnergyTerms {
        stretch,
        bending,
        aux,
        smooth,
        gravity,
        contact_body,
        contact_hair,
        root_align,
        inertia: 0.0,
        func_reg: 0.0,
    };
    EnergyReport {
        total: terms.static_sum(),
        terms,
        grad,
    }
}

/// Total dynamic loss: the static total plus inertia against the two previous
/// states and an externally supplied functional-regularization value (whose
/// gradient lives in network parameter space, not vertex space).
#[allow(clippy::too_many_arguments)]
pub fn total_dynamic_loss(
    hair: &PosedHair,
    rigid: &PosedHair,
    prev1: &PosedHair,
    prev2: &PosedHair,
    body: &PosedBody,
    asset: &HairAsset,
    params: &EnergyParams,
    func_reg: f64,
) -> EnergyReport {
    let mut report = total_static_loss(hair, rigid, body, asset, params);
    let (inertia, g_i) = inertia_loss(hair, prev1, prev2, params);
    add_grad(&mut report.grad, &g_i.current);
    report.terms.inertia = inertia;
    report.terms.func_reg = func_reg;
    report.total = report.terms.dynamic_sum();
    report
}
