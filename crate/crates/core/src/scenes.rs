//! Deterministic synthetic scenes: the desk evaluation scenes and the
//! randomized small scenes backing the finite-difference gradient oracles.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::body::{pose_body, BodyParams, BodyRig, PosedBody};
use crate::energy::EnergyParams;
use crate::geometry::{
    generate_procedural_hair_with, latent_from_seed, rigid_pose_hair, DetRng, HairAsset,
    PosedHair, FIXED_VERTICES_PER_STRAND, LATENT_DIM,
};
use crate::Result;

/// A body, an asset, its rigid pose and a working hair state.
pub struct Scene {
    pub rig: Arc<BodyRig>,
    pub body: PosedBody,
    pub asset: Arc<HairAsset>,
    pub rigid: PosedHair,
    pub hair: PosedHair,
}

/// Long procedural hair on a head pitched forward; the strand tips start out
/// penetrating the torso. The standard desk benchmark scene.
pub fn tilted_head_scene(
    latent_seed: u64,
    grid: (usize, usize),
    verts_per_strand: usize,
    pitch_rad: f64,
) -> Result<Scene> {
    let rig = BodyRig::embedded_default();
    let mut params = BodyParams::zero();
    params.set_joint_rotation(rig.head_joint, Vector3::new(pitch_rad, 0.0, 0.0));
    let body = pose_body(&rig, &params)?;

    let latent = latent_from_seed(latent_seed);
    let asset = Arc::new(generate_procedural_hair_with(
        &latent,
        grid,
        0.05,
        verts_per_strand,
        0.55,
    )?);
    let rigid = rigid_pose_hair(&asset, &body)?;
    let hair = rigid.clone();
    Ok(Scene {
        rig,
        body,
        asset,
        rigid,
        hair,
    })
}

/// Rest-pose scene with procedurally generated hair, no perturbation.
pub fn rest_scene(
    latent_seed: u64,
    grid: (usize, usize),
    verts_per_strand: usize,
    base_length: f64,
) -> Result<Scene> {
    let rig = BodyRig::embedded_default();
    let body = pose_body(&rig, &BodyParams::zero())?;
    let latent = latent_from_seed(latent_seed);
    let asset = Arc::new(generate_procedural_hair_with(
        &latent,
        grid,
        0.0,
        verts_per_strand,
        base_length,
    )?);
    let rigid = rigid_pose_hair(&asset, &body)?;
    let hair = rigid.clone();
    Ok(Scene {
        rig,
        body,
        asset,
        rigid,
        hair,
    })
}

/// Randomized small scene for gradient checks. Movable vertices are jittered
/// and the configuration is rejection-sampled away from every non-smooth
/// locus: barrier branch boundaries, capsule-switch loci, bending clamps and
/// near-parallel close segment pairs.
pub fn perturbed_scene(
    seed: u64,
    strands: usize,
    verts_per_strand: usize,
    params: &EnergyParams,
) -> Result<Scene> {
    let mut scene = rest_scene(seed, (strands, 1), verts_per_strand, 0.25)?;
    for attempt in 0..200 {
        let mut rng = DetRng::new(seed.wrapping_mul(1000).wrapping_add(attempt));
        let mut hair = scene.rigid.clone();
        let n = hair.verts_per_strand;
        {
            let positions = hair.positions_mut();
            for s in 0..scene.asset.num_strands {
                for v in FIXED_VERTICES_PER_STRAND..n {
                    let jitter = Vector3::new(
                        rng.uniform(-6e-3, 6e-3),
                        rng.uniform(-6e-3, 6e-3),
                        rng.uniform(-6e-3, 6e-3),
                    );
                    positions[s * n + v] += jitter;
                }
            }
        }
        if scene_is_smooth(&hair, &scene.body, params) {
            scene.hair = hair;
            return Ok(scene);
        }
    }
    Err(crate::CoreError::InvalidParameter(
        "could not sample a branch-safe scene".into(),
    ))
}

/// Two wobbled strands crossing at right angles, within the hair-hair
/// activation band and far from the body. Exercises the segment-contact
/// gradients away from all non-smooth loci.
pub fn close_pair_scene(gap: f64, params: &EnergyParams) -> Result<Scene> {
    let rig = BodyRig::embedded_default();
    let body = pose_body(&rig, &BodyParams::zero())?;
    let n = 6;
    let seg = 0.004;
    let wobble = 0.0011;
    let origin = Vector3::new(5.0, 5.0, 5.0);
    let mut positions = Vec::new();
    for v in 0..n {
        let t = v as f64 - 2.3;
        let w = wobble * (1.9 * v as f64).sin();
        positions.push(origin + Vector3::new(t * seg, 0.0, w));
    }
    for v in 0..n {
        let t = v as f64 - 2.6;
        let w = wobble * (1.7 * v as f64 + 0.8).cos();
        positions.push(origin + Vector3::new(w, gap, t * seg));
    }
    let asset = Arc::new(HairAsset::from_parts(
        positions.clone(),
        vec![[0.4, 0.4], [0.6, 0.6]],
        n,
        (2, 1),
        vec![0.0; LATENT_DIM],
    )?);
    let rigid = PosedHair::new(asset.clone(), positions, body.tag().to_string());
    let hair = rigid.clone();
    let scene = Scene {
        rig,
        body,
        asset,
        rigid,
        hair,
    };
    assert!(
        scene_is_smooth(&scene.hair, &scene.body, params),
        "close pair scene must be branch-safe"
    );
    Ok(scene)
}

/// True when the configuration is safely away from every non-smooth locus of
/// the energy, so central differences are valid.
pub fn scene_is_smooth(hair: &PosedHair, body: &PosedBody, params: &EnergyParams) -> bool {
    let margin = 2e-4;
    let n = hair.verts_per_strand;
    let body_coeffs = crate::energy::barrier_coeffs(
        params.xi_body,
        params.xi_body * params.dhat_multiplier,
        params.b_p,
    )
    .expect("valid params");
    let hair_coeffs = crate::energy::barrier_coeffs(
        params.xi_hair,
        params.xi_hair * params.dhat_multiplier,
        params.b_p,
    )
    .expect("valid params");
    let s_body = body_coeffs.xi + body_coeffs.dhat;
    let s_hair = hair_coeffs.xi + hair_coeffs.dhat;

    for s in 0..hair.num_strands {
        for v in FIXED_VERTICES_PER_STRAND..n {
            let p = nalgebra::Point3::from(hair.vertex(s, v));
            // Gap between the two nearest capsules: SDF normal continuity.
            let mut d1 = f64::INFINITY;
            let mut d2 = f64::INFINITY;
            for c in body.capsules() {
                let closest = closest_on_segment(&p, c);
                let d = (p - closest).norm() - c.radius;
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                } else if d < d2 {
                    d2 = d;
                }
            }
            if (d1 - body_coeffs.d_b).abs() < margin || (d1 - s_body).abs() < margin {
                return false;
            }
            if d1 < s_body + margin && (d2 - d1) < margin {
                return false;
            }
            if d1.abs() < 1e-6 {
                return false; // on-axis normals and exact-contact corner cases
            }
        }
        // Bending clamp margins and degenerate edges.
        for i in 0..n - 2 {
            let e0 = hair.vertex(s, i + 1) - hair.vertex(s, i);
            let e1 = hair.vertex(s, i + 2) - hair.vertex(s, i + 1);
            let (n0, n1) = (e0.norm(), e1.norm());
            if n0 < 1e-5 || n1 < 1e-5 {
                return false;
            }
            let theta = (e0 / (n0 + params.eps)).dot(&(e1 / (n1 + params.eps)));
            if theta.abs() > 1.0 - 1e-3 {
                return false;
            }
        }
        for i in 0..n - 1 {
            if (hair.vertex(s, i + 1) - hair.vertex(s, i)).norm() < 1e-5 {
                return false;
            }
        }
    }

    // Hair-hair pairs: inside the band but away from its edges, not crossing,
    // not near-parallel.
    for hit in crate::energy::near_segment_pairs(hair, s_hair + margin) {
        if (hit.distance - hair_coeffs.d_b).abs() < 2e-5
            || (hit.distance - s_hair).abs() < 2e-5
            || hit.distance < 1e-5
        {
            return false;
        }
        let segs_per = n - 1;
        let (sa, ia) = (hit.seg_a as usize / segs_per, hit.seg_a as usize % segs_per);
        let (sb, ib) = (hit.seg_b as usize / segs_per, hit.seg_b as usize % segs_per);
        let da = (hair.vertex(sa, ia + 1) - hair.vertex(sa, ia)).normalize();
        let db = (hair.vertex(sb, ib + 1) - hair.vertex(sb, ib)).normalize();
        if da.dot(&db).abs() > 0.999 {
            return false;
        }
    }
    true
}

fn closest_on_segment(
    p: &nalgebra::Point3<f64>,
    c: &crate::body::PosedCapsule,
) -> nalgebra::Point3<f64> {
    let ab = c.b - c.a;
    let t = ((p - c.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    c.a + ab * t
}
