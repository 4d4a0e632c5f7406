//! Per-term behavior tests and finite-difference gradient oracles for the
//! physics losses.

use std::sync::Arc;

use nalgebra::Vector3;
use strandsim_core::body::{pose_body, BodyParams, BodyRig};
use strandsim_core::energy::{
    aux_loss, barrier, barrier_coeffs, bending_loss, body_contact_loss, gravity_loss,
    hair_contact_loss, inertia_loss, near_segment_pairs, root_alignment_loss, smoothness_loss,
    stretch_loss, total_static_loss, EnergyParams, Grad,
};
use strandsim_core::geometry::{HairAsset, PosedHair, FIXED_VERTICES_PER_STRAND, LATENT_DIM};
use strandsim_core::gradcheck::{central_diff, max_rel_error};
use strandsim_core::scenes::{close_pair_scene, perturbed_scene, rest_scene, Scene};

const FD_H: f64 = 3e-6; // 1e-5 of the ~0.3 m scene scale

fn single_strand(points: &[Vector3<f64>]) -> PosedHair {
    let asset = Arc::new(
        HairAsset::from_parts(
            points.to_vec(),
            vec![[0.5, 0.5]],
            points.len(),
            (1, 1),
            vec![0.0; LATENT_DIM],
        )
        .unwrap(),
    );
    PosedHair::new(asset.clone(), points.to_vec(), "test".into())
}

/// Flattens the movable coordinates; keeps fixed vertices pinned.
fn movable_dofs(hair: &PosedHair) -> Vec<f64> {
    let n = hair.verts_per_strand;
    let mut x = Vec::new();
    for s in 0..hair.num_strands {
        for v in FIXED_VERTICES_PER_STRAND..n {
            let p = hair.vertex(s, v);
            x.extend_from_slice(&[p.x, p.y, p.z]);
        }
    }
    x
}

fn with_dofs(hair: &PosedHair, x: &[f64]) -> PosedHair {
    let mut out = hair.clone();
    let n = out.verts_per_strand;
    let m = out.num_strands;
    let positions = out.positions_mut();
    let mut k = 0;
    for s in 0..m {
        for v in FIXED_VERTICES_PER_STRAND..n {
            positions[s * n + v] = Vector3::new(x[k], x[k + 1], x[k + 2]);
            k += 3;
        }
    }
    out
}

fn movable_grad(hair: &PosedHair, grad: &Grad) -> Vec<f64> {
    let n = hair.verts_per_strand;
    let mut g = Vec::new();
    for s in 0..hair.num_strands {
        for v in FIXED_VERTICES_PER_STRAND..n {
            let gv = grad[s * n + v];
            g.extend_from_slice(&[gv.x, gv.y, gv.z]);
        }
    }
    g
}

fn assert_fixed_grads_zero(hair: &PosedHair, grad: &Grad) {
    let n = hair.verts_per_strand;
    for s in 0..hair.num_strands {
        for v in 0..FIXED_VERTICES_PER_STRAND {
            assert_eq!(grad[s * n + v], Vector3::zeros(), "fixed vertex grad");
        }
    }
}

fn check_term<F>(scene: &Scene, term: F, tol: f64)
where
    F: Fn(&PosedHair) -> (f64, Grad),
{
    let (_, grad) = term(&scene.hair);
    assert_fixed_grads_zero(&scene.hair, &grad);
    let analytic = movable_grad(&scene.hair, &grad);
    let x0 = movable_dofs(&scene.hair);
    let fd = central_diff(|x| term(&with_dofs(&scene.hair, x)).0, &x0, FD_H);
    let err = max_rel_error(&analytic, &fd);
    assert!(err < tol, "gradient mismatch: rel err {err}");
}

// --- stretch ---

#[test]
fn stretch_zero_at_rest() {
    let scene = rest_scene(3, (3, 2), 12, 0.3).unwrap();
    let (loss, grad) = stretch_loss(&scene.hair, &scene.asset, &EnergyParams::default());
    assert!(loss.abs() < 1e-18);
    assert!(grad.iter().all(|g| g.norm() < 1e-12));
}

#[test]
fn stretch_two_vertex_unit_case() {
    let hair = single_strand(&[Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)]);
    let mut stretched = hair.clone();
    stretched.positions_mut()[1] = Vector3::new(2.0, 0.0, 0.0);
    let params = EnergyParams {
        k_stretch: 1.0,
        ..Default::default()
    };
    let (loss, _) = stretch_loss(&stretched, &hair.source, &params);
    assert!((loss - 1.0).abs() < 1e-12);
}

#[test]
fn stretch_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(11, 3, 8, &params).unwrap();
    let asset = scene.asset.clone();
    check_term(&scene, move |h| stretch_loss(h, &asset, &params), 1e-4);
}

// --- bending ---

#[test]
fn bending_zero_for_straight_strand() {
    let params = EnergyParams::default();
    // Long segments: the regularized cosine clamps, so each joint costs at
    // most arccos(1 - eps).
    let pts: Vec<_> = (0..8)
        .map(|i| Vector3::new(10.0 * i as f64, 0.0, 0.0))
        .collect();
    let hair = single_strand(&pts);
    let (loss, grad) = bending_loss(&hair, &params);
    let per_joint = (1.0f64 - params.eps).acos();
    assert!(loss <= params.k_bend * per_joint * 6.0 + 1e-12);
    assert!(grad.iter().all(|g| *g == Vector3::zeros()));

    // Physical-scale straight segments: the eps regularization leaves a tiny
    // residual angle of about sqrt(2 eps / len) per joint.
    let pts: Vec<_> = (0..8)
        .map(|i| Vector3::new(0.01 * i as f64, 0.0, 0.0))
        .collect();
    let hair = single_strand(&pts);
    let (loss, _) = bending_loss(&hair, &params);
    let residual = (2.0 * 2.0 * params.eps / 0.01).sqrt();
    assert!(loss <= params.k_bend * residual * 6.0 * 1.05);
}

#[test]
fn bending_right_angle() {
    let hair = single_strand(&[
        Vector3::zeros(),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(1.0, 1.0, 0.0),
    ]);
    let params = EnergyParams {
        k_bend: 1.0,
        ..Default::default()
    };
    let (loss, _) = bending_loss(&hair, &params);
    assert!((loss - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn bending_degenerate_edge_contributes_zero() {
    let base = vec![
        Vector3::zeros(),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(1.0, 1.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
    ];
    let params = EnergyParams {
        k_bend: 1.0,
        ..Default::default()
    };
    let full = single_strand(&base);
    let (loss_full, _) = bending_loss(&full, &params);

    // Collapse the last edge: its two adjacent joints lose their angles.
    let mut degen_pts = base.clone();
    degen_pts[3] = degen_pts[2];
    let asset = Arc::new(
        HairAsset::from_parts(base, vec![[0.5, 0.5]], 4, (1, 1), vec![0.0; LATENT_DIM]).unwrap(),
    );
    let degen = PosedHair::new(asset, degen_pts, "test".into());
    let (loss_degen, _) = bending_loss(&degen, &params);
    assert!(loss_full > 1.0);
    // Only the first joint (between edges 0 and 1) remains.
    assert!((loss_degen - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn bending_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(13, 3, 8, &params).unwrap();
    check_term(&scene, move |h| bending_loss(h, &params), 1e-4);
}

// --- aux ---

#[test]
fn aux_zero_at_rigid_and_uniform_offset() {
    let scene = rest_scene(5, (3, 2), 10, 0.3).unwrap();
    let params = EnergyParams::default();
    let (loss, _) = aux_loss(&scene.hair, &scene.rigid, &params);
    assert_eq!(loss, 0.0);

    let delta = Vector3::new(0.01, -0.02, 0.005);
    let mut shifted = scene.rigid.clone();
    for p in shifted.positions_mut() {
        *p += delta;
    }
    let (loss, grad) = aux_loss(&shifted, &scene.rigid, &params);
    assert!((loss - params.lambda_aux * delta.norm_squared() / 3.0).abs() < 1e-14);

    // Per-vertex gradient closed form on movable vertices.
    let n = shifted.verts_per_strand;
    let m = shifted.num_strands;
    let expected = delta * (2.0 * params.lambda_aux / (3 * m * n) as f64);
    for s in 0..m {
        for v in FIXED_VERTICES_PER_STRAND..n {
            assert!((grad[s * n + v] - expected).norm() < 1e-15);
        }
    }
}

#[test]
fn aux_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(17, 2, 8, &params).unwrap();
    let rigid = scene.rigid.clone();
    check_term(&scene, move |h| aux_loss(h, &rigid, &params), 1e-6);
}

// --- smoothness ---

#[test]
fn smoothness_zero_for_equally_spaced() {
    let pts: Vec<_> = (0..9)
        .map(|i| Vector3::new(0.02 * i as f64, -0.01 * i as f64, 0.0))
        .collect();
    let hair = single_strand(&pts);
    let (loss, _) = smoothness_loss(&hair, &EnergyParams::default());
    assert!(loss < 1e-24);
}

#[test]
fn smoothness_three_vertex_case() {
    let hair = single_strand(&[
        Vector3::zeros(),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(2.0, 1.0, 0.0),
    ]);
    let params = EnergyParams {
        lambda_smooth: 1.0,
        ..Default::default()
    };
    let (loss, _) = smoothness_loss(&hair, &params);
    assert!((loss - 1.0).abs() < 1e-12);
}

#[test]
fn smoothness_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(19, 3, 7, &params).unwrap();
    check_term(&scene, move |h| smoothness_loss(h, &params), 1e-4);
}

// --- gravity ---

#[test]
fn gravity_linear_in_height_and_fixed_excluded() {
    let params = EnergyParams::default();
    let scene = rest_scene(7, (2, 2), 10, 0.3).unwrap();
    let (loss0, grad) = gravity_loss(&scene.hair, &params);

    let h = 0.05;
    let n = scene.hair.verts_per_strand;
    let mut lowered = scene.hair.clone();
    {
        let positions = lowered.positions_mut();
        for s in 0..scene.hair.num_strands {
            for v in FIXED_VERTICES_PER_STRAND..n {
                positions[s * n + v].y -= h;
            }
        }
    }
    let (loss1, _) = gravity_loss(&lowered, &params);
    let movable = scene.hair.num_strands * (n - FIXED_VERTICES_PER_STRAND);
    let expected_drop = movable as f64 * params.vertex_mass * 9.81 * h;
    assert!((loss0 - loss1 - expected_drop).abs() < 1e-12);

    // Moving only the fixed vertices changes nothing.
    let mut roots_moved = scene.hair.clone();
    {
        let positions = roots_moved.positions_mut();
        for s in 0..scene.hair.num_strands {
            for v in 0..FIXED_VERTICES_PER_STRAND {
                positions[s * n + v].y += 1.0;
            }
        }
    }
    let (loss2, _) = gravity_loss(&roots_moved, &params);
    assert_eq!(loss0, loss2);

    // Constant gradient -m*g on every movable vertex.
    let expected = -params.gravity_vec() * params.vertex_mass;
    for s in 0..scene.hair.num_strands {
        for v in FIXED_VERTICES_PER_STRAND..n {
            assert_eq!(grad[s * n + v], expected);
        }
    }
}

// --- root alignment ---

#[test]
fn root_alignment_limits() {
    let rig = BodyRig::embedded_default();
    let body = pose_body(&rig, &BodyParams::zero()).unwrap();
    let params = EnergyParams::default();

    // Strands built straight along their scalp normals: mean dot ~ 1.
    let scene = rest_scene(0, (3, 3), 10, 0.3).unwrap(); // zero-latent seed 0?
    let latent = vec![0.0; LATENT_DIM];
    let asset = Arc::new(
        strandsim_core::geometry::generate_procedural_hair_with(&latent, (3, 3), 0.0, 10, 0.3)
            .unwrap(),
    );
    let rigid = strandsim_core::geometry::rigid_pose_hair(&asset, &body).unwrap();
    let (loss, _) = root_alignment_loss(&rigid, &body, &asset, &params);
    assert!(loss.abs() < 1e-5 * params.lambda_root.max(1.0));

    // Antiparallel: flip the strands through their roots.
    let mut flipped = rigid.clone();
    let n = flipped.verts_per_strand;
    {
        let positions = flipped.positions_mut();
        for s in 0..rigid.num_strands {
            let root = positions[s * n];
            for v in 1..n {
                let p = positions[s * n + v];
                positions[s * n + v] = root * 2.0 - p;
            }
        }
    }
    let (loss, _) = root_alignment_loss(&flipped, &body, &asset, &params);
    assert!((loss - 2.0 * params.lambda_root).abs() < 1e-4);
    let _ = scene;
}

#[test]
fn root_alignment_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(23, 3, 8, &params).unwrap();
    let body = scene.body.clone();
    let asset = scene.asset.clone();
    check_term(
        &scene,
        move |h| root_alignment_loss(h, &body, &asset, &params),
        1e-4,
    );
}

// --- inertia ---

#[test]
fn inertia_zero_on_constant_velocity() {
    let params = EnergyParams::default();
    let scene = rest_scene(9, (2, 2), 8, 0.3).unwrap();
    let vel = Vector3::new(0.01, -0.004, 0.002);
    let mut prev1 = scene.hair.clone();
    let mut cur = scene.hair.clone();
    for p in prev1.positions_mut() {
        *p += vel;
    }
    for p in cur.positions_mut() {
        *p += vel * 2.0;
    }
    let (loss, grads) = inertia_loss(&cur, &prev1, &scene.hair, &params);
    assert!(loss < 1e-24);
    assert!(grads.prev1.iter().all(|g| *g == Vector3::zeros()));
    assert!(grads.prev2.iter().all(|g| *g == Vector3::zeros()));
}

#[test]
fn inertia_history_gets_no_gradient_but_changes_value() {
    let params = EnergyParams::default();
    let scene = rest_scene(10, (2, 1), 8, 0.3).unwrap();
    let (loss0, _) = inertia_loss(&scene.hair, &scene.hair, &scene.hair, &params);
    assert_eq!(loss0, 0.0);

    let mut prev1 = scene.hair.clone();
    prev1.positions_mut()[5] += Vector3::new(0.01, 0.0, 0.0);
    let (loss1, grads) = inertia_loss(&scene.hair, &prev1, &scene.hair, &params);
    assert!(loss1 > 0.0);
    assert!(grads.prev1.iter().all(|g| *g == Vector3::zeros()));
    assert!(grads.prev2.iter().all(|g| *g == Vector3::zeros()));
}

#[test]
fn inertia_single_vertex_deviation_closed_form() {
    let params = EnergyParams::default();
    let scene = rest_scene(12, (2, 2), 8, 0.3).unwrap();
    let delta = Vector3::new(0.003, 0.001, -0.002);
    let mut cur = scene.hair.clone();
    let n = cur.verts_per_strand;
    cur.positions_mut()[n + 4] += delta; // strand 1, vertex 4 (movable)
    let (loss, _) = inertia_loss(&cur, &scene.hair, &scene.hair, &params);
    let m = scene.hair.num_strands;
    let n_mov = n - FIXED_VERTICES_PER_STRAND;
    let expected = params.lambda_inertia * params.vertex_mass * delta.norm_squared()
        / (2.0 * params.dt * params.dt * (m * n_mov) as f64);
    assert!((loss - expected).abs() < 1e-15 + expected * 1e-12);
}

#[test]
fn inertia_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(29, 2, 7, &params).unwrap();
    let prev1 = scene.rigid.clone();
    let prev2 = scene.rigid.clone();
    check_term(
        &scene,
        move |h| {
            let (l, g) = inertia_loss(h, &prev1, &prev2, &params);
            (l, g.current)
        },
        1e-4,
    );
}

// --- contacts ---

#[test]
fn body_contact_zero_when_far() {
    let params = EnergyParams::default();
    let pts: Vec<_> = (0..6)
        .map(|i| Vector3::new(3.0 + 0.01 * i as f64, 3.0, 3.0))
        .collect();
    let hair = single_strand(&pts);
    let rig = BodyRig::embedded_default();
    let body = pose_body(&rig, &BodyParams::zero()).unwrap();
    let (loss, grad) = body_contact_loss(&hair, &body, &params);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == Vector3::zeros()));
}

#[test]
fn body_contact_penetration_is_positive_finite_and_repulsive() {
    let params = EnergyParams::default();
    let rig = BodyRig::embedded_default();
    let body = pose_body(&rig, &BodyParams::zero()).unwrap();

    // A strand ending deep inside the chest capsule.
    let chest = &body.capsules()[2];
    let center = nalgebra::center(&chest.a, &chest.b);
    let outside = Vector3::new(center.x + 0.5, center.y, center.z);
    let pts: Vec<_> = (0..8)
        .map(|i| {
            let t = i as f64 / 7.0;
            outside * (1.0 - t) + center.coords * t
        })
        .collect();
    let hair = single_strand(&pts);
    let (loss, grad) = body_contact_loss(&hair, &body, &params);
    assert!(loss.is_finite() && loss > 0.0);

    // Moving a deeply penetrating vertex along +n decreases the loss.
    let tip = 7;
    let (d, n_dir) = body.signed_distance(&nalgebra::Point3::from(hair.vertex(0, tip)));
    assert!(d < -0.01, "tip should penetrate deeply, d = {d}");
    let step = 1e-6;
    let mut moved = hair.clone();
    moved.positions_mut()[tip] += n_dir * step;
    let (loss_moved, _) = body_contact_loss(&moved, &body, &params);
    assert!(loss_moved < loss);
    // and the analytic gradient agrees with that direction
    assert!(grad[tip].dot(&n_dir) < 0.0 || grad[tip] == Vector3::zeros());
}

#[test]
fn body_contact_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(31, 3, 8, &params).unwrap();
    let body = scene.body.clone();
    check_term(&scene, move |h| body_contact_loss(h, &body, &params), 1e-4);
}

#[test]
fn hair_contact_zero_when_separated() {
    let params = EnergyParams::default();
    let scene = close_pair_scene(0.05, &params).unwrap(); // 5 cm apart
    let (loss, grad) = hair_contact_loss(&scene.hair, &params);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == Vector3::zeros()));
}

#[test]
fn hair_contact_crossing_pair_value() {
    let params = EnergyParams::default();
    // Two segments crossing at distance zero, far from the body.
    let origin = Vector3::new(5.0, 5.0, 5.0);
    let mut positions = Vec::new();
    for v in 0..4 {
        positions.push(origin + Vector3::new(0.004 * (v as f64 - 1.5), 0.0, 0.0));
    }
    for v in 0..4 {
        positions.push(origin + Vector3::new(0.0, 0.0, 0.004 * (v as f64 - 1.5)));
    }
    let asset = Arc::new(
        HairAsset::from_parts(
            positions.clone(),
            vec![[0.4, 0.4], [0.6, 0.6]],
            4,
            (2, 1),
            vec![0.0; LATENT_DIM],
        )
        .unwrap(),
    );
    let hair = PosedHair::new(asset, positions, "test".into());
    let (loss, _) = hair_contact_loss(&hair, &params);
    let coeffs = barrier_coeffs(
        params.xi_hair,
        params.xi_hair * params.dhat_multiplier,
        params.b_p,
    )
    .unwrap();
    // The crossing contributes B(0); nearby same-strand pairs are excluded,
    // and other cross-strand pairs may add a little more.
    let b0 = params.lambda_contact * barrier(&coeffs, 0.0);
    assert!(loss >= b0 * 0.999);
    assert!(loss.is_finite());
}

#[test]
fn hair_pair_candidates_match_brute_force() {
    let params = EnergyParams::default();
    // Small scene with strands pushed together so pairs exist.
    let scene = close_pair_scene(8e-4, &params).unwrap();
    let activation = params.xi_hair * (1.0 + params.dhat_multiplier);
    let hits = near_segment_pairs(&scene.hair, activation);
    let got: Vec<(u32, u32)> = hits.iter().map(|h| (h.seg_a, h.seg_b)).collect();

    // Brute force over all segment pairs.
    let n = scene.hair.verts_per_strand;
    let per = n - 1;
    let count = scene.hair.num_strands * per;
    let mut expected = Vec::new();
    for a in 0..count {
        for b in (a + 1)..count {
            let (sa, ia) = (a / per, a % per);
            let (sb, ib) = (b / per, b % per);
            if sa == sb && ia.abs_diff(ib) <= 2 {
                continue;
            }
            let (_, _, d) = strandsim_core::energy::contact::segment_segment_distance(
                &scene.hair.vertex(sa, ia),
                &scene.hair.vertex(sa, ia + 1),
                &scene.hair.vertex(sb, ib),
                &scene.hair.vertex(sb, ib + 1),
            );
            if d < activation {
                expected.push((a as u32, b as u32));
            }
        }
    }
    assert_eq!(got, expected);
    assert!(!expected.is_empty(), "scene should produce near pairs");
}

#[test]
fn hair_contact_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = close_pair_scene(8e-4, &params).unwrap();
    check_term(&scene, move |h| hair_contact_loss(h, &params), 1e-4);
}

// --- totals ---

#[test]
fn total_zero_when_all_weights_zero() {
    let params = EnergyParams {
        k_stretch: 0.0,
        k_bend: 0.0,
        lambda_aux: 0.0,
        lambda_smooth: 0.0,
        lambda_contact: 0.0,
        lambda_root: 0.0,
        lambda_inertia: 0.0,
        lambda_func_reg: 0.0,
        vertex_mass: 1e-30,
        ..Default::default()
    };
    let scene = perturbed_scene(37, 2, 6, &EnergyParams::default()).unwrap();
    let report = total_static_loss(&scene.hair, &scene.rigid, &scene.body, &scene.asset, &params);
    assert!(report.total.abs() < 1e-20);
    assert!(report.grad.iter().all(|g| g.norm() < 1e-20));
}

#[test]
fn total_equals_sum_of_terms() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(41, 2, 8, &params).unwrap();
    let report = total_static_loss(&scene.hair, &scene.rigid, &scene.body, &scene.asset, &params);
    let t = &report.terms;
    let sum = t.stretch
        + t.bending
        + t.aux
        + t.smooth
        + t.gravity
        + t.contact_body
        + t.contact_hair
        + t.root_align;
    assert_eq!(report.total, sum);
}

#[test]
fn total_static_gradient_matches_fd() {
    let params = EnergyParams::default();
    let scene = perturbed_scene(43, 2, 8, &params).unwrap();
    let rigid = scene.rigid.clone();
    let body = scene.body.clone();
    let asset = scene.asset.clone();
    check_term(
        &scene,
        move |h| {
            let r = total_static_loss(h, &rigid, &body, &asset, &params);
            (r.total, r.grad)
        },
        1e-3,
    );
}

#[test]
fn report_serializes_terms_and_total() {
    let params = EnergyParams::default();
    let scene = rest_scene(2, (2, 2), 8, 0.3).unwrap();
    let report = total_static_loss(&scene.hair, &scene.rigid, &scene.body, &scene.asset, &params);
    let v = report.to_json();
    for key in [
        "stretch",
        "bending",
        "aux",
        "smooth",
        "gravity",
        "contact_body",
        "contact_hair",
        "root_align",
        "inertia",
        "func_reg",
        "total",
    ] {
        assert!(v.get(key).is_some(), "missing key {key}");
    }
}
