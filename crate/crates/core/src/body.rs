//! Parametric articulated capsule body: forward kinematics over a fixed
//! 22-joint tree, a hard-min capsule signed-distance field, and the scalp
//! patch queries used for hair rooting and root alignment.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Isometry3, Matrix3, Matrix4, Point3, Translation3, UnitQuaternion, Vector3};
use serde::Deserialize;

use crate::{CoreError, Result};

pub const NUM_JOINTS: usize = 22;
pub const POSE_DIM: usize = 3 * NUM_JOINTS;
pub const SHAPE_DIM: usize = 16;

/// Pose (axis-angle per joint, root first) and shape coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
}

impl BodyParams {
    pub fn new(pose: Vec<f64>, shape: Vec<f64>) -> Result<Self> {
        if pose.len() != POSE_DIM {
            return Err(CoreError::InvalidParameter(format!(
                "pose length must be {POSE_DIM}, got {}",
                pose.len()
            )));
        }
        if shape.len() != SHAPE_DIM {
            return Err(CoreError::InvalidParameter(format!(
                "shape length must be {SHAPE_DIM}, got {}",
                shape.len()
            )));
        }
        if !pose.iter().chain(shape.iter()).all(|v| v.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "pose/shape values must be finite".into(),
            ));
        }
        Ok(Self { pose, shape })
    }

    /// Rest pose on the mean body.
    pub fn zero() -> Self {
        Self {
            pose: vec![0.0; POSE_DIM],
            shape: vec![0.0; SHAPE_DIM],
        }
    }

    /// Axis-angle rotation of one joint.
    pub fn joint_rotation(&self, joint: usize) -> Vector3<f64> {
        Vector3::new(
            self.pose[3 * joint],
            self.pose[3 * joint + 1],
            self.pose[3 * joint + 2],
        )
    }

    pub fn set_joint_rotation(&mut self, joint: usize, aa: Vector3<f64>) {
        self.pose[3 * joint] = aa.x;
        self.pose[3 * joint + 1] = aa.y;
        self.pose[3 * joint + 2] = aa.z;
    }
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub rest_offset: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct CapsuleDef {
    pub name: String,
    pub joint: usize,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
    /// Joint whose bone-length factor scales the endpoints.
    pub scale_like: usize,
}

/// One shape-basis component: additive gains on bone lengths and radii.
#[derive(Debug, Clone, Default)]
pub struct ShapeComponent {
    pub bone_gain: f64,
    pub radius_gain: f64,
    pub bones: Vec<(usize, f64)>,
    pub radii: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ScalpParams {
    pub capsule: usize,
    /// Angular extent of the scalp patch from the capsule-top pole, radians.
    pub theta_max: f64,
    pub head_region_samples: usize,
}

/// Versioned rig definition: joint tree, capsule set, shape basis, scalp.
#[derive(Debug)]
pub struct BodyRig {
    pub name: String,
    pub joints: Vec<Joint>,
    pub capsules: Vec<CapsuleDef>,
    pub shape_basis: Vec<ShapeComponent>,
    pub head_joint: usize,
    pub scalp: ScalpParams,
    rest_joints: Vec<Isometry3<f64>>,
    rest_head: Isometry3<f64>,
}

// ---------------------------------------------------------------------------
// Rig file parsing

#[derive(Deserialize)]
struct RigFile {
    schema_version: u32,
    name: String,
    head_joint: String,
    joints: Vec<JointEntry>,
    capsules: Vec<CapsuleEntry>,
    scalp: ScalpEntry,
    shape_basis: Vec<ShapeEntry>,
}

#[derive(Deserialize)]
struct JointEntry {
    name: String,
    parent: String,
    offset: [f64; 3],
}

#[derive(Deserialize)]
struct CapsuleEntry {
    name: String,
    joint: String,
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
    scale_like: Option<String>,
}

#[derive(Deserialize)]
struct ScalpEntry {
    capsule: String,
    theta_max: f64,
    head_region_samples: usize,
}

#[derive(Deserialize, Default)]
struct ShapeEntry {
    #[serde(default)]
    bone_gain: f64,
    #[serde(default)]
    radius_gain: f64,
    #[serde(default)]
    bones: HashMap<String, f64>,
    #[serde(default)]
    radii: HashMap<String, f64>,
}

const DEFAULT_RIG_TOML: &str = include_str!("../data/default_rig.toml");

impl BodyRig {
    /// The embedded default rig shared by the whole pipeline.
    pub fn embedded_default() -> Arc<BodyRig> {
        use std::sync::OnceLock;
        static RIG: OnceLock<Arc<BodyRig>> = OnceLock::new();
        RIG.get_or_init(|| {
            Arc::new(BodyRig::from_toml_str(DEFAULT_RIG_TOML).expect("embedded rig is valid"))
        })
        .clone()
    }

    pub fn from_path(path: &Path) -> Result<BodyRig> {
        let text = std::fs::read_to_string(path)?;
        BodyRig::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<BodyRig> {
        let file: RigFile =
            toml::from_str(text).map_err(|e| CoreError::Rig(format!("parse error: {e}")))?;
        if file.schema_version != 1 {
            return Err(CoreError::Rig(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        if file.joints.len() != NUM_JOINTS {
            return Err(CoreError::Rig(format!(
                "rig must define {NUM_JOINTS} joints, got {}",
                file.joints.len()
            )));
        }
        if file.shape_basis.len() != SHAPE_DIM {
            return Err(CoreError::Rig(format!(
                "shape basis must have {SHAPE_DIM} components, got {}",
                file.shape_basis.len()
            )));
        }

        let mut joint_index = HashMap::new();
        let mut joints = Vec::with_capacity(file.joints.len());
        for (i, j) in file.joints.iter().enumerate() {
            if joint_index.insert(j.name.clone(), i).is_some() {
                return Err(CoreError::Rig(format!("duplicate joint name {}", j.name)));
            }
            let parent = if j.parent.is_empty() {
                None
            } else {
                let p = *joint_index
                    .get(&j.parent)
                    .ok_or_else(|| CoreError::Rig(format!("joint {} has unknown or out-of-order parent {}", j.name, j.parent)))?;
                Some(p)
            };
            if i == 0 && parent.is_some() {
                return Err(CoreError::Rig("first joint must be the root".into()));
            }
            if i > 0 && parent.is_none() {
                return Err(CoreError::Rig(format!("joint {} has no parent", j.name)));
            }
            joints.push(Joint {
                name: j.name.clone(),
                parent,
                rest_offset: Vector3::from(j.offset),
            });
        }

        let mut capsule_index = HashMap::new();
        let mut capsules = Vec::with_capacity(file.capsules.len());
        for (i, c) in file.capsules.iter().enumerate() {
            if capsule_index.insert(c.name.clone(), i).is_some() {
                return Err(CoreError::Rig(format!("duplicate capsule name {}", c.name)));
            }
            if c.radius <= 0.0 {
                return Err(CoreError::Rig(format!("capsule {} radius must be > 0", c.name)));
            }
            let joint = *joint_index
                .get(&c.joint)
                .ok_or_else(|| CoreError::Rig(format!("capsule {} names unknown joint {}", c.name, c.joint)))?;
            let scale_like = match &c.scale_like {
                Some(name) => *joint_index
                    .get(name)
                    .ok_or_else(|| CoreError::Rig(format!("capsule {} scale_like unknown joint {name}", c.name)))?,
                None => joint,
            };
            capsules.push(CapsuleDef {
                name: c.name.clone(),
                joint,
                a: Vector3::from(c.a),
                b: Vector3::from(c.b),
                radius: c.radius,
                scale_like,
            });
        }

        let mut shape_basis = Vec::with_capacity(SHAPE_DIM);
        for entry in &file.shape_basis {
            let mut comp = ShapeComponent {
                bone_gain: entry.bone_gain,
                radius_gain: entry.radius_gain,
                ..Default::default()
            };
            let mut bones: Vec<_> = entry.bones.iter().collect();
            bones.sort_by(|a, b| a.0.cmp(b.0));
            for (name, gain) in bones {
                let j = *joint_index
                    .get(name)
                    .ok_or_else(|| CoreError::Rig(format!("shape basis names unknown joint {name}")))?;
                comp.bones.push((j, *gain));
            }
            let mut radii: Vec<_> = entry.radii.iter().collect();
            radii.sort_by(|a, b| a.0.cmp(b.0));
            for (name, gain) in radii {
                let c = *capsule_index
                    .get(name)
                    .ok_or_else(|| CoreError::Rig(format!("shape basis names unknown capsule {name}")))?;
                comp.radii.push((c, *gain));
            }
            shape_basis.push(comp);
        }

        let head_joint = *joint_index
            .get(&file.head_joint)
            .ok_or_else(|| CoreError::Rig(format!("unknown head joint {}", file.head_joint)))?;
        let scalp_capsule = *capsule_index
            .get(&file.scalp.capsule)
            .ok_or_else(|| CoreError::Rig(format!("unknown scalp capsule {}", file.scalp.capsule)))?;

        let cap = &capsules[scalp_capsule];
        let cap_len = (cap.b - cap.a).norm();
        if cap_len <= 0.0 {
            return Err(CoreError::Rig("scalp capsule has zero-length axis".into()));
        }
        let theta_limit = std::f64::consts::FRAC_PI_2 + cap_len / cap.radius;
        if !(0.0 < file.scalp.theta_max && file.scalp.theta_max <= theta_limit) {
            return Err(CoreError::Rig(format!(
                "scalp theta_max must lie in (0, {theta_limit:.3}]"
            )));
        }

        let mut rig = BodyRig {
            name: file.name,
            joints,
            capsules,
            shape_basis,
            head_joint,
            scalp: ScalpParams {
                capsule: scalp_capsule,
                theta_max: file.scalp.theta_max,
                head_region_samples: file.scalp.head_region_samples,
            },
            rest_joints: Vec::new(),
            rest_head: Isometry3::identity(),
        };
        rig.rest_joints = forward_kinematics(&rig, &BodyParams::zero());
        rig.rest_head = rig.rest_joints[rig.head_joint];
        Ok(rig)
    }

    /// Global joint transforms of the mean body at rest.
    pub fn rest_joint_transforms(&self) -> &[Isometry3<f64>] {
        &self.rest_joints
    }

    /// Global head transform of the mean body at rest.
    pub fn rest_head_transform(&self) -> &Isometry3<f64> {
        &self.rest_head
    }

    pub fn joint_named(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Per-joint bone-length factor for the given shape coefficients.
    pub fn bone_factors(&self, shape: &[f64]) -> Vec<f64> {
        let mut f = vec![1.0; self.joints.len()];
        for (k, comp) in self.shape_basis.iter().enumerate() {
            let beta = shape[k];
            if beta == 0.0 {
                continue;
            }
            if comp.bone_gain != 0.0 {
                for v in f.iter_mut() {
                    *v += beta * comp.bone_gain;
                }
            }
            for &(j, gain) in &comp.bones {
                f[j] += beta * gain;
            }
        }
        f
    }

    /// Per-capsule radius factor for the given shape coefficients.
    pub fn radius_factors(&self, shape: &[f64]) -> Vec<f64> {
        let mut f = vec![1.0; self.capsules.len()];
        for (k, comp) in self.shape_basis.iter().enumerate() {
            let beta = shape[k];
            if beta == 0.0 {
                continue;
            }
            if comp.radius_gain != 0.0 {
                for v in f.iter_mut() {
                    *v += beta * comp.radius_gain;
                }
            }
            for &(c, gain) in &comp.radii {
                f[c] += beta * gain;
            }
        }
        f
    }
}

fn forward_kinematics(rig: &BodyRig, params: &BodyParams) -> Vec<Isometry3<f64>> {
    let factors = rig.bone_factors(&params.shape);
    let mut globals: Vec<Isometry3<f64>> = Vec::with_capacity(rig.joints.len());
    for (j, joint) in rig.joints.iter().enumerate() {
        let rot = UnitQuaternion::from_scaled_axis(params.joint_rotation(j));
        let local = Isometry3::from_parts(
            Translation3::from(joint.rest_offset * factors[j]),
            rot,
        );
        let global = match joint.parent {
            Some(p) => globals[p] * local,
            None => local,
        };
        globals.push(global);
    }
    globals
}

/// A capsule posed into world space.
#[derive(Debug, Clone)]
pub struct PosedCapsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

/// A capsule in its joint's local frame, after shape scaling.
#[derive(Debug, Clone)]
pub struct LocalCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Immutable posed body; all queries are read-only.
#[derive(Debug, Clone)]
pub struct PosedBody {
    rig: Arc<BodyRig>,
    joint_transforms: Vec<Isometry3<f64>>,
    capsules: Vec<PosedCapsule>,
    head_transform: Matrix4<f64>,
    /// Shape-scaled scalp capsule in the head joint's local frame.
    scalp_local: LocalCapsule,
    tag: String,
}

/// Forward kinematics: pose the rig with the given parameters.
pub fn pose_body(rig: &Arc<BodyRig>, params: &BodyParams) -> Result<PosedBody> {
    if params.pose.len() != POSE_DIM || params.shape.len() != SHAPE_DIM {
        return Err(CoreError::InvalidParameter(
            "pose/shape dimensions do not match the rig".into(),
        ));
    }
    if !params
        .pose
        .iter()
        .chain(params.shape.iter())
        .all(|v| v.is_finite())
    {
        return Err(CoreError::InvalidParameter(
            "pose/shape values must be finite".into(),
        ));
    }
    let joint_transforms = forward_kinematics(rig, params);
    let bone_factors = rig.bone_factors(&params.shape);
    let radius_factors = rig.radius_factors(&params.shape);

    let capsules: Vec<PosedCapsule> = rig
        .capsules
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let g = &joint_transforms[c.joint];
            let s = bone_factors[c.scale_like];
            PosedCapsule {
                a: g * Point3::from(c.a * s),
                b: g * Point3::from(c.b * s),
                radius: (c.radius * radius_factors[i]).max(1e-4),
            }
        })
        .collect();

    let sc = &rig.capsules[rig.scalp.capsule];
    let s = bone_factors[sc.scale_like];
    let scalp_local = LocalCapsule {
        a: sc.a * s,
        b: sc.b * s,
        radius: (sc.radius * radius_factors[rig.scalp.capsule]).max(1e-4),
    };

    let head_transform = joint_transforms[rig.head_joint].to_homogeneous();
    let tag = params_tag(params);
    Ok(PosedBody {
        rig: rig.clone(),
        joint_transforms,
        capsules,
        head_transform,
        scalp_local,
        tag,
    })
}

/// FNV-1a over the parameter bits; identifies the pose a body was built from.
fn params_tag(params: &BodyParams) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in params.pose.iter().chain(params.shape.iter()) {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}

impl PosedBody {
    pub fn rig(&self) -> &Arc<BodyRig> {
        &self.rig
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn joint_transforms(&self) -> &[Isometry3<f64>] {
        &self.joint_transforms
    }

    pub fn joint_transform_matrix(&self, joint: usize) -> Matrix4<f64> {
        self.joint_transforms[joint].to_homogeneous()
    }

    pub fn capsules(&self) -> &[PosedCapsule] {
        &self.capsules
    }

    /// Global 4x4 transform of the head joint.
    pub fn head_transform(&self) -> &Matrix4<f64> {
        &self.head_transform
    }

    /// Replace the head transform (testing hook for the non-rigid error path).
    #[doc(hidden)]
    pub fn override_head_transform(&mut self, m: Matrix4<f64>) {
        self.head_transform = m;
    }

    /// Signed distance to the capsule body (hard min over capsules) and the
    /// distance gradient. Negative distance means penetration. A point on a
    /// capsule axis takes a fixed unit vector perpendicular to that axis.
    pub fn signed_distance(&self, p: &Point3<f64>) -> (f64, Vector3<f64>) {
        let mut best = f64::INFINITY;
        let mut normal = Vector3::new(0.0, 1.0, 0.0);
        for c in &self.capsules {
            let closest = closest_point_on_segment(p, &c.a, &c.b);
            let to_p = p - closest;
            let axis_dist = to_p.norm();
            let d = axis_dist - c.radius;
            if d < best {
                best = d;
                normal = if axis_dist > 1e-12 {
                    to_p / axis_dist
                } else {
                    let axis = c.b - c.a;
                    perpendicular_unit(&axis)
                };
            }
        }
        (best, normal)
    }

    /// Nearest point on the body surface.
    pub fn nearest_surface_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let (d, n) = self.signed_distance(p);
        p - n * d
    }

    /// Maps a scalp UV coordinate to a posed surface point and outward normal.
    /// UVs outside the unit square are clamped (with a warning).
    pub fn scalp_frame(&self, uv: [f64; 2]) -> (Point3<f64>, Vector3<f64>) {
        let mut u = uv[0];
        let mut v = uv[1];
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            log::warn!("scalp uv ({u}, {v}) outside [0,1]^2; clamping");
            u = u.clamp(0.0, 1.0);
            v = v.clamp(0.0, 1.0);
        }
        let (pos_local, n_local) = scalp_point_on_capsule(&self.scalp_local, self.rig.scalp.theta_max, [u, v]);
        let head = &self.joint_transforms[self.rig.head_joint];
        (head * pos_local, head.rotation * n_local)
    }

    /// Fixed surface samples of the head region, posed into world space.
    pub fn head_region_samples(&self) -> Vec<Point3<f64>> {
        let head = &self.joint_transforms[self.rig.head_joint];
        head_samples_on_capsule(&self.scalp_local, self.rig.scalp.head_region_samples)
            .iter()
            .map(|p| head * p)
            .collect()
    }
}

impl BodyRig {
    /// Scalp capsule of the mean body (no shape scaling), local frame.
    pub fn mean_scalp_capsule(&self) -> LocalCapsule {
        let c = &self.capsules[self.scalp.capsule];
        LocalCapsule {
            a: c.a,
            b: c.b,
            radius: c.radius,
        }
    }
}

/// Scalp parametrization on a capsule, in that capsule's local frame.
///
/// The patch covers a spherical cap of half-angle `theta_max` around the top
/// end of the capsule; past 90 degrees it continues down the cylindrical side
/// so every UV maps exactly onto the capsule surface. UV (0.5, 0.5) is the
/// apex.
pub fn scalp_point_on_capsule(
    cap: &LocalCapsule,
    theta_max: f64,
    uv: [f64; 2],
) -> (Point3<f64>, Vector3<f64>) {
    let axis_vec = cap.b - cap.a;
    let len = axis_vec.norm();
    let axis = axis_vec / len;
    let e1 = perpendicular_unit(&axis);
    let e2 = axis.cross(&e1);

    let px = 2.0 * (uv[0] - 0.5);
    let pz = 2.0 * (uv[1] - 0.5);
    let rho = (px * px + pz * pz).sqrt().min(1.0);
    let theta = rho * theta_max;
    let phi = pz.atan2(px);
    let radial = e1 * phi.cos() + e2 * phi.sin();

    let top = Point3::from(cap.b);
    if theta <= std::f64::consts::FRAC_PI_2 {
        let dir = radial * theta.sin() + axis * theta.cos();
        (top + dir * cap.radius, dir)
    } else {
        let s = (theta - std::f64::consts::FRAC_PI_2) * cap.radius;
        (top + radial * cap.radius - axis * s, radial)
    }
}

/// Fixed sample set over the head-region surface, local frame.
pub fn head_samples_on_capsule(cap: &LocalCapsule, n: usize) -> Vec<Point3<f64>> {
    let axis_vec = cap.b - cap.a;
    let axis = axis_vec / axis_vec.norm();
    let e1 = perpendicular_unit(&axis);
    let e2 = axis.cross(&e1);
    let top = Point3::from(cap.b);

    let cap_angle: f64 = 1.2;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let frac = (i as f64 + 0.5) / n as f64;
            let cos_t = 1.0 - frac * (1.0 - cap_angle.cos());
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = golden * i as f64;
            let dir = e1 * (phi.cos() * sin_t) + e2 * (phi.sin() * sin_t) + axis * cos_t;
            top + dir * cap.radius
        })
        .collect()
}

pub(crate) fn closest_point_on_segment(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// A fixed unit vector perpendicular to `axis` (tie-break for on-axis points).
pub(crate) fn perpendicular_unit(axis: &Vector3<f64>) -> Vector3<f64> {
    let a = axis.normalize();
    let pick = if a.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    a.cross(&pick).normalize()
}

/// Checks that the upper-left 3x3 block of `m` is a rotation: orthonormal with
/// determinant 1 within `tol`. Returns the observed deviation on failure.
pub fn rotation_block_deviation(m: &Matrix4<f64>) -> f64 {
    let r = Matrix3::from_fn(|i, j| m[(i, j)]);
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rig() -> Arc<BodyRig> {
        BodyRig::embedded_default()
    }

    #[test]
    fn embedded_rig_loads() {
        let r = rig();
        assert_eq!(r.joints.len(), NUM_JOINTS);
        assert_eq!(r.shape_basis.len(), SHAPE_DIM);
        assert!(r.capsules.len() >= 15);
    }

    #[test]
    fn rest_pose_matches_rest_transforms() {
        let r = rig();
        let body = pose_body(&r, &BodyParams::zero()).unwrap();
        for (a, b) in body.joint_transforms().iter().zip(r.rest_joint_transforms()) {
            assert_relative_eq!(a.to_homogeneous(), b.to_homogeneous(), epsilon = 1e-12);
        }
        assert_relative_eq!(
            *body.head_transform(),
            r.rest_head_transform().to_homogeneous(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn root_rotation_rotates_all_capsules() {
        let r = rig();
        let mut params = BodyParams::zero();
        params.set_joint_rotation(0, Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
        let posed = pose_body(&r, &params).unwrap();
        let rest = pose_body(&r, &BodyParams::zero()).unwrap();

        let root = rest.joint_transforms()[0];
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(
            0.0,
            std::f64::consts::FRAC_PI_2,
            0.0,
        ));
        // Rotation applied about the root joint origin.
        let m = Isometry3::from_parts(root.translation, root.rotation * rot)
            * root.inverse();
        for (pc, rc) in posed.capsules().iter().zip(rest.capsules()) {
            assert_relative_eq!(pc.a, m * rc.a, epsilon = 1e-9);
            assert_relative_eq!(pc.b, m * rc.b, epsilon = 1e-9);
        }
    }

    #[test]
    fn shape_component_zero_rescales_bones() {
        let r = rig();
        let mut params = BodyParams::zero();
        params.shape[0] = 1.0;
        let posed = pose_body(&r, &params).unwrap();
        // Oracle: re-scale every rest offset by 1.05 directly and rerun FK.
        let gain = 1.0 + r.shape_basis[0].bone_gain;
        for (j, joint) in r.joints.iter().enumerate() {
            let parent_pos = joint
                .parent
                .map(|p| posed.joint_transforms()[p].translation.vector);
            let pos = posed.joint_transforms()[j].translation.vector;
            let bone = match parent_pos {
                Some(pp) => (pos - pp).norm(),
                None => pos.norm(),
            };
            let rest_bone = joint.rest_offset.norm() * gain;
            assert_relative_eq!(bone, rest_bone, epsilon = 1e-9);
        }
    }

    #[test]
    fn sdf_surface_and_interior() {
        let r = rig();
        let body = pose_body(&r, &BodyParams::zero()).unwrap();
        let c = &body.capsules()[0];
        let axis = (c.b - c.a).normalize();
        let side = perpendicular_unit(&axis);
        let mid = Point3::from((c.a.coords + c.b.coords) * 0.5);

        let on_surface = mid + side * c.radius;
        let (d, _) = body.signed_distance(&on_surface);
        assert!(d.abs() < 1e-9, "surface point must have d ~ 0, got {d}");

        // Deepest interior of an isolated capsule end: d = -radius.
        let far_cap = body
            .capsules()
            .iter()
            .max_by(|x, y| x.b.y.partial_cmp(&y.b.y).unwrap())
            .unwrap();
        let (d, n) = body.signed_distance(&Point3::from(far_cap.b.coords));
        assert_relative_eq!(d, -far_cap.radius, epsilon = 1e-9);
        assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sdf_far_point_matches_dense_surface_sampling() {
        let r = rig();
        let body = pose_body(&r, &BodyParams::zero()).unwrap();
        let p = Point3::new(0.9, 1.4, 0.7);
        let (d, _) = body.signed_distance(&p);

        // Brute force: densely sample every capsule surface.
        let mut best = f64::INFINITY;
        for c in body.capsules() {
            let axis_vec = c.b - c.a;
            let len = axis_vec.norm();
            let axis = axis_vec / len;
            let e1 = perpendicular_unit(&axis);
            let e2 = axis.cross(&e1);
            let na = 800;
            let nl = 400;
            for i in 0..na {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / na as f64;
                let radial = e1 * phi.cos() + e2 * phi.sin();
                for k in 0..=nl {
                    let t = k as f64 / nl as f64;
                    let q = c.a + axis_vec * t + radial * c.radius;
                    best = best.min((p - q).norm());
                }
                // spherical end caps
                for k in 0..=nl {
                    let t = std::f64::consts::FRAC_PI_2 * k as f64 / nl as f64;
                    let qa = c.a + (radial * t.cos() - axis * t.sin()) * c.radius;
                    let qb = c.b + (radial * t.cos() + axis * t.sin()) * c.radius;
                    best = best.min((p - qa).norm());
                    best = best.min((p - qb).norm());
                }
            }
        }
        assert!((d - best).abs() < 1e-6, "sdf {d} vs sampled {best}");
    }

    #[test]
    fn sdf_lipschitz_and_unit_normals() {
        let r = rig();
        let body = pose_body(&r, &BodyParams::zero()).unwrap();
        let mut rng = crate::geometry::DetRng::new(7);
        for _ in 0..500 {
            let x = Point3::new(
                rng.uniform(-1.0, 1.0),
                rng.uniform(0.0, 2.0),
                rng.uniform(-1.0, 1.0),
            );
            let y = Point3::new(
                rng.uniform(-1.0, 1.0),
                rng.uniform(0.0, 2.0),
                rng.uniform(-1.0, 1.0),
            );
            let (dx, nx) = body.signed_distance(&x);
            let (dy, _) = body.signed_distance(&y);
            assert!((dx - dy).abs() <= (x - y).norm() + 1e-12);
            if dx.abs() > 1e-9 {
                assert_relative_eq!(nx.norm(), 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn scalp_apex_and_on_surface() {
        let r = rig();
        let body = pose_body(&r, &BodyParams::zero()).unwrap();
        let (apex, n) = body.scalp_frame([0.5, 0.5]);
        assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-9);
        // Apex normal points away from the head capsule centerline.
        let cap = &body.capsules()[r.scalp.capsule];
        assert!((apex - cap.b).normalize().dot(&n) > 0.999);

        for &uv in &[[0.0, 0.0], [0.25, 0.8], [1.0, 1.0], [0.5, 0.02], [0.9, 0.5]] {
            let (p, _) = body.scalp_frame(uv);
            let (d, _) = body.signed_distance(&p);
            assert!(d.abs() < 1e-6, "scalp point at uv {uv:?} has d = {d}");
        }
    }

    #[test]
    fn scalp_normal_rotates_with_head() {
        let r = rig();
        let rest = pose_body(&r, &BodyParams::zero()).unwrap();
        let mut params = BodyParams::zero();
        let pitch = Vector3::new(30f64.to_radians(), 0.0, 0.0);
        params.set_joint_rotation(r.head_joint, pitch);
        let posed = pose_body(&r, &params).unwrap();

        let uv = [0.3, 0.6];
        let (_, n_rest) = rest.scalp_frame(uv);
        let (_, n_posed) = posed.scalp_frame(uv);

        let head_rest = rest.joint_transforms()[r.head_joint];
        let head_posed = posed.joint_transforms()[r.head_joint];
        let rel = head_posed.rotation * head_rest.rotation.inverse();
        assert_relative_eq!(n_posed, rel * n_rest, epsilon = 1e-6);
    }

    #[test]
    fn fk_root_composition() {
        let r = rig();
        let a = Vector3::new(0.3, -0.2, 0.5);
        let b = Vector3::new(-0.1, 0.7, 0.2);
        let qa = UnitQuaternion::from_scaled_axis(a);
        let qb = UnitQuaternion::from_scaled_axis(b);

        let mut params_ab = BodyParams::zero();
        params_ab.set_joint_rotation(0, (qa * qb).scaled_axis());
        params_ab.pose[7] = 0.4; // some non-root joint rotation too
        let posed_ab = pose_body(&r, &params_ab).unwrap();

        let mut params_b = BodyParams::zero();
        params_b.set_joint_rotation(0, qb.scaled_axis());
        params_b.pose[7] = 0.4;
        let posed_b = pose_body(&r, &params_b).unwrap();

        // Apply A rigidly about the root origin.
        let root = posed_b.joint_transforms()[0].translation;
        let m = Isometry3::from_parts(root, UnitQuaternion::identity())
            * Isometry3::from_parts(Translation3::identity(), qa)
            * Isometry3::from_parts(root, UnitQuaternion::identity()).inverse();
        for (ca, cb) in posed_ab.capsules().iter().zip(posed_b.capsules()) {
            assert_relative_eq!(ca.a, m * cb.a, epsilon = 1e-9);
            assert_relative_eq!(ca.b, m * cb.b, epsilon = 1e-9);
        }
    }

    #[test]
    fn head_alignment_samples_are_rigid_with_head() {
        let r = rig();
        let rest = pose_body(&r, &BodyParams::zero()).unwrap();
        let mut params = BodyParams::zero();
        params.set_joint_rotation(r.head_joint, Vector3::new(0.4, 0.2, -0.1));
        let posed = pose_body(&r, &params).unwrap();
        let m_rel = posed.joint_transforms()[r.head_joint]
            * rest.joint_transforms()[r.head_joint].inverse();
        for (p, q) in posed
            .head_region_samples()
            .iter()
            .zip(rest.head_region_samples())
        {
            assert_relative_eq!(*p, m_rel * q, epsilon = 1e-9);
        }
    }
}
