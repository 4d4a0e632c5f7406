//! Hair strand representation, procedural hairstyle generation from a 512-dim
//! latent code, rigid posing onto an arbitrarily posed body, and strand file
//! formats (OBJ polylines and the binary HSTR dump).

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{Matrix4, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{pose_body, rotation_block_deviation, BodyParams, BodyRig, PosedBody};
use crate::{CoreError, Result};

/// Latent code dimensionality of the hairstyle generator.
pub const LATENT_DIM: usize = 512;

/// Default vertex count per strand.
pub const DEFAULT_VERTS_PER_STRAND: usize = 100;

/// The root vertex and its neighbor are fixed (never optimized or deformed).
pub const FIXED_VERTICES_PER_STRAND: usize = 2;

const BASE_STRAND_LENGTH: f64 = 0.32;

/// Deterministic RNG helper (ChaCha8 behind a tiny convenience API).
pub struct DetRng {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.gen::<f64>()
    }

    pub fn uniform_usize(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        self.rng.gen_range(lo..=hi_inclusive)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1: f64 = self.rng.gen::<f64>().max(1e-12);
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Samples a 512-dim standard-normal latent from a seed.
pub fn latent_from_seed(seed: u64) -> Vec<f64> {
    let mut rng = DetRng::new(seed);
    (0..LATENT_DIM).map(|_| rng.normal()).collect()
}

/// Generated hairstyle: M strands of N vertices each, rooted on the scalp UV
/// grid of the default rig's rest body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HairAsset {
    pub num_strands: usize,
    pub verts_per_strand: usize,
    pub grid: (usize, usize),
    /// Strand-major vertex positions, meters.
    positions: Vec<Vector3<f64>>,
    /// Root UV per strand, in [0,1]^2.
    root_uv: Vec<[f64; 2]>,
    /// Rest segment lengths, strand-major, N-1 per strand.
    rest_lengths: Vec<f64>,
    pub latent: Vec<f64>,
}

impl HairAsset {
    /// Builds an asset from explicit strand geometry; rest lengths are taken
    /// from the given positions. Intended for synthetic scenes and tests.
    pub fn from_parts(
        positions: Vec<Vector3<f64>>,
        root_uv: Vec<[f64; 2]>,
        verts_per_strand: usize,
        grid: (usize, usize),
        latent: Vec<f64>,
    ) -> Result<HairAsset> {
        if verts_per_strand < 2 {
            return Err(CoreError::InvalidParameter(
                "strands need at least 2 vertices".into(),
            ));
        }
        let m = root_uv.len();
        if positions.len() != m * verts_per_strand || m == 0 {
            return Err(CoreError::InvalidParameter(
                "positions do not match strand count".into(),
            ));
        }
        let mut rest_lengths = Vec::with_capacity(m * (verts_per_strand - 1));
        for s in 0..m {
            for i in 0..verts_per_strand - 1 {
                let a = positions[s * verts_per_strand + i];
                let b = positions[s * verts_per_strand + i + 1];
                let len = (b - a).norm();
                if len <= 0.0 {
                    return Err(CoreError::InvalidParameter(
                        "rest segments must have positive length".into(),
                    ));
                }
                rest_lengths.push(len);
            }
        }
        Ok(HairAsset {
            num_strands: m,
            verts_per_strand,
            grid,
            positions,
            root_uv,
            rest_lengths,
            latent,
        })
    }

    #[inline]
    pub fn vertex(&self, s: usize, v: usize) -> Vector3<f64> {
        self.positions[s * self.verts_per_strand + v]
    }

    #[inline]
    pub fn rest_length(&self, s: usize, i: usize) -> f64 {
        self.rest_lengths[s * (self.verts_per_strand - 1) + i]
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn root_uv(&self, s: usize) -> [f64; 2] {
        self.root_uv[s]
    }

    pub fn root_uvs(&self) -> &[[f64; 2]] {
        &self.root_uv
    }

    /// Total rest length of one strand.
    pub fn strand_rest_length(&self, s: usize) -> f64 {
        let n = self.verts_per_strand - 1;
        self.rest_lengths[s * n..(s + 1) * n].iter().sum()
    }

    pub fn save_json(&self, w: &mut dyn Write) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| CoreError::Format(e.to_string()))
    }

    pub fn load_json(r: &mut dyn Read) -> Result<HairAsset> {
        let asset: HairAsset =
            serde_json::from_reader(r).map_err(|e| CoreError::Format(e.to_string()))?;
        let n = asset.verts_per_strand;
        if n < 3
            || asset.positions.len() != asset.num_strands * n
            || asset.root_uv.len() != asset.num_strands
            || asset.rest_lengths.len() != asset.num_strands * (n - 1)
        {
            return Err(CoreError::Format("inconsistent hair asset".into()));
        }
        Ok(asset)
    }
}

/// Hair posed onto a specific body.
#[derive(Debug, Clone)]
pub struct PosedHair {
    pub num_strands: usize,
    pub verts_per_strand: usize,
    positions: Vec<Vector3<f64>>,
    pub body_frame_tag: String,
    pub source: Arc<HairAsset>,
}

impl PosedHair {
    pub fn new(
        source: Arc<HairAsset>,
        positions: Vec<Vector3<f64>>,
        body_frame_tag: String,
    ) -> Self {
        assert_eq!(positions.len(), source.num_strands * source.verts_per_strand);
        Self {
            num_strands: source.num_strands,
            verts_per_strand: source.verts_per_strand,
            positions,
            body_frame_tag,
            source,
        }
    }

    #[inline]
    pub fn vertex(&self, s: usize, v: usize) -> Vector3<f64> {
        self.positions[s * self.verts_per_strand + v]
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.positions
    }

    pub fn strand(&self, s: usize) -> &[Vector3<f64>] {
        let n = self.verts_per_strand;
        &self.positions[s * n..(s + 1) * n]
    }
}

// ---------------------------------------------------------------------------
// Procedural generation

const FEATURE_COUNT: usize = 16;

/// Fixed linear projection from the latent onto the generator's controls.
fn latent_features(latent: &[f64]) -> [f64; FEATURE_COUNT] {
    let mut rng = DetRng::new(0x4841_4952);
    let scale = 1.0 / (LATENT_DIM as f64).sqrt();
    let mut features = [0.0; FEATURE_COUNT];
    for f in features.iter_mut() {
        let mut acc = 0.0;
        for &z in latent.iter() {
            acc += rng.normal() * z;
        }
        *f = acc * scale;
    }
    features
}

/// Generates a hairstyle from a latent code over an `M_w x M_h` scalp grid.
///
/// Deterministic in its inputs. The latent smoothly controls length scale,
/// curl amplitude and frequency, parting direction, droop and flow noise; the
/// zero latent yields straight strands of the base length along the scalp
/// normals. Strands shorter than `min_length` are removed.
pub fn generate_procedural_hair(
    latent: &[f64],
    grid: (usize, usize),
    min_length: f64,
) -> Result<HairAsset> {
    generate_procedural_hair_with(latent, grid, min_length, DEFAULT_VERTS_PER_STRAND, BASE_STRAND_LENGTH)
}

/// Generator with explicit vertex count and base length (desk-scale variants).
pub fn generate_procedural_hair_with(
    latent: &[f64],
    grid: (usize, usize),
    min_length: f64,
    verts_per_strand: usize,
    base_length: f64,
) -> Result<HairAsset> {
    if latent.len() != LATENT_DIM {
        return Err(CoreError::InvalidParameter(format!(
            "latent must have {LATENT_DIM} entries, got {}",
            latent.len()
        )));
    }
    if !latent.iter().all(|v| v.is_finite()) {
        return Err(CoreError::InvalidParameter("latent must be finite".into()));
    }
    let (mw, mh) = grid;
    if mw * mh == 0 {
        return Err(CoreError::InvalidParameter("grid must be non-empty".into()));
    }
    if verts_per_strand < 3 {
        return Err(CoreError::InvalidParameter(
            "verts_per_strand must be at least 3".into(),
        ));
    }

    let rig = BodyRig::embedded_default();
    let rest_body = pose_body(&rig, &BodyParams::zero())?;

    let f = latent_features(latent);
    let len_scale = (0.35 * f[0].tanh()).exp();
    let droop = 1.2 * f[1].tanh().powi(2);
    let curl_amp = 0.012 * f[2];
    let curl_freq = std::f64::consts::PI * (3.0 + 2.0 * f[3].tanh());
    let part_angle = f[5].atan2(f[4]);
    let part_strength = 0.6 * (f[4].hypot(f[5])).tanh();
    let noise_amp = 0.008 * f[6] * f[6];
    let phase0 = f[7];
    let len_var = 0.35 * f[8].tanh();
    let down = Vector3::new(0.0, -1.0, 0.0);

    let n = verts_per_strand;
    let mut positions = Vec::new();
    let mut root_uv = Vec::new();
    let mut rest_lengths = Vec::new();

    for gy in 0..mh {
        for gx in 0..mw {
            let u = (gx as f64 + 0.5) / mw as f64;
            let v = (gy as f64 + 0.5) / mh as f64;
            let profile = (std::f64::consts::PI * (u - 0.5)).cos()
                * (std::f64::consts::PI * (v - 0.5)).cos();
            let strand_len = base_length * len_scale * (len_var * profile).exp();
            if strand_len < min_length {
                continue;
            }

            let (root, normal) = rest_body.scalp_frame([u, v]);
            // Tangent frame at the root for parting and curl.
            let t1 = crate::body::perpendicular_unit(&normal);
            let t2 = normal.cross(&t1);
            let part = (t1 * part_angle.cos() + t2 * part_angle.sin()) * part_strength;
            let phase = phase0 + 5.0 * (u + 2.0 * v);

            let seg = strand_len / (n - 1) as f64;
            let mut p = root;
            positions.push(p.coords);
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                let w = (droop * t * 2.0).min(1.0);
                let base = normal * (1.0 - w) + (down + part) * w;
                let arg = curl_freq * t + phase;
                let curl = (t1 * arg.cos() + t2 * arg.sin()) * curl_amp;
                let noise = Vector3::new(
                    (9.1 * u + 7.3 * v + 4.7 * t + f[9]).sin(),
                    (6.7 * u - 8.1 * v + 5.3 * t + f[10]).sin(),
                    (7.9 * u + 6.1 * v + 6.3 * t + f[11]).sin(),
                ) * noise_amp;
                let dir = (base + curl + noise).normalize();
                p += dir * seg;
                positions.push(p.coords);
                rest_lengths.push(seg);
            }
            root_uv.push([u, v]);
        }
    }

    if root_uv.is_empty() {
        return Err(CoreError::EmptyHairstyle);
    }

    Ok(HairAsset {
        num_strands: root_uv.len(),
        verts_per_strand: n,
        grid,
        positions,
        root_uv,
        rest_lengths,
        latent: latent.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Rigid posing

fn transform_point(m: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let r = m.fixed_view::<3, 3>(0, 0);
    let t = m.fixed_view::<3, 1>(0, 3);
    r * p + t
}

/// Rigidly poses the hair onto a posed body: transforms every vertex by the
/// head motion relative to the generation rest pose, applies the head-region
/// alignment translation, then snaps each strand root onto the posed scalp
/// (shifting the whole strand by the same offset).
pub fn rigid_pose_hair(asset: &Arc<HairAsset>, body: &PosedBody) -> Result<PosedHair> {
    let m_head = body.head_transform();
    let deviation = rotation_block_deviation(m_head);
    if deviation > 1e-6 {
        return Err(CoreError::NonRigidHeadTransform { deviation });
    }
    let rest_head = body.rig().rest_head_transform().to_homogeneous();
    let rest_inv = rest_head
        .try_inverse()
        .ok_or(CoreError::NonRigidHeadTransform { deviation: f64::INFINITY })?;
    let m_rel = m_head * rest_inv;

    // Mean displacement of the head-region samples versus their rigidly
    // transformed rest positions (identically zero for a rigid capsule head;
    // retained for interface fidelity with deformable heads).
    let posed_samples = body.head_region_samples();
    let rest_local = crate::body::head_samples_on_capsule(
        &body.rig().mean_scalp_capsule(),
        body.rig().scalp.head_region_samples,
    );
    let rest_head_iso = body.rig().rest_head_transform();
    let mut align = Vector3::zeros();
    for (posed, local) in posed_samples.iter().zip(&rest_local) {
        let rest_world = rest_head_iso * local;
        align += posed.coords - transform_point(&m_rel, &rest_world.coords);
    }
    align /= posed_samples.len() as f64;

    let n = asset.verts_per_strand;
    let mut positions = vec![Vector3::zeros(); asset.num_strands * n];
    for s in 0..asset.num_strands {
        let root = transform_point(&m_rel, &asset.vertex(s, 0)) + align;
        let snapped = body.nearest_surface_point(&Point3::from(root));
        let snap = snapped.coords - root;
        for v in 0..n {
            let p = transform_point(&m_rel, &asset.vertex(s, v)) + align + snap;
            positions[s * n + v] = p;
        }
    }

    Ok(PosedHair::new(
        asset.clone(),
        positions,
        body.tag().to_string(),
    ))
}

// ---------------------------------------------------------------------------
// Strand file formats

/// OBJ export: one `l` polyline record per strand.
pub fn write_obj(hair: &PosedHair, w: &mut dyn Write) -> Result<()> {
    let n = hair.verts_per_strand;
    for p in hair.positions() {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for s in 0..hair.num_strands {
        write!(w, "l")?;
        for v in 0..n {
            write!(w, " {}", s * n + v + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Minimal OBJ polyline reader (vertices plus `l` records).
pub fn parse_obj_polylines(text: &str) -> Result<Vec<Vec<Vector3<f64>>>> {
    let mut verts: Vec<Vector3<f64>> = Vec::new();
    let mut lines: Vec<Vec<Vector3<f64>>> = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut read = || -> Result<f64> {
                    it.next()
                        .ok_or_else(|| CoreError::Format("short v record".into()))?
                        .parse()
                        .map_err(|_| CoreError::Format("bad float in v record".into()))
                };
                let (x, y, z) = (read()?, read()?, read()?);
                verts.push(Vector3::new(x, y, z));
            }
            Some("l") => {
                let mut poly = Vec::new();
                for tok in it {
                    let idx: usize = tok
                        .parse()
                        .map_err(|_| CoreError::Format("bad index in l record".into()))?;
                    if idx == 0 || idx > verts.len() {
                        return Err(CoreError::Format("l index out of range".into()));
                    }
                    poly.push(verts[idx - 1]);
                }
                lines.push(poly);
            }
            _ => {}
        }
    }
    Ok(lines)
}

const HSTR_MAGIC: &[u8; 4] = b"HSTR";

/// Binary dump: 16-byte header (magic, M, N, reserved) then M*N*3 LE f32.
pub fn write_hstr(hair: &PosedHair, w: &mut dyn Write) -> Result<()> {
    w.write_all(HSTR_MAGIC)?;
    w.write_all(&(hair.num_strands as u32).to_le_bytes())?;
    w.write_all(&(hair.verts_per_strand as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for p in hair.positions() {
        for c in [p.x, p.y, p.z] {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads an HSTR dump back: (M, N, strand-major positions).
pub fn read_hstr(r: &mut dyn Read) -> Result<(usize, usize, Vec<Vector3<f64>>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != HSTR_MAGIC {
        return Err(CoreError::Format("bad HSTR magic".into()));
    }
    let m = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; m * n * 12];
    r.read_exact(&mut buf)?;
    let mut positions = Vec::with_capacity(m * n);
    for chunk in buf.chunks_exact(12) {
        let x = f32::from_le_bytes(chunk[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(chunk[8..12].try_into().unwrap()) as f64;
        positions.push(Vector3::new(x, y, z));
    }
    Ok((m, n, positions))
}
