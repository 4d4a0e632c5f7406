//! Contact losses: hair-body via the capsule SDF and hair-hair via segment
//! distances with a uniform spatial hash broad phase. Evaluation is chunked
//! with a fixed-order reduction, so results are bitwise reproducible for any
//! thread count.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::body::PosedBody;
use crate::geometry::PosedHair;

use super::barrier::{barrier, barrier_coeffs, barrier_d, BarrierCoeffs};
use super::terms::{zero_fixed, Grad};
use super::EnergyParams;

const CHUNK: usize = 4096;

fn body_coeffs(p: &EnergyParams) -> BarrierCoeffs {
    barrier_coeffs(p.xi_body, p.xi_body * p.dhat_multiplier, p.b_p)
        .expect("energy parameters must be validated before evaluation")
}

fn hair_coeffs(p: &EnergyParams) -> BarrierCoeffs {
    barrier_coeffs(p.xi_hair, p.xi_hair * p.dhat_multiplier, p.b_p)
        .expect("energy parameters must be validated before evaluation")
}

/// Hair-body contact: the barrier applied to each vertex's signed distance,
/// with the gradient chained through the SDF normal.
pub fn body_contact_loss(hair: &PosedHair, body: &PosedBody, p: &EnergyParams) -> (f64, Grad) {
    let coeffs = body_coeffs(p);
    let activation = coeffs.xi + coeffs.dhat;
    let positions = hair.positions();
    let mut grad = vec![Vector3::zeros(); positions.len()];

    let losses: Vec<f64> = positions
        .par_chunks(CHUNK)
        .zip(grad.par_chunks_mut(CHUNK))
        .map(|(chunk, gchunk)| {
            let mut acc = 0.0;
            for (pt, g) in chunk.iter().zip(gchunk.iter_mut()) {
                let (d, n) = body.signed_distance(&nalgebra::Point3::from(*pt));
                if d < activation {
                    acc += barrier(&coeffs, d);
                    *g = n * (p.lambda_contact * barrier_d(&coeffs, d));
                }
            }
            acc
        })
        .collect();

    let loss: f64 = losses.iter().sum();
    zero_fixed(&mut grad, hair.verts_per_strand);
    (p.lambda_contact * loss, grad)
}

/// One near pair found by the broad phase, with the closest-point parameters.
#[derive(Debug, Clone, Copy)]
pub struct PairHit {
    pub seg_a: u32,
    pub seg_b: u32,
    pub s: f64,
    pub t: f64,
    pub distance: f64,
}

struct Segments<'a> {
    positions: &'a [Vector3<f64>],
    verts_per_strand: usize,
    count: usize,
}

impl<'a> Segments<'a> {
    fn new(hair: &'a PosedHair) -> Self {
        Segments {
            positions: hair.positions(),
            verts_per_strand: hair.verts_per_strand,
            count: hair.num_strands * (hair.verts_per_strand - 1),
        }
    }

    #[inline]
    fn strand_and_index(&self, seg: usize) -> (usize, usize) {
        let per = self.verts_per_strand - 1;
        (seg / per, seg % per)
    }

    #[inline]
    fn endpoints(&self, seg: usize) -> (Vector3<f64>, Vector3<f64>) {
        let (s, i) = self.strand_and_index(seg);
        let base = s * self.verts_per_strand + i;
        (self.positions[base], self.positions[base + 1])
    }
}

#[inline]
fn cell_of(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Midpoint spatial hash. The cell size is the activation distance plus the
/// longest segment, which makes the 27-cell neighborhood a complete candidate
/// set: any pair within the activation distance has midpoints closer than one
/// cell per axis.
struct SegmentHash {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<u32>>,
    midpoints: Vec<Vector3<f64>>,
    half_lengths: Vec<f64>,
}

impl SegmentHash {
    fn build(segs: &Segments, activation: f64) -> Self {
        let count = segs.count;
        let mut midpoints = Vec::with_capacity(count);
        let mut half_lengths = Vec::with_capacity(count);
        let mut max_len: f64 = 0.0;
        for g in 0..count {
            let (a, b) = segs.endpoints(g);
            midpoints.push((a + b) * 0.5);
            let l = (b - a).norm();
            half_lengths.push(l * 0.5);
            max_len = max_len.max(l);
        }
        let cell = activation + max_len;
        let mut map: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (g, mid) in midpoints.iter().enumerate() {
            map.entry(cell_of(mid, cell)).or_default().push(g as u32);
        }
        SegmentHash {
            cell,
            map,
            midpoints,
            half_lengths,
        }
    }
}

/// Collects every segment pair with distance below `activation`, excluding
/// pairs on the same strand within two segments of each other. Pairs are
/// emitted in ascending (seg_a, seg_b) order.
pub fn near_segment_pairs(hair: &PosedHair, activation: f64) -> Vec<PairHit> {
    let segs = Segments::new(hair);
    let hash = SegmentHash::build(&segs, activation);

    let n_chunks = segs.count.div_ceil(CHUNK);
    let mut chunks: Vec<Vec<PairHit>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(segs.count);
            let mut hits = Vec::new();
            for a in lo..hi {
                collect_pairs_for(&segs, &hash, a as u32, activation, &mut hits);
            }
            hits
        })
        .collect();

    let mut all = Vec::new();
    for c in chunks.iter_mut() {
        all.append(c);
    }
    all
}

fn collect_pairs_for(
    segs: &Segments,
    hash: &SegmentHash,
    a: u32,
    activation: f64,
    out: &mut Vec<PairHit>,
) {
    let (sa, ia) = segs.strand_and_index(a as usize);
    let mid_a = hash.midpoints[a as usize];
    let half_a = hash.half_lengths[a as usize];
    let (gx, gy, gz) = cell_of(&mid_a, hash.cell);
    let mut found: Vec<u32> = Vec::new();
    for dx in -1..=1 {
        for dy in -1..=1 {
            for dz in -1..=1 {
                if let Some(list) = hash.map.get(&(gx + dx, gy + dy, gz + dz)) {
                    for &b in list {
                        if b > a {
                            found.push(b);
                        }
                    }
                }
            }
        }
    }
    found.sort_unstable();
    for b in found {
        let (sb, ib) = segs.strand_and_index(b as usize);
        if sa == sb && ia.abs_diff(ib) <= 2 {
            continue;
        }
        let reach = activation + half_a + hash.half_lengths[b as usize];
        if (mid_a - hash.midpoints[b as usize]).norm_squared() > reach * reach {
            continue;
        }
        let (p1, q1) = segs.endpoints(a as usize);
        let (p2, q2) = segs.endpoints(b as usize);
        let (s, t, d) = segment_segment_distance(&p1, &q1, &p2, &q2);
        if d < activation {
            out.push(PairHit {
                seg_a: a,
                seg_b: b,
                s,
                t,
                distance: d,
            });
        }
    }
}

/// Hair-hair contact: the barrier applied to segment-segment distances over
/// the broad-phase candidates.
pub fn hair_contact_loss(hair: &PosedHair, p: &EnergyParams) -> (f64, Grad) {
    let coeffs = hair_coeffs(p);
    let activation = coeffs.xi + coeffs.dhat;
    let hits = near_segment_pairs(hair, activation);

    let segs = Segments::new(hair);
    let n = hair.verts_per_strand;
    let mut grad = vec![Vector3::zeros(); hair.positions().len()];
    let mut loss = 0.0;
    for hit in &hits {
        loss += barrier(&coeffs, hit.distance);
        if hit.distance <= 1e-12 {
            continue; // crossing segments: value only, zero subgradient
        }
        let (p1, q1) = segs.endpoints(hit.seg_a as usize);
        let (p2, q2) = segs.endpoints(hit.seg_b as usize);
        let c1 = p1 + (q1 - p1) * hit.s;
        let c2 = p2 + (q2 - p2) * hit.t;
        let u = (c1 - c2) / hit.distance;
        let common = p.lambda_contact * barrier_d(&coeffs, hit.distance);
        let (sa, ia) = segs.strand_and_index(hit.seg_a as usize);
        let (sb, ib) = segs.strand_and_index(hit.seg_b as usize);
        let base_a = sa * n + ia;
        let base_b = sb * n + ib;
        grad[base_a] += u * (common * (1.0 - hit.s));
        grad[base_a + 1] += u * (common * hit.s);
        grad[base_b] -= u * (common * (1.0 - hit.t));
        grad[base_b + 1] -= u * (common * hit.t);
    }
    zero_fixed(&mut grad, n);
    (p.lambda_contact * loss, grad)
}

/// Closest points between segments [p1,q1] and [p2,q2]: returns the segment
/// parameters (s, t) and the distance.
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (f64, f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    const EPS: f64 = 1e-18;

    let (s, t);
    if a <= EPS && e <= EPS {
        s = 0.0;
        t = 0.0;
    } else if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom != 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (s, t, (c1 - c2).norm())
}
