//! Evaluation metrics: penetration percentage, length change percentage and
//! wall-clock per drape.

use serde::{Deserialize, Serialize};

use crate::body::PosedBody;
use crate::geometry::{HairAsset, PosedHair, FIXED_VERTICES_PER_STRAND};

/// Metric record for one method on one scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scene_tag: String,
    pub method_tag: String,
    pub penetration_pct: f64,
    pub length_change_pct: f64,
    /// Milliseconds per drape; omitted for the initial state and in
    /// deterministic output mode.
    pub time_ms_per_drape: Option<f64>,
}

/// Percentage of hair vertices with negative signed distance to the body.
/// Fixed root vertices are counted; see [`penetration_pct_excluding_fixed`].
pub fn penetration_pct(hair: &PosedHair, body: &PosedBody) -> f64 {
    penetration_pct_impl(hair, body, false)
}

/// Penetration percentage over movable vertices only.
pub fn penetration_pct_excluding_fixed(hair: &PosedHair, body: &PosedBody) -> f64 {
    penetration_pct_impl(hair, body, true)
}

fn penetration_pct_impl(hair: &PosedHair, body: &PosedBody, exclude_fixed: bool) -> f64 {
    let n = hair.verts_per_strand;
    let skip = if exclude_fixed { FIXED_VERTICES_PER_STRAND } else { 0 };
    let mut inside = 0usize;
    let mut total = 0usize;
    for s in 0..hair.num_strands {
        for v in skip..n {
            let (d, _) = body.signed_distance(&nalgebra::Point3::from(hair.vertex(s, v)));
            if d < 0.0 {
                inside += 1;
            }
            total += 1;
        }
    }
    100.0 * inside as f64 / total.max(1) as f64
}

/// Mean relative change of total strand length versus the rest lengths, in
/// percent.
pub fn length_change_pct(hair: &PosedHair, asset: &HairAsset) -> f64 {
    let n = hair.verts_per_strand;
    let mut acc = 0.0;
    for s in 0..hair.num_strands {
        let mut cur = 0.0;
        for i in 0..n - 1 {
            cur += (hair.vertex(s, i + 1) - hair.vertex(s, i)).norm();
        }
        let rest = asset.strand_rest_length(s);
        acc += (cur - rest).abs() / rest;
    }
    100.0 * acc / hair.num_strands as f64
}

/// Median wall-clock of `repeats` timed runs of `f`, warmup excluded.
pub fn time_drape_ms<F: FnMut()>(repeats: usize, warmup: usize, mut f: F) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let mut samples: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t0 = std::time::Instant::now();
            f();
            t0.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(&mut samples)
}

/// Median with the lower-middle convention for even counts.
pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[(samples.len() - 1) / 2]
}
