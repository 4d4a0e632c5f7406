//! Deformation maps: coarse UV-grid fields of per-vertex displacement
//! vectors, looked up per strand root and tapered toward the root.

use nalgebra::Vector3;
use strandsim_autodiff::{Elem, Tensor};
use strandsim_core::geometry::{HairAsset, PosedHair, FIXED_VERTICES_PER_STRAND};

use crate::{NetError, Result};

/// Per-cell, per-vertex displacement vectors on an `grid.0 x grid.1` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationMap {
    pub grid: (usize, usize),
    pub verts_per_strand: usize,
    /// Cell-major (row-major cells), then vertex index.
    values: Vec<Vector3<f64>>,
}

impl DeformationMap {
    pub fn zeros(grid: (usize, usize), verts_per_strand: usize) -> DeformationMap {
        DeformationMap {
            grid,
            verts_per_strand,
            values: vec![Vector3::zeros(); grid.0 * grid.1 * verts_per_strand],
        }
    }

    /// Reshapes an L x (N*3) network output into the grid.
    pub fn from_tensor(t: &Tensor, grid: (usize, usize), verts_per_strand: usize) -> Result<DeformationMap> {
        let l = grid.0 * grid.1;
        if t.shape() != [l, verts_per_strand * 3] {
            return Err(NetError::Config(format!(
                "deformation tensor {:?} does not match grid {grid:?} x {verts_per_strand} verts",
                t.shape()
            )));
        }
        let mut values = Vec::with_capacity(l * verts_per_strand);
        for cell in 0..l {
            for v in 0..verts_per_strand {
                values.push(Vector3::new(
                    t.get(cell, 3 * v) as f64,
                    t.get(cell, 3 * v + 1) as f64,
                    t.get(cell, 3 * v + 2) as f64,
                ));
            }
        }
        let map = DeformationMap {
            grid,
            verts_per_strand,
            values,
        };
        if !map.values.iter().all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(NetError::Config("non-finite deformation".into()));
        }
        Ok(map)
    }

    #[inline]
    pub fn value(&self, cell: usize, v: usize) -> Vector3<f64> {
        self.values[cell * self.verts_per_strand + v]
    }

    pub fn values_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs().max()))
    }

    /// Nearest grid cell for a root UV (clamped to the border).
    pub fn cell_for_uv(&self, uv: [f64; 2]) -> usize {
        let (mh, mw) = self.grid;
        let col = ((uv[0] * mw as f64).floor() as isize).clamp(0, mw as isize - 1) as usize;
        let row = ((uv[1] * mh as f64).floor() as isize).clamp(0, mh as isize - 1) as usize;
        row * mw + col
    }
}

/// Linear taper from 0 at the root to 1 at the tip (0-based vertex index).
#[inline]
pub fn taper(v: usize, verts_per_strand: usize) -> f64 {
    v as f64 / (verts_per_strand - 1) as f64
}

/// Applies a deformation map to rigidly posed hair: nearest-cell lookup per
/// strand root, tapered per vertex; the two fixed vertices stay untouched.
pub fn apply_deformation(
    rigid: &PosedHair,
    map: &DeformationMap,
    asset: &HairAsset,
) -> PosedHair {
    assert_eq!(map.verts_per_strand, rigid.verts_per_strand);
    let n = rigid.verts_per_strand;
    let mut out = rigid.clone();
    let positions = out.positions_mut();
    for s in 0..rigid.num_strands {
        let cell = map.cell_for_uv(asset.root_uv(s));
        for v in FIXED_VERTICES_PER_STRAND..n {
            positions[s * n + v] += map.value(cell, v) * taper(v, n);
        }
    }
    out
}

/// Chains an energy gradient over vertex positions back to the network's raw
/// deformation rows: dE/dD[cell][v] = sum over strands in the cell of
/// taper(v) * dE/dp[s][v]. Fixed vertices contribute nothing.
pub fn deformation_grad_to_tensor(
    asset: &HairAsset,
    grid: (usize, usize),
    grad: &[Vector3<f64>],
) -> Tensor {
    let n = asset.verts_per_strand;
    let l = grid.0 * grid.1;
    let map = DeformationMap::zeros(grid, n);
    let mut out = Tensor::zeros(l, n * 3);
    for s in 0..asset.num_strands {
        let cell = map.cell_for_uv(asset.root_uv(s));
        for v in FIXED_VERTICES_PER_STRAND..n {
            let g = grad[s * n + v] * taper(v, n);
            let r = cell;
            out.set(r, 3 * v, out.get(r, 3 * v) + g.x as Elem);
            out.set(r, 3 * v + 1, out.get(r, 3 * v + 1) + g.y as Elem);
            out.set(r, 3 * v + 2, out.get(r, 3 * v + 2) + g.z as Elem);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use strandsim_core::scenes::rest_scene;

    #[test]
    fn zero_map_is_identity() {
        let scene = rest_scene(4, (3, 3), 10, 0.3).unwrap();
        let map = DeformationMap::zeros((2, 2), 10);
        let out = apply_deformation(&scene.rigid, &map, &scene.asset);
        assert_eq!(out.positions(), scene.rigid.positions());
    }

    #[test]
    fn cell_center_uv_selects_cell() {
        let map = DeformationMap::zeros((4, 4), 5);
        for row in 0..4 {
            for col in 0..4 {
                let uv = [(col as f64 + 0.5) / 4.0, (row as f64 + 0.5) / 4.0];
                assert_eq!(map.cell_for_uv(uv), row * 4 + col);
            }
        }
        // outside the grid: clamped to border cells
        assert_eq!(map.cell_for_uv([-0.2, -3.0]), 0);
        assert_eq!(map.cell_for_uv([1.7, 2.0]), 15);
    }

    #[test]
    fn taper_endpoints_and_fixed_vertices() {
        let scene = rest_scene(5, (2, 2), 10, 0.3).unwrap();
        let n = 10;
        let mut map = DeformationMap::zeros((2, 2), n);
        let u = 0.04;
        for v in map.values_mut() {
            *v = Vector3::new(0.0, -u, 0.0);
        }
        let out = apply_deformation(&scene.rigid, &map, &scene.asset);
        for s in 0..out.num_strands {
            let tip = out.vertex(s, n - 1) - scene.rigid.vertex(s, n - 1);
            assert!((tip - Vector3::new(0.0, -u, 0.0)).norm() < 1e-12);
            assert_eq!(out.vertex(s, 0), scene.rigid.vertex(s, 0));
            assert_eq!(out.vertex(s, 1), scene.rigid.vertex(s, 1));
            let mid = out.vertex(s, 4) - scene.rigid.vertex(s, 4);
            assert!((mid - Vector3::new(0.0, -u * taper(4, n), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn application_is_affine_in_the_map() {
        let scene = rest_scene(6, (3, 2), 8, 0.3).unwrap();
        let n = 8;
        let mut m1 = DeformationMap::zeros((2, 3), n);
        let mut m2 = DeformationMap::zeros((2, 3), n);
        for (i, v) in m1.values_mut().iter_mut().enumerate() {
            *v = Vector3::new(0.001 * (i % 7) as f64, -0.002, 0.0005 * (i % 3) as f64);
        }
        for (i, v) in m2.values_mut().iter_mut().enumerate() {
            *v = Vector3::new(-0.0004 * (i % 5) as f64, 0.0011, 0.0002 * (i % 4) as f64);
        }
        let mut sum = m1.clone();
        for (a, b) in sum.values_mut().iter_mut().zip(m2.values_mut()) {
            *a += *b;
        }
        let out_sum = apply_deformation(&scene.rigid, &sum, &scene.asset);
        let out_1 = apply_deformation(&scene.rigid, &m1, &scene.asset);
        let out_12 = apply_deformation(&out_1, &m2, &scene.asset);
        for (a, b) in out_sum.positions().iter().zip(out_12.positions()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
