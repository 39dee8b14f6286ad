//! Voxel lattice, projection matrices and synthetic circular trajectories.
//!
//! World frame: right-handed, millimetres, isocenter at the origin, rotation
//! axis along z. The reconstructed cube always spans 256 mm per edge.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::reciprocal::{reciprocal, RecipMode};
use crate::scalar::Real;

/// Physical edge length of the reconstructed cube in mm.
pub const VOLUME_EDGE_MM: f64 = 256.0;

/// Cubic `L³` voxel lattice centered on the isocenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    l: usize,
    mm: f64,
    offset: [f64; 3],
}

impl VoxelGrid {
    pub fn new(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Config("voxel grid needs L >= 1".into()));
        }
        let mm = VOLUME_EDGE_MM / l as f64;
        let off = -0.5 * (l as f64 - 1.0) * mm;
        Ok(VoxelGrid {
            l,
            mm,
            offset: [off; 3],
        })
    }

    /// Voxels per edge.
    #[inline]
    pub fn size(&self) -> usize {
        self.l
    }

    /// Voxel edge length in mm.
    #[inline]
    pub fn voxel_mm(&self) -> f64 {
        self.mm
    }

    /// World coordinate of the center of voxel `(0, 0, 0)`.
    #[inline]
    pub fn offset(&self) -> [f64; 3] {
        self.offset
    }

    pub fn num_voxels(&self) -> usize {
        self.l * self.l * self.l
    }

    /// World position (mm) of a voxel center.
    ///
    /// Panics if any index is outside `[0, L)`.
    pub fn voxel_to_world(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        assert!(
            x < self.l && y < self.l && z < self.l,
            "voxel index ({x}, {y}, {z}) outside grid of size {}",
            self.l
        );
        [
            self.offset[0] + x as f64 * self.mm,
            self.offset[1] + y as f64 * self.mm,
            self.offset[2] + z as f64 * self.mm,
        ]
    }

    /// Inverse of [`voxel_to_world`](Self::voxel_to_world) along one axis.
    pub fn world_to_index(&self, axis: usize, w: f64) -> isize {
        ((w - self.offset[axis]) / self.mm).round() as isize
    }

    /// Kernel-precision coordinate of index `i` along `axis`:
    /// `offset + i·MM`, evaluated in `T`.
    #[inline(always)]
    pub fn coord<T: Real>(&self, axis: usize, i: usize) -> T {
        T::lit(self.offset[axis]) + T::from_index(i) * T::lit(self.mm)
    }

    /// The eight corner voxel centers of the grid.
    pub fn corner_centers(&self) -> [[f64; 3]; 8] {
        let lo = self.offset;
        let hi = [
            lo[0] + (self.l - 1) as f64 * self.mm,
            lo[1] + (self.l - 1) as f64 * self.mm,
            lo[2] + (self.l - 1) as f64 * self.mm,
        ];
        let mut out = [[0.0; 3]; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = [
                if i & 1 == 0 { lo[0] } else { hi[0] },
                if i & 2 == 0 { lo[1] } else { hi[1] },
                if i & 4 == 0 { lo[2] } else { hi[2] },
            ];
        }
        out
    }
}

/// 3×4 homogeneous projection matrix stored column-major:
/// the u-row is `(a[0], a[3], a[6], a[9])`, the v-row `(a[1], a[4], a[7], a[10])`
/// and the w-row `(a[2], a[5], a[8], a[11])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub a: [f64; 12],
}

/// Continuous and discrete detector coordinates of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord<T> {
    pub u: T,
    pub v: T,
    pub w: T,
    pub iu: isize,
    pub iv: isize,
    pub scalx: T,
    pub scaly: T,
}

/// Evaluates the three matrix rows at a world point, in the association
/// order `((a·wx + a·wy) + a·wz) + a`. Every kernel goes through here so that
/// scalar and lane paths round identically.
#[inline(always)]
pub fn homogeneous<T: Real>(a: &[T; 12], wx: T, wy: T, wz: T) -> (T, T, T) {
    let uw = a[0] * wx + a[3] * wy + a[6] * wz + a[9];
    let vw = a[1] * wx + a[4] * wy + a[7] * wz + a[10];
    let w = a[2] * wx + a[5] * wy + a[8] * wz + a[11];
    (uw, vw, w)
}

impl ProjectionMatrix {
    pub fn from_rows(u: [f64; 4], v: [f64; 4], w: [f64; 4]) -> Self {
        let mut a = [0.0; 12];
        for c in 0..4 {
            a[3 * c] = u[c];
            a[3 * c + 1] = v[c];
            a[3 * c + 2] = w[c];
        }
        ProjectionMatrix { a }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.a[3 * col + row]
    }

    pub fn row(&self, row: usize) -> [f64; 4] {
        [
            self.get(row, 0),
            self.get(row, 1),
            self.get(row, 2),
            self.get(row, 3),
        ]
    }

    /// `A · (p, 1)` in double precision.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (u, v, w) = homogeneous(&self.a, p[0], p[1], p[2]);
        [u, v, w]
    }

    /// Coefficients narrowed to the kernel precision.
    pub fn narrow<T: Real>(&self) -> [T; 12] {
        self.a.map(T::lit)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        ProjectionMatrix {
            a: self.a.map(|c| c * alpha),
        }
    }

    /// Matrix for the same camera after moving the world frame origin by `t`,
    /// i.e. `A'·(p + t, 1) = A·(p, 1)`.
    pub fn translated(&self, t: [f64; 3]) -> Self {
        let mut out = *self;
        for r in 0..3 {
            let shift = self.get(r, 0) * t[0] + self.get(r, 1) * t[1] + self.get(r, 2) * t[2];
            out.a[9 + r] -= shift;
        }
        out
    }

    /// Frobenius norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.a.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn left_block(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = self.get(r, c);
            }
        }
        m
    }

    /// Inverse of the left 3×3 block.
    pub fn left_block_inverse(&self) -> Result<[[f64; 3]; 3]> {
        invert3(&self.left_block()).ok_or(Error::DegenerateMatrix)
    }

    /// Source position: the world point `C` with `A·(C, 1) = 0`.
    pub fn camera_center(&self) -> Result<[f64; 3]> {
        let inv = self.left_block_inverse()?;
        let p4 = [self.get(0, 3), self.get(1, 3), self.get(2, 3)];
        let mut c = [0.0; 3];
        for (r, out) in c.iter_mut().enumerate() {
            *out = -(inv[r][0] * p4[0] + inv[r][1] * p4[1] + inv[r][2] * p4[2]);
        }
        Ok(c)
    }

    /// Direction (not normalized) of the ray from the source through detector
    /// position `(u, v)`, oriented towards increasing `w`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Result<[f64; 3]> {
        let inv = self.left_block_inverse()?;
        let q = [u, v, 1.0];
        let mut d = [0.0; 3];
        for (r, out) in d.iter_mut().enumerate() {
            *out = inv[r][0] * q[0] + inv[r][1] * q[1] + inv[r][2] * q[2];
        }
        Ok(d)
    }

    /// Checks that every voxel center of `grid` lies strictly on the source
    /// side (`w > 0`). `w` is affine, so testing the eight corners suffices.
    pub fn validate_for_grid(&self, grid: &VoxelGrid) -> std::result::Result<(), String> {
        if self.a.iter().any(|c| !c.is_finite()) {
            return Err("non-finite coefficient".into());
        }
        for c in grid.corner_centers() {
            let w = self.apply(c)[2];
            if !(w > 0.0) {
                return Err(format!(
                    "w = {w} <= 0 at voxel corner ({}, {}, {})",
                    c[0], c[1], c[2]
                ));
            }
        }
        Ok(())
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let c00 = cof(1, 2, 1, 2);
    let c01 = -cof(1, 2, 0, 2);
    let c02 = cof(1, 2, 0, 1);
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let scale: f64 = m.iter().flatten().map(|e| e * e).sum::<f64>().sqrt();
    if !det.is_finite() || det.abs() <= 1e-12 * scale * scale * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [c00 * inv_det, -cof(0, 2, 1, 2) * inv_det, cof(0, 1, 1, 2) * inv_det],
        [c01 * inv_det, cof(0, 2, 0, 2) * inv_det, -cof(0, 1, 0, 2) * inv_det],
        [c02 * inv_det, -cof(0, 2, 0, 1) * inv_det, cof(0, 1, 0, 1) * inv_det],
    ])
}

/// Projects a world point with the kernel's arithmetic: one reciprocal of
/// `w`, then `u = uw·r`, `v = vw·r`, floor to pixel indices.
pub fn project<T: Real>(a: &[T; 12], p: [T; 3], mode: RecipMode) -> Result<PixelCoord<T>> {
    let (uw, vw, w) = homogeneous(a, p[0], p[1], p[2]);
    if !(w > T::zero()) {
        return Err(Error::BehindSource {
            w: w.to_f64().unwrap_or(f64::NAN),
        });
    }
    let r = reciprocal(w, mode);
    let u = uw * r;
    let v = vw * r;
    let fu = u.floor();
    let fv = v.floor();
    Ok(PixelCoord {
        u,
        v,
        w,
        iu: fu.to_index(),
        iv: fv.to_index(),
        scalx: u - fu,
        scaly: v - fv,
    })
}

/// Circular source trajectory around the z axis with a flat detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularTrajectory {
    pub views: usize,
    /// Source to isocenter distance (mm).
    pub sid: f64,
    /// Source to detector distance (mm).
    pub sdd: f64,
    pub nu: usize,
    pub nv: usize,
    /// Detector pixel pitch (mm / pixel).
    pub pitch: f64,
}

impl Default for CircularTrajectory {
    /// The benchmark acquisition: 496 views onto a 1248×960 detector.
    fn default() -> Self {
        CircularTrajectory {
            views: 496,
            sid: 750.0,
            sdd: 1200.0,
            nu: 1248,
            nv: 960,
            pitch: 0.32,
        }
    }
}

impl CircularTrajectory {
    /// Same physical detector with `factor × factor` pixels merged.
    pub fn binned(self, factor: usize) -> Self {
        CircularTrajectory {
            nu: self.nu / factor,
            nv: self.nv / factor,
            pitch: self.pitch * factor as f64,
            ..self
        }
    }

    pub fn with_views(self, views: usize) -> Self {
        CircularTrajectory { views, ..self }
    }

    pub fn matrices(&self) -> Result<Vec<ProjectionMatrix>> {
        make_circular_trajectory(self.views, self.sid, self.sdd, self.nu, self.nv, self.pitch)
    }
}

/// Builds one matrix per view at angles `2πk / n_views`.
///
/// The source sits at `sid·(cos θ, sin θ, 0)`; the detector is perpendicular
/// to the source–isocenter ray at distance `sdd`, with its principal point at
/// pixel `((nu−1)/2, (nv−1)/2)`. `w` is the metric depth along the central ray.
pub fn make_circular_trajectory(
    n_views: usize,
    sid: f64,
    sdd: f64,
    nu: usize,
    nv: usize,
    pitch: f64,
) -> Result<Vec<ProjectionMatrix>> {
    if n_views == 0 {
        return Err(Error::Config("trajectory needs at least one view".into()));
    }
    if !(sid > 0.0 && sdd > sid) {
        return Err(Error::Config(format!(
            "need 0 < sid < sdd, got sid={sid} sdd={sdd}"
        )));
    }
    if nu < 2 || nv < 2 {
        return Err(Error::Config(format!("detector {nu}x{nv} too small")));
    }
    if !(pitch > 0.0) {
        return Err(Error::Config(format!("pitch must be positive, got {pitch}")));
    }

    let focal = sdd / pitch;
    let cu = (nu as f64 - 1.0) / 2.0;
    let cv = (nv as f64 - 1.0) / 2.0;

    let mats = (0..n_views)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n_views as f64;
            let (s, c) = theta.sin_cos();
            let source = [sid * c, sid * s, 0.0];
            let depth = [-c, -s, 0.0];
            let e_u = [-s, c, 0.0];
            let e_v = [0.0, 0.0, 1.0];

            let mut rows = [[0.0; 4]; 3];
            for i in 0..3 {
                rows[0][i] = focal * e_u[i] + cu * depth[i];
                rows[1][i] = focal * e_v[i] + cv * depth[i];
                rows[2][i] = depth[i];
            }
            for row in rows.iter_mut() {
                row[3] = -(row[0] * source[0] + row[1] * source[1] + row[2] * source[2]);
            }
            ProjectionMatrix::from_rows(rows[0], rows[1], rows[2])
        })
        .collect();
    Ok(mats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_like() -> ProjectionMatrix {
        ProjectionMatrix::from_rows([1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn voxel_to_world_l512() {
        let g = VoxelGrid::new(512).unwrap();
        assert_eq!(g.voxel_to_world(0, 0, 0), [-127.75; 3]);
        assert_eq!(g.voxel_to_world(511, 0, 0)[0], 127.75);
    }

    #[test]
    fn voxel_to_world_l256_center() {
        let g = VoxelGrid::new(256).unwrap();
        assert_eq!(g.voxel_to_world(128, 0, 0)[0], 0.5);
    }

    #[test]
    #[should_panic]
    fn voxel_to_world_out_of_range() {
        VoxelGrid::new(8).unwrap().voxel_to_world(8, 0, 0);
    }

    #[test]
    fn zero_sized_grid_rejected() {
        assert!(VoxelGrid::new(0).is_err());
    }

    #[test]
    fn world_index_round_trip() {
        for l in [1, 7, 64, 100, 512] {
            let g = VoxelGrid::new(l).unwrap();
            for x in 0..l {
                let w = g.voxel_to_world(x, 0, 0)[0];
                assert_eq!(g.world_to_index(0, w), x as isize);
            }
        }
    }

    #[test]
    fn project_identity_like() {
        let a = identity_like().narrow::<f64>();
        let pc = project(&a, [3.25, 7.5, -2.0], RecipMode::Exact).unwrap();
        assert_eq!((pc.u, pc.v, pc.w), (3.25, 7.5, 1.0));
        assert_eq!((pc.iu, pc.iv), (3, 7));
        assert_eq!(pc.scalx, 0.25);
        assert_eq!(pc.scaly, 0.5);
    }

    #[test]
    fn project_rejects_points_behind_source() {
        let a = ProjectionMatrix::from_rows([1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]);
        let err = project(&a.narrow::<f32>(), [0.0, 0.0, -1.0], RecipMode::Exact).unwrap_err();
        assert!(matches!(err, Error::BehindSource { .. }));
        assert!(project(&a.narrow::<f32>(), [0.0, 0.0, 0.0], RecipMode::Exact).is_err());
    }

    #[test]
    fn principal_ray_hits_detector_center() {
        let m = make_circular_trajectory(1, 750.0, 1200.0, 1248, 960, 0.32).unwrap()[0];
        let pc = project(&m.narrow::<f64>(), [0.0; 3], RecipMode::Exact).unwrap();
        assert!((pc.u - 623.5).abs() < 1e-9);
        assert!((pc.v - 479.5).abs() < 1e-9);
        assert!((pc.w - 750.0).abs() < 1e-9);
    }

    #[test]
    fn camera_center_is_source() {
        let m = make_circular_trajectory(1, 750.0, 1200.0, 1248, 960, 0.32).unwrap()[0];
        let c = m.camera_center().unwrap();
        let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        assert!(((r - 750.0) / 750.0).abs() < 1e-9);
        assert!((c[0] - 750.0).abs() < 1e-9);
        let img = m.apply(c);
        for comp in img {
            assert!(comp.abs() < 1e-9 * m.norm());
        }
    }

    #[test]
    fn camera_center_translation_equivariance() {
        let m = make_circular_trajectory(7, 750.0, 1200.0, 64, 48, 6.4).unwrap()[3];
        let t = [12.5, -3.0, 40.25];
        let c0 = m.camera_center().unwrap();
        let c1 = m.translated(t).camera_center().unwrap();
        for i in 0..3 {
            assert!((c1[i] - (c0[i] + t[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = ProjectionMatrix::from_rows([1.0, 1.0, 0.0, 0.0], [2.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 5.0]);
        assert!(matches!(m.camera_center(), Err(Error::DegenerateMatrix)));
    }

    #[test]
    fn antipodal_views() {
        let mats = make_circular_trajectory(8, 750.0, 1200.0, 64, 48, 6.4).unwrap();
        for k in 0..4 {
            let a = mats[k].camera_center().unwrap();
            let b = mats[k + 4].camera_center().unwrap();
            assert!((a[0] + b[0]).abs() < 1e-9 && (a[1] + b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn benchmark_geometry_is_valid_for_l512() {
        let grid = VoxelGrid::new(512).unwrap();
        for m in CircularTrajectory::default().matrices().unwrap() {
            m.validate_for_grid(&grid).unwrap();
        }
    }

    #[test]
    fn trajectory_parameter_errors() {
        assert!(make_circular_trajectory(0, 750.0, 1200.0, 10, 10, 1.0).is_err());
        assert!(make_circular_trajectory(1, 1200.0, 750.0, 10, 10, 1.0).is_err());
        assert!(make_circular_trajectory(1, 750.0, 1200.0, 1, 10, 1.0).is_err());
        assert!(make_circular_trajectory(1, 750.0, 1200.0, 10, 10, 0.0).is_err());
    }

    #[test]
    fn homogeneous_invariance_f32() {
        let m = make_circular_trajectory(5, 750.0, 1200.0, 1248, 960, 0.32).unwrap()[2];
        let g = VoxelGrid::new(64).unwrap();
        let p = [g.coord::<f32>(0, 3), g.coord::<f32>(1, 40), g.coord::<f32>(2, 17)];
        let base = project(&m.narrow::<f32>(), p, RecipMode::Exact).unwrap();
        // Powers of two keep the scaled coefficients exact.
        for alpha in [0.25, 2.0, 1024.0] {
            let s = project(&m.scaled(alpha).narrow::<f32>(), p, RecipMode::Exact).unwrap();
            assert_eq!((s.iu, s.iv, s.scalx, s.scaly), (base.iu, base.iv, base.scalx, base.scaly));
            assert_eq!(s.w, base.w * alpha as f32);
        }
    }
}
