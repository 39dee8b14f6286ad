//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use conebeam::datagen::{generate_stack, make_phantom, PhantomKind, ProjectionStack};
use conebeam::geometry::{CircularTrajectory, ProjectionMatrix, VoxelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Perspective matrix for a source on a circle of radius `sid` at angle
/// `theta`, flat detector at `sdd`, principal point `(cu, cv)`, built from
/// first principles (no library geometry code).
pub fn perspective(theta: f64, sid: f64, sdd: f64, pitch: f64, cu: f64, cv: f64) -> ProjectionMatrix {
    let (s, c) = theta.sin_cos();
    let src = [sid * c, sid * s, 0.0];
    let d = [-c, -s, 0.0];
    let eu = [-s, c, 0.0];
    let ev = [0.0, 0.0, 1.0];
    let f = sdd / pitch;
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    // w = d·(p − src), u·w = f·eu·(p − src) + cu·w, likewise v.
    let row = |axis: [f64; 3], k: f64| {
        [
            f * axis[0] + k * d[0],
            f * axis[1] + k * d[1],
            f * axis[2] + k * d[2],
            -(f * dot(axis, src) + k * dot(d, src)),
        ]
    };
    let w = [d[0], d[1], d[2], -dot(d, src)];
    ProjectionMatrix::from_rows(row(eu, cu), row(ev, cv), w)
}

/// Random valid perspective matrix whose detector roughly covers the volume,
/// with a small generic perturbation of all coefficients.
pub fn random_matrix(r: &mut impl Rng, isx: usize, isy: usize) -> ProjectionMatrix {
    let theta = r.gen_range(0.0..2.0 * PI);
    let sid = r.gen_range(500.0..900.0);
    let sdd = sid + r.gen_range(200.0..700.0);
    // Pitch chosen so the 256 mm volume spans 0.5 to 2 detector widths.
    let span = r.gen_range(0.5..2.0);
    let pitch = 256.0 * sdd / sid / (isx as f64 * span);
    let cu = isx as f64 / 2.0 + r.gen_range(-3.0..3.0);
    let cv = isy as f64 / 2.0 + r.gen_range(-3.0..3.0);
    let mut m = perspective(theta, sid, sdd, pitch, cu, cv);
    for (i, v) in m.a.iter_mut().enumerate() {
        // Keep the w row a pure depth so w stays positive on the volume.
        if i % 3 != 2 {
            *v *= 1.0 + r.gen_range(-1e-3..1e-3);
        }
    }
    m
}

pub fn random_image(r: &mut impl Rng, isx: usize, isy: usize) -> Vec<f32> {
    (0..isx * isy).map(|_| r.gen_range(0.0f32..1.0)).collect()
}

/// World coordinate of voxel index `i` on an `l`-grid, from first principles.
pub fn voxel_center(l: usize, i: usize) -> f64 {
    (i as f64 + 0.5) * (256.0 / l as f64) - 128.0
}

/// Per-voxel increments of one line, evaluated the plain way: divisions,
/// guarded reads that default to zero, 64-bit throughout.
pub fn brute_force_line(img: &[f32], isx: usize, isy: usize, m: &ProjectionMatrix, l: usize, y: usize, z: usize) -> Vec<f64> {
    let a = &m.a;
    let wy = voxel_center(l, y);
    let wz = voxel_center(l, z);
    let px = |iu: i64, iv: i64| -> f64 {
        if iu >= 0 && iv >= 0 && (iu as usize) < isx && (iv as usize) < isy {
            img[iv as usize * isx + iu as usize] as f64
        } else {
            0.0
        }
    };
    (0..l)
        .map(|x| {
            let wx = voxel_center(l, x);
            let uw = a[0] * wx + a[3] * wy + a[6] * wz + a[9];
            let vw = a[1] * wx + a[4] * wy + a[7] * wz + a[10];
            let w = a[2] * wx + a[5] * wy + a[8] * wz + a[11];
            let u = uw / w;
            let v = vw / w;
            let (fu, fv) = (u.floor(), v.floor());
            let (iu, iv) = (fu as i64, fv as i64);
            let (sx, sy) = (u - fu, v - fv);
            let tl = px(iu, iv);
            let tr = px(iu + 1, iv);
            let bl = px(iu, iv + 1);
            let br = px(iu + 1, iv + 1);
            let left = sy * bl + (1.0 - sy) * tl;
            let right = sy * br + (1.0 - sy) * tr;
            (sx * right + (1.0 - sx) * left) / (w * w)
        })
        .collect()
}

/// Small circular acquisition on the benchmark's physical detector, binned.
pub fn small_trajectory(views: usize, bin: usize) -> CircularTrajectory {
    CircularTrajectory::default().binned(bin).with_views(views)
}

pub fn spheres_stack(views: usize, bin: usize) -> ProjectionStack {
    generate_stack(&make_phantom(PhantomKind::Spheres3), &small_trajectory(views, bin)).unwrap()
}

/// Detector with pixels of about one 4 mm voxel at the isocenter and odd
/// dimensions, so the principal point is a pixel center.
pub fn point_trajectory(views: usize) -> CircularTrajectory {
    CircularTrajectory {
        views,
        nu: 63,
        nv: 47,
        pitch: 6.4,
        ..CircularTrajectory::default()
    }
}

pub fn grid(l: usize) -> VoxelGrid {
    VoxelGrid::new(l).unwrap()
}
