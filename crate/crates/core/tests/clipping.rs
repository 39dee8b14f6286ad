mod common;

use common::*;
use conebeam::kernel::{line_update, pad_image, KernelConfig, LaneWidth, LineSpan, ProjectionView, RecipMode};
use conebeam::precompute::{build_clip_table, clip_stats, visibility_margin, ClipTable};
use conebeam::scheduler::{reconstruct, RunConfig};
use proptest::prelude::*;

/// Visibility from first principles: the bilinear footprint of the voxel's
/// projection can reach a real pixel, with the library's stated margin.
fn visible(m: &conebeam::geometry::ProjectionMatrix, l: usize, x: usize, y: usize, z: usize, isx: usize, isy: usize) -> bool {
    let a = &m.a;
    let (wx, wy, wz) = (voxel_center(l, x), voxel_center(l, y), voxel_center(l, z));
    let w = a[2] * wx + a[5] * wy + a[8] * wz + a[11];
    let u = (a[0] * wx + a[3] * wy + a[6] * wz + a[9]) / w;
    let v = (a[1] * wx + a[4] * wy + a[7] * wz + a[10]) / w;
    let e = visibility_margin(isx, isy);
    u >= -1.0 - e && u < isx as f64 + e && v >= -1.0 - e && v < isy as f64 + e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ranges_are_minimal_and_exact(seed in any::<u64>(), isx in 4usize..40, isy in 4usize..40, l in 4usize..20) {
        let mut r = rng(seed);
        let m = random_matrix(&mut r, isx, isy);
        let g = grid(l);
        let t = build_clip_table(&g, std::slice::from_ref(&m), isx, isy).unwrap();
        let ones = vec![1.0f32; isx * isy];
        for z in 0..l {
            for y in 0..l {
                let vis: Vec<usize> = (0..l).filter(|&x| visible(&m, l, x, y, z, isx, isy)).collect();
                let want = vis.first().map(|&f| (f, *vis.last().unwrap()));
                prop_assert_eq!(t.range(0, z, y), want);

                // Every voxel outside the range reads only the zero border.
                for cfg in [KernelConfig::oracle(), KernelConfig::fast(LaneWidth::One, RecipMode::Approx12)] {
                    let img = pad_image::<f32>(&ones, isx, isy, 1);
                    let a = m.narrow::<f32>();
                    let mut line = vec![0.0f32; l];
                    line_update(&mut line, ProjectionView { image: &img, matrix: &a }, &g, LineSpan::full(&g, y, z), &cfg);
                    for x in 0..l {
                        let inside = want.is_some_and(|(f, e)| f <= x && x <= e);
                        if !inside {
                            prop_assert_eq!(line[x], 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn clipped_equals_unclipped_for_all_modes() {
    let stack = spheres_stack(24, 8);
    let g = grid(32);
    for kernel in [
        KernelConfig::oracle(),
        KernelConfig::strict(LaneWidth::Eight),
        KernelConfig::fast(LaneWidth::Four, RecipMode::Approx12),
        KernelConfig::fast(LaneWidth::Eight, RecipMode::Approx12Nr),
    ] {
        let base = RunConfig {
            kernel,
            clip: false,
            ..RunConfig::default()
        };
        let (full, s_full) = reconstruct::<f32>(&stack, &g, &base, None).unwrap();
        let (clipped, s_clip) = reconstruct::<f32>(&stack, &g, &RunConfig { clip: true, ..base }, None).unwrap();
        assert!(full.bitwise_eq(&clipped), "{kernel}");
        assert!(s_clip.updates < s_full.updates);
    }
}

#[test]
fn table_file_round_trip_and_use() {
    let stack = spheres_stack(6, 16);
    let g = grid(16);
    let t = build_clip_table(&g, &stack.matrices, stack.isx, stack.isy).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.bpct");
    t.write(&p).unwrap();
    let back = ClipTable::read(&p).unwrap();
    assert_eq!(back, t);
    let cfg = RunConfig::default();
    let (a, sa) = reconstruct::<f32>(&stack, &g, &cfg, Some(&back)).unwrap();
    let (b, sb) = reconstruct::<f32>(&stack, &g, &cfg, None).unwrap();
    assert!(a.bitwise_eq(&b));
    assert_eq!(sa.updates, clip_stats(&t).total_updates);
    assert_eq!(sa.updates, sb.updates);
}

#[test]
fn reduction_on_default_geometry() {
    let traj = small_trajectory(60, 8);
    let g = grid(128);
    let t = build_clip_table(&g, &traj.matrices().unwrap(), traj.nu, traj.nv).unwrap();
    let s = clip_stats(&t);
    assert!((0.25..=0.45).contains(&s.reduction), "reduction {}", s.reduction);
    assert_eq!(s.bytes, 128 * 128 * 60 * 4);
}
