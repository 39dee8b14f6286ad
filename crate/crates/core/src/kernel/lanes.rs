use super::scalar::voxel_increment;
use super::{weighted, ExtractStrategy, KernelConfig, LaneWidth, LineConstants, LineSpan, ProjectionView};
use crate::geometry::VoxelGrid;
use crate::kernel::reciprocal::reciprocal;
use crate::scalar::Real;

/// Updates `line[x0..=x1]` in groups of `W` consecutive voxels, finishing
/// with at most `W − 1` scalar iterations.
///
/// Falls back to the scalar kernel for `W = 1`.
pub fn line_update_lanes<T: Real>(
    line: &mut [T],
    view: ProjectionView<'_, T>,
    grid: &VoxelGrid,
    span: LineSpan,
    cfg: &KernelConfig,
) -> usize {
    match cfg.lanes {
        LaneWidth::One => super::line_update_scalar(line, view, grid, span, cfg),
        LaneWidth::Four => run::<T, 4>(line, view, grid, span, cfg),
        LaneWidth::Eight => run::<T, 8>(line, view, grid, span, cfg),
    }
}

fn run<T: Real, const W: usize>(
    line: &mut [T],
    view: ProjectionView<'_, T>,
    grid: &VoxelGrid,
    span: LineSpan,
    cfg: &KernelConfig,
) -> usize {
    if span.is_empty() {
        return 0;
    }
    let consts = LineConstants::new(view.matrix, grid, span.y, span.z);
    let n = span.len();
    let groups = n / W;
    let tail_start = span.x0 + groups * W;

    for g in 0..groups {
        let x = span.x0 + g * W;
        let inc = step::<T, W>(view, grid, &consts, x, cfg);
        for (dst, d) in line[x..x + W].iter_mut().zip(inc) {
            *dst += d;
        }
    }
    for x in tail_start..=span.x1 {
        line[x] += voxel_increment(view, grid, &consts, x, cfg);
    }
    n
}

/// One lane group: increments for voxels `x .. x + W`.
#[inline(always)]
fn step<T: Real, const W: usize>(
    view: ProjectionView<'_, T>,
    grid: &VoxelGrid,
    consts: &LineConstants<T>,
    x: usize,
    cfg: &KernelConfig,
) -> [T; W] {
    let img = view.image;
    let a = view.matrix;
    let zero = T::zero();

    // Part 1, lane-parallel.
    let mut r = [zero; W];
    let mut fu = [zero; W];
    let mut fv = [zero; W];
    let mut scalx = [zero; W];
    let mut scaly = [zero; W];
    for l in 0..W {
        let wx = grid.coord::<T>(0, x + l);
        let (uw, vw, w) = consts.rows(a, wx, cfg.arithmetic);
        r[l] = reciprocal(w, cfg.recip);
        let u = uw * r[l];
        let v = vw * r[l];
        fu[l] = u.floor_fast();
        fv[l] = v.floor_fast();
        scalx[l] = u - fu[l];
        scaly[l] = v - fv[l];
    }
    let lo = img.lo();
    let (hu, hv) = img.hi();
    for l in 0..W {
        fu[l] = fu[l].max(lo).min(hu);
        fv[l] = fv[l].max(lo).min(hv);
    }

    // Part 2: serial pairwise gathers.
    let mut tl = [zero; W];
    let mut tr = [zero; W];
    let mut bl = [zero; W];
    let mut br = [zero; W];
    match cfg.extract {
        ExtractStrategy::V1Store => {
            let mut iu = [0isize; W];
            let mut iv = [0isize; W];
            for l in 0..W {
                iu[l] = fu[l].to_index();
                iv[l] = fv[l].to_index();
            }
            let mut idx = [0usize; W];
            for l in 0..W {
                idx[l] = img.offset_of(iu[l], iv[l]);
            }
            for l in 0..W {
                let ([a0, a1], [b0, b1]) = img.pairs_at(idx[l]);
                tl[l] = a0;
                tr[l] = a1;
                bl[l] = b0;
                br[l] = b1;
            }
        }
        ExtractStrategy::V2Shift => {
            for l in 0..W {
                let ([a0, a1], [b0, b1]) = img.pairs_at(img.offset_of(fu[l].to_index(), fv[l].to_index()));
                tl[l] = a0;
                tr[l] = a1;
                bl[l] = b0;
                br[l] = b1;
            }
        }
    }

    // Part 3, lane-parallel. Same association order as `bilinear`.
    let one = T::one();
    let mut out = [zero; W];
    for l in 0..W {
        let vall = scaly[l] * bl[l] + (one - scaly[l]) * tl[l];
        let valr = scaly[l] * br[l] + (one - scaly[l]) * tr[l];
        let fx = scalx[l] * valr + (one - scalx[l]) * vall;
        out[l] = weighted(fx, r[l], cfg.weighting);
    }
    out
}
