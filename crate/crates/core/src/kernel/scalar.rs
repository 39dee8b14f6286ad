use super::{bilinear, weighted, KernelConfig, LineConstants, LineSpan, ProjectionView};
use crate::geometry::VoxelGrid;
use crate::kernel::reciprocal::reciprocal;
use crate::scalar::Real;

/// Updates `line[x0..=x1]` one voxel at a time.
pub fn line_update_scalar<T: Real>(
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
    for x in span.x0..=span.x1 {
        line[x] += voxel_increment(view, grid, &consts, x, cfg);
    }
    span.len()
}

#[inline(always)]
pub(super) fn voxel_increment<T: Real>(
    view: ProjectionView<'_, T>,
    grid: &VoxelGrid,
    consts: &LineConstants<T>,
    x: usize,
    cfg: &KernelConfig,
) -> T {
    let img = view.image;
    let a = view.matrix;

    // Part 1: geometry.
    let wx = grid.coord::<T>(0, x);
    let (uw, vw, w) = consts.rows(a, wx, cfg.arithmetic);
    let r = reciprocal(w, cfg.recip);
    let u = uw * r;
    let v = vw * r;
    let fu = u.floor_fast();
    let fv = v.floor_fast();
    let scalx = u - fu;
    let scaly = v - fv;

    // Part 2: corner loads from the padded buffer. Coordinates far outside the
    // image are clamped into the zero border, which leaves the result at 0.
    let lo = img.lo();
    let (hu, hv) = img.hi();
    let iu = fu.max(lo).min(hu).to_index();
    let iv = fv.max(lo).min(hv).to_index();
    let ([valtl, valtr], [valbl, valbr]) = img.pairs_at(img.offset_of(iu, iv));

    // Part 3: interpolation and update.
    let fx = bilinear(valtl, valtr, valbl, valbr, scalx, scaly);
    weighted(fx, r, cfg.weighting)
}
