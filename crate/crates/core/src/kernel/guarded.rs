use super::{bilinear, weighted, KernelConfig, LineConstants, LineSpan};
use crate::geometry::VoxelGrid;
use crate::kernel::reciprocal::reciprocal;
use crate::scalar::Real;

/// Unpadded projection image, row-major `isy × isx`.
#[derive(Debug, Clone, Copy)]
pub struct RawImage<'a> {
    pub data: &'a [f32],
    pub isx: usize,
    pub isy: usize,
}

/// What the four corner values hold when a guard fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerDefaults {
    /// Zeroed once per line; a failed guard keeps the previous voxel's value.
    Stale,
    /// Zeroed before every voxel.
    Zero,
}

/// Bounds-checked line update over the raw image. Validation oracle only.
pub fn line_update_guarded<T: Real>(
    line: &mut [T],
    image: RawImage<'_>,
    matrix: &[T; 12],
    grid: &VoxelGrid,
    span: LineSpan,
    cfg: &KernelConfig,
    defaults: CornerDefaults,
) -> usize {
    if span.is_empty() {
        return 0;
    }
    let consts = LineConstants::new(matrix, grid, span.y, span.z);
    let (isx, isy) = (image.isx as isize, image.isy as isize);
    let px = |iu: isize, iv: isize| T::from_f32_lossless(image.data[(iv * isx + iu) as usize]);
    let zero = T::zero();
    let (mut valtl, mut valtr, mut valbl, mut valbr) = (zero, zero, zero, zero);

    for x in span.x0..=span.x1 {
        if defaults == CornerDefaults::Zero {
            (valtl, valtr, valbl, valbr) = (zero, zero, zero, zero);
        }
        let wx = grid.coord::<T>(0, x);
        let (uw, vw, w) = consts.rows(matrix, wx, cfg.arithmetic);
        let r = reciprocal(w, cfg.recip);
        let u = uw * r;
        let v = vw * r;
        let fu = u.floor();
        let fv = v.floor();
        // Saturating casts: far-away coordinates fail every guard below.
        let iu = fu.to_index();
        let iv = fv.to_index();
        let scalx = u - fu;
        let scaly = v - fv;

        if iv >= 0 && iv < isy {
            if iu >= 0 && iu < isx {
                valtl = px(iu, iv);
            }
            if iu >= -1 && iu < isx - 1 {
                valtr = px(iu + 1, iv);
            }
        }
        if iv >= -1 && iv < isy - 1 {
            if iu >= 0 && iu < isx {
                valbl = px(iu, iv + 1);
            }
            if iu >= -1 && iu < isx - 1 {
                valbr = px(iu + 1, iv + 1);
            }
        }

        let fx = bilinear(valtl, valtr, valbl, valbr, scalx, scaly);
        line[x] += weighted(fx, r, cfg.weighting);
    }
    span.len()
}
