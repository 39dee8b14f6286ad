//! Per-line clipping: for every projection and voxel row `(z, y)`, the first
//! and last x whose bilinear footprint can touch the detector.
//!
//! Voxels outside the stored range read only zero border pixels, so skipping
//! them leaves the reconstruction bitwise unchanged.

use std::path::Path;

use rayon::prelude::*;

use crate::datagen::io::{dim_u32, TrackedReader, TrackedWriter};
use crate::error::{Error, Result};
use crate::geometry::{homogeneous, ProjectionMatrix, VoxelGrid};

pub const CLIP_MAGIC: &[u8; 4] = b"BPCT";

/// Encoding of a line with no visible voxel.
pub const EMPTY_RANGE: (u16, u16) = (0xFFFF, 0);

/// Detector-space tolerance (pixels) for the visibility test. Kernels run in
/// single precision and may use a 12-bit reciprocal, whose error in `u` is at
/// most `|u|·2⁻¹²`; the margin covers twice that.
pub fn visibility_margin(isx: usize, isy: usize) -> f64 {
    0.01 + isx.max(isy) as f64 * f64::powi(2.0, -11)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipTable {
    l: usize,
    count: usize,
    /// Indexed `p·L² + z·L + y`.
    ranges: Vec<(u16, u16)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipStats {
    pub total_updates: u64,
    pub reduction: f64,
    pub bytes: u64,
}

/// True if the footprint of the point's projection can intersect the image:
/// `floor(u) ∈ [−1, ISX−1]` and `floor(v) ∈ [−1, ISY−1]`, widened by `margin`.
#[inline]
pub fn footprint_visible(m: &ProjectionMatrix, p: [f64; 3], isx: usize, isy: usize, margin: f64) -> bool {
    let (uw, vw, w) = homogeneous(&m.a, p[0], p[1], p[2]);
    let u = uw / w;
    let v = vw / w;
    u >= -1.0 - margin && u < isx as f64 + margin && v >= -1.0 - margin && v < isy as f64 + margin
}

fn check_capacity(l: usize) -> Result<()> {
    if l > 0xFFFF {
        return Err(Error::Capacity(format!(
            "clip table uses 16-bit indices, L = {l} exceeds 65535"
        )));
    }
    Ok(())
}

impl ClipTable {
    /// Table with every line fully visible.
    pub fn full(l: usize, count: usize) -> Result<Self> {
        check_capacity(l)?;
        let last = l.saturating_sub(1) as u16;
        Ok(ClipTable {
            l,
            count,
            ranges: vec![(0, last); count * l * l],
        })
    }

    pub fn size(&self) -> usize {
        self.l
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn raw(&self, p: usize, z: usize, y: usize) -> (u16, u16) {
        self.ranges[(p * self.l + z) * self.l + y]
    }

    /// Inclusive visible x range, or `None` for an empty line.
    #[inline]
    pub fn range(&self, p: usize, z: usize, y: usize) -> Option<(usize, usize)> {
        let (first, last) = self.raw(p, z, y);
        if (first, last) == EMPTY_RANGE || first > last {
            None
        } else {
            Some((first as usize, last as usize))
        }
    }

    /// Updates retained for slice `z` over all projections.
    pub fn slice_updates(&self, z: usize) -> u64 {
        (0..self.count)
            .map(|p| {
                (0..self.l)
                    .filter_map(|y| self.range(p, z, y))
                    .map(|(a, b)| (b - a + 1) as u64)
                    .sum::<u64>()
            })
            .sum()
    }

    pub fn total_updates(&self) -> u64 {
        self.ranges
            .iter()
            .filter(|&&r| r != EMPTY_RANGE && r.0 <= r.1)
            .map(|&(a, b)| (b - a) as u64 + 1)
            .sum()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = TrackedWriter::create(path.as_ref())?;
        w.write_bytes(CLIP_MAGIC)?;
        w.write_u32(dim_u32("L", self.l)?)?;
        w.write_u32(dim_u32("count", self.count)?)?;
        let flat: Vec<u16> = self.ranges.iter().flat_map(|&(a, b)| [a, b]).collect();
        w.write_values(&flat, u16::to_le_bytes)?;
        w.finish()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = TrackedReader::open(path.as_ref())?;
        r.expect_magic(CLIP_MAGIC)?;
        let l = r.read_u32()? as usize;
        let count = r.read_u32()? as usize;
        check_capacity(l)?;
        let n = l
            .checked_mul(l)
            .and_then(|v| v.checked_mul(count))
            .ok_or_else(|| r.format_error(4, "dimension overflow"))?;
        r.require_remaining(n as u64 * 4)?;
        let mut flat = vec![0u16; 2 * n];
        r.read_u16s(&mut flat)?;
        let ranges = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        Ok(ClipTable { l, count, ranges })
    }
}

/// Scans every voxel row of every projection from both ends.
pub fn build_clip_table(grid: &VoxelGrid, matrices: &[ProjectionMatrix], isx: usize, isy: usize) -> Result<ClipTable> {
    let l = grid.size();
    check_capacity(l)?;
    let margin = visibility_margin(isx, isy);
    let per_view: Vec<Vec<(u16, u16)>> = matrices
        .par_iter()
        .map(|m| {
            let mut out = Vec::with_capacity(l * l);
            for z in 0..l {
                for y in 0..l {
                    let vis = |x: usize| footprint_visible(m, grid.voxel_to_world(x, y, z), isx, isy, margin);
                    let range = match (0..l).find(|&x| vis(x)) {
                        None => EMPTY_RANGE,
                        Some(first) => {
                            let last = (first..l).rev().find(|&x| vis(x)).unwrap_or(first);
                            (first as u16, last as u16)
                        }
                    };
                    out.push(range);
                }
            }
            out
        })
        .collect();
    Ok(ClipTable {
        l,
        count: matrices.len(),
        ranges: per_view.concat(),
    })
}

pub fn clip_stats(table: &ClipTable) -> ClipStats {
    let l = table.size() as u64;
    let total = table.total_updates();
    let all = table.count() as u64 * l * l * l;
    ClipStats {
        total_updates: total,
        reduction: if all == 0 { 0.0 } else { 1.0 - total as f64 / all as f64 },
        bytes: clip_table_bytes(table.size(), table.count()),
    }
}

/// Storage of a table with 16-bit indices: `L² · views · 4` bytes.
pub fn clip_table_bytes(l: usize, views: usize) -> u64 {
    (l as u64) * (l as u64) * views as u64 * 4
}
