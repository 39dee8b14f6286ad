//! The line update kernel: all voxels of one x-row updated from one
//! projection image.
//!
//! Three implementations share the same arithmetic:
//! - [`line_update_scalar`]: one voxel at a time, padded image, no conditionals.
//! - [`line_update_lanes`]: `W` consecutive voxels per step (`W ∈ {4, 8}`),
//!   lane-parallel geometry and interpolation with a serial gather in between.
//! - [`line_update_guarded`]: the literal bounds-checked loop over the raw
//!   image, kept only as a validation oracle.
//!
//! In [`ArithmeticMode::Strict`] every lane performs exactly the scalar
//! operation sequence, so all three agree bit for bit on any voxel whose
//! footprint lies inside the image.

mod guarded;
mod lanes;
mod padded;
pub mod reciprocal;
mod scalar;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::scalar::Real;

pub use guarded::{line_update_guarded, CornerDefaults, RawImage};
pub use lanes::line_update_lanes;
pub use padded::{pad_image, PaddedImage};
pub use reciprocal::{reciprocal, RecipMode};
pub use scalar::line_update_scalar;

/// Voxels processed per kernel step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum LaneWidth {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl LaneWidth {
    pub fn get(self) -> usize {
        match self {
            LaneWidth::One => 1,
            LaneWidth::Four => 4,
            LaneWidth::Eight => 8,
        }
    }

    pub fn from_usize(w: usize) -> Result<Self> {
        match w {
            1 => Ok(LaneWidth::One),
            4 => Ok(LaneWidth::Four),
            8 => Ok(LaneWidth::Eight),
            _ => Err(Error::Config(format!("lane width must be 1, 4 or 8, got {w}"))),
        }
    }
}

/// How per-lane pixel indices are moved out of the lane registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ExtractStrategy {
    /// Convert all lanes, spill them to a small buffer, reload one by one.
    #[default]
    V1Store,
    /// Move each lane out individually.
    V2Shift,
}

impl std::str::FromStr for ExtractStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" | "v1_store" | "store" => Ok(ExtractStrategy::V1Store),
            "v2" | "v2_shift" | "shift" => Ok(ExtractStrategy::V2Shift),
            other => Err(format!("unknown extraction strategy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticMode {
    /// Fixed association order; scalar and lane paths are bitwise identical.
    #[default]
    Strict,
    /// Line-invariant terms hoisted out of the voxel loop.
    Fast,
}

/// The increment added per voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `fx · r²` with `r = 1/w` (distance weighting).
    #[default]
    InverseSquare,
    /// Plain interpolated value `fx`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct KernelConfig {
    pub lanes: LaneWidth,
    pub recip: RecipMode,
    pub extract: ExtractStrategy,
    pub arithmetic: ArithmeticMode,
    pub weighting: Weighting,
}

impl KernelConfig {
    /// Scalar, strict, exact division: the reference configuration.
    pub fn oracle() -> Self {
        KernelConfig {
            lanes: LaneWidth::One,
            ..Self::default()
        }
    }

    pub fn strict(lanes: LaneWidth) -> Self {
        KernelConfig {
            lanes,
            ..Self::default()
        }
    }

    pub fn fast(lanes: LaneWidth, recip: RecipMode) -> Self {
        KernelConfig {
            lanes,
            recip,
            arithmetic: ArithmeticMode::Fast,
            ..Self::default()
        }
    }
}

impl fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "W={} recip={} extract={:?} {:?} weight={:?}",
            self.lanes.get(),
            self.recip.name(),
            self.extract,
            self.arithmetic,
            self.weighting
        )
    }
}

/// The reconstructed volume: `L³` accumulators, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    grid: VoxelGrid,
    vox: Vec<T>,
}

impl<T: Real> Volume<T> {
    pub fn zeros(grid: VoxelGrid) -> Self {
        Volume {
            grid,
            vox: vec![T::zero(); grid.num_voxels()],
        }
    }

    pub fn from_vec(grid: VoxelGrid, vox: Vec<T>) -> Result<Self> {
        if vox.len() != grid.num_voxels() {
            return Err(Error::Dimension(format!(
                "volume of L={} needs {} voxels, got {}",
                grid.size(),
                grid.num_voxels(),
                vox.len()
            )));
        }
        Ok(Volume { grid, vox })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn as_slice(&self) -> &[T] {
        &self.vox
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.vox
    }

    pub fn into_vec(self) -> Vec<T> {
        self.vox
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let l = self.grid.size();
        x + l * (y + l * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.vox[self.index(x, y, z)]
    }

    pub fn line(&self, y: usize, z: usize) -> &[T] {
        let start = self.index(0, y, z);
        &self.vox[start..start + self.grid.size()]
    }

    pub fn line_mut(&mut self, y: usize, z: usize) -> &mut [T] {
        let start = self.index(0, y, z);
        let l = self.grid.size();
        &mut self.vox[start..start + l]
    }

    /// Position `(x, y, z)` of the largest voxel value.
    pub fn argmax(&self) -> (usize, usize, usize) {
        let (i, _) = self
            .vox
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        let l = self.grid.size();
        (i % l, (i / l) % l, i / (l * l))
    }

    pub fn max_value(&self) -> T {
        self.vox.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// True if both volumes have the same grid and bitwise-equal voxels.
    pub fn bitwise_eq(&self, other: &Volume<T>) -> bool {
        self.grid == other.grid
            && self
                .vox
                .iter()
                .zip(&other.vox)
                .all(|(a, b)| a.to_f64().map(f64::to_bits) == b.to_f64().map(f64::to_bits))
    }
}

/// One projection as seen by the kernel: padded pixels plus narrowed matrix.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionView<'a, T> {
    pub image: &'a PaddedImage<T>,
    pub matrix: &'a [T; 12],
}

/// A voxel row `(y, z)` restricted to the inclusive x range `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineSpan {
    pub y: usize,
    pub z: usize,
    pub x0: usize,
    pub x1: usize,
}

impl LineSpan {
    pub fn full(grid: &VoxelGrid, y: usize, z: usize) -> Self {
        LineSpan {
            y,
            z,
            x0: 0,
            x1: grid.size() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.x1 + 1 - self.x0
    }

    pub fn is_empty(&self) -> bool {
        self.x1 < self.x0
    }
}

/// Bilinear interpolation in the fixed association order
/// `vall = sy·bl + (1−sy)·tl`, `valr = sy·br + (1−sy)·tr`,
/// `fx = sx·valr + (1−sx)·vall`.
#[inline(always)]
pub fn bilinear<T: Real>(valtl: T, valtr: T, valbl: T, valbr: T, scalx: T, scaly: T) -> T {
    let one = T::one();
    let vall = scaly * valbl + (one - scaly) * valtl;
    let valr = scaly * valbr + (one - scaly) * valtr;
    scalx * valr + (one - scalx) * vall
}

#[inline(always)]
pub(crate) fn weighted<T: Real>(fx: T, r: T, weighting: Weighting) -> T {
    match weighting {
        Weighting::InverseSquare => fx * (r * r),
        Weighting::None => fx,
    }
}

/// Per-line constants: world y/z and, for fast arithmetic, the hoisted
/// `a·wy + a·wz + a` partial sums of the three rows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LineConstants<T> {
    pub wy: T,
    pub wz: T,
    pub hoisted: [T; 3],
}

impl<T: Real> LineConstants<T> {
    #[inline(always)]
    pub fn new(a: &[T; 12], grid: &VoxelGrid, y: usize, z: usize) -> Self {
        let wy = grid.coord::<T>(1, y);
        let wz = grid.coord::<T>(2, z);
        let hoisted = [
            a[3] * wy + a[6] * wz + a[9],
            a[4] * wy + a[7] * wz + a[10],
            a[5] * wy + a[8] * wz + a[11],
        ];
        LineConstants { wy, wz, hoisted }
    }

    #[inline(always)]
    pub fn rows(&self, a: &[T; 12], wx: T, mode: ArithmeticMode) -> (T, T, T) {
        match mode {
            ArithmeticMode::Strict => crate::geometry::homogeneous(a, wx, self.wy, self.wz),
            ArithmeticMode::Fast => (
                a[0] * wx + self.hoisted[0],
                a[1] * wx + self.hoisted[1],
                a[2] * wx + self.hoisted[2],
            ),
        }
    }
}

/// Runs the kernel selected by `cfg.lanes` on `line` (the full x-row of
/// length `L`). Returns the number of voxels updated.
#[inline]
pub fn line_update<T: Real>(
    line: &mut [T],
    view: ProjectionView<'_, T>,
    grid: &VoxelGrid,
    span: LineSpan,
    cfg: &KernelConfig,
) -> usize {
    match cfg.lanes {
        LaneWidth::One => line_update_scalar(line, view, grid, span, cfg),
        LaneWidth::Four | LaneWidth::Eight => line_update_lanes(line, view, grid, span, cfg),
    }
}
