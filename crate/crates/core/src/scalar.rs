//! Scalar abstraction shared by the kernels.
//!
//! The backprojection algorithm is defined in single precision, but every
//! kernel is written against [`Real`] so the same code path can be run in
//! double precision as an accuracy reference.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point element type of images and voxel volumes: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Number of significant bits (including the implicit leading one).
    const MANTISSA_BITS: u32;

    /// Rounds the significand to `bits` significant bits, ties away from zero.
    ///
    /// Values that are not finite, or requests for at least
    /// [`Self::MANTISSA_BITS`] bits, are returned unchanged.
    fn round_mantissa(self, bits: u32) -> Self;

    /// `floor` without a libm call: truncate, correct negatives. Exact for
    /// every input; values of magnitude `≥ 2^(MANTISSA_BITS−1)` are already
    /// integral and returned as is, NaN stays NaN.
    fn floor_fast(self) -> Self;

    /// Saturating conversion to a signed index (`as` cast semantics).
    fn to_index(self) -> isize;

    fn from_f32_lossless(v: f32) -> Self;

    fn from_index(i: usize) -> Self;

    fn lit(v: f64) -> Self;
}

impl Real for f32 {
    const MANTISSA_BITS: u32 = 24;

    #[inline]
    fn round_mantissa(self, bits: u32) -> Self {
        if bits >= Self::MANTISSA_BITS || !self.is_finite() {
            return self;
        }
        let drop = Self::MANTISSA_BITS - bits;
        let half = 1u32 << (drop - 1);
        let mask = !((1u32 << drop) - 1);
        // Carry out of the significand lands in the exponent, which is the
        // correct rounding result.
        f32::from_bits((self.to_bits().wrapping_add(half)) & mask)
    }

    #[inline(always)]
    fn floor_fast(self) -> Self {
        let t = (self as i32) as f32;
        let f = if t > self { t - 1.0 } else { t };
        if self.abs() < 8_388_608.0 {
            f
        } else {
            self
        }
    }

    #[inline(always)]
    fn to_index(self) -> isize {
        self as isize
    }

    #[inline(always)]
    fn from_f32_lossless(v: f32) -> Self {
        v
    }

    #[inline(always)]
    fn from_index(i: usize) -> Self {
        i as f32
    }

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    const MANTISSA_BITS: u32 = 53;

    #[inline]
    fn round_mantissa(self, bits: u32) -> Self {
        if bits >= Self::MANTISSA_BITS || !self.is_finite() {
            return self;
        }
        let drop = Self::MANTISSA_BITS - bits;
        let half = 1u64 << (drop - 1);
        let mask = !((1u64 << drop) - 1);
        f64::from_bits((self.to_bits().wrapping_add(half)) & mask)
    }

    #[inline(always)]
    fn floor_fast(self) -> Self {
        let t = (self as i64) as f64;
        let f = if t > self { t - 1.0 } else { t };
        if self.abs() < 4_503_599_627_370_496.0 {
            f
        } else {
            self
        }
    }

    #[inline(always)]
    fn to_index(self) -> isize {
        self as isize
    }

    #[inline(always)]
    fn from_f32_lossless(v: f32) -> Self {
        v as f64
    }

    #[inline(always)]
    fn from_index(i: usize) -> Self {
        i as f64
    }

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }
}
