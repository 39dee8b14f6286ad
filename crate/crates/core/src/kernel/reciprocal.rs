use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// How `1/w` is evaluated inside the voxel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecipMode {
    /// Correctly rounded division.
    #[default]
    Exact,
    /// 12-bit estimate, relative error at most 2⁻¹².
    Approx12,
    /// 12-bit estimate refined by one Newton-Raphson step.
    Approx12Nr,
}

impl RecipMode {
    pub const ALL: [RecipMode; 3] = [RecipMode::Exact, RecipMode::Approx12, RecipMode::Approx12Nr];

    pub fn name(self) -> &'static str {
        match self {
            RecipMode::Exact => "exact",
            RecipMode::Approx12 => "approx12",
            RecipMode::Approx12Nr => "approx12_nr",
        }
    }

    /// Guaranteed relative error bound of the mode in single precision.
    pub fn error_bound(self) -> f64 {
        match self {
            RecipMode::Exact => f64::powi(2.0, -24),
            RecipMode::Approx12 => f64::powi(2.0, -12),
            RecipMode::Approx12Nr => f64::powi(2.0, -21),
        }
    }
}

impl std::str::FromStr for RecipMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "div" => Ok(RecipMode::Exact),
            "approx12" | "rcp" => Ok(RecipMode::Approx12),
            "approx12_nr" | "nr" => Ok(RecipMode::Approx12Nr),
            other => Err(format!("unknown reciprocal mode '{other}'")),
        }
    }
}

/// Portable 12-bit reciprocal estimate: the exact reciprocal with its
/// significand rounded to 12 bits.
#[inline(always)]
pub fn approx12<T: Real>(x: T) -> T {
    (T::one() / x).round_mantissa(12)
}

/// `1/x` in the requested mode. `x` must be positive; `x <= 0` yields the IEEE
/// result of the underlying division (`inf`, negative values or NaN).
#[inline(always)]
pub fn reciprocal<T: Real>(x: T, mode: RecipMode) -> T {
    match mode {
        RecipMode::Exact => T::one() / x,
        RecipMode::Approx12 => approx12(x),
        RecipMode::Approx12Nr => {
            let r0 = approx12(x);
            r0 * (T::lit(2.0) - x * r0)
        }
    }
}

/// Checked variant for callers outside the hot loop.
pub fn checked_reciprocal<T: Real>(x: T, mode: RecipMode) -> Result<T, crate::Error> {
    if !(x > T::zero()) {
        return Err(crate::Error::BehindSource {
            w: x.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(reciprocal(x, mode))
}
