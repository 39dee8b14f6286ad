//! Cone-beam CT backprojection.
//!
//! The voxel volume is updated line by line from a stack of projection
//! images, each with its 3×4 projection matrix. The crate provides the line
//! kernels (scalar and lane-parallel), synthetic data, the clipping table, a
//! multi-threaded blocked scheduler and an analytic performance model.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! name the common instantiations.

pub mod datagen;
mod error;
pub mod geometry;
pub mod kernel;
pub mod perfmodel;
pub mod precompute;
pub mod report;
mod scalar;
pub mod scheduler;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Volume32 = kernel::Volume<f32>;
pub type Volume64 = kernel::Volume<f64>;
pub type PaddedImage32 = kernel::PaddedImage<f32>;
pub type PaddedImage64 = kernel::PaddedImage<f64>;
pub type PixelCoord32 = geometry::PixelCoord<f32>;
pub type PixelCoord64 = geometry::PixelCoord<f64>;
