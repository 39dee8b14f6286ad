//! Synthetic projection data: phantoms, analytic forward projection and the
//! binary stack/volume containers.

pub mod io;
mod phantom;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CircularTrajectory, ProjectionMatrix};

pub use io::{read_stack, read_volume, read_volume_expect, write_stack, write_volume};
pub use phantom::{forward_project, make_phantom, Ellipsoid, Phantom, PhantomKind};

/// A set of projection images with their matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    pub isx: usize,
    pub isy: usize,
    pub matrices: Vec<ProjectionMatrix>,
    /// `count × isy × isx` pixels, one image after the other.
    pub pixels: Vec<f32>,
}

impl ProjectionStack {
    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    pub fn image(&self, p: usize) -> &[f32] {
        let n = self.isx * self.isy;
        &self.pixels[p * n..(p + 1) * n]
    }

    /// Bytes of pixel payload (32-bit values).
    pub fn payload_bytes(&self) -> u64 {
        self.isx as u64 * self.isy as u64 * self.count() as u64 * 4
    }

    pub fn check(&self) -> Result<()> {
        if self.isx < 2 || self.isy < 2 {
            return Err(Error::Dimension(format!(
                "images must be at least 2x2, got {}x{}",
                self.isx, self.isy
            )));
        }
        let expected = self.isx * self.isy * self.count();
        if self.pixels.len() != expected {
            return Err(Error::Dimension(format!(
                "stack of {} images of {}x{} needs {expected} pixels, has {}",
                self.count(),
                self.isx,
                self.isy,
                self.pixels.len()
            )));
        }
        Ok(())
    }
}

/// Forward projects `phantom` for every view of `traj`, in parallel over views.
pub fn generate_stack(phantom: &Phantom, traj: &CircularTrajectory) -> Result<ProjectionStack> {
    let matrices = traj.matrices()?;
    let images = matrices
        .par_iter()
        .map(|m| forward_project(phantom, m, traj.nu, traj.nv))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionStack {
        isx: traj.nu,
        isy: traj.nv,
        matrices,
        pixels: images.concat(),
    })
}
