use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ProjectionMatrix;

/// Axis-aligned ellipsoid of constant attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Center (mm).
    pub center: [f64; 3],
    /// Semi-axes (mm), all positive.
    pub semi_axes: [f64; 3],
    /// Attenuation per mm; negative values carve out denser parents.
    pub density: f64,
}

impl Ellipsoid {
    pub fn sphere(center: [f64; 3], radius: f64, density: f64) -> Self {
        Ellipsoid {
            center,
            semi_axes: [radius; 3],
            density,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let mut s = 0.0;
        for i in 0..3 {
            let d = (p[i] - self.center[i]) / self.semi_axes[i];
            s += d * d;
        }
        s <= 1.0
    }

    /// Length (mm) of the intersection of the line `origin + t·dir` with the
    /// ellipsoid; `dir` must be a unit vector.
    ///
    /// Solved around the point of closest approach in the scaled frame, which
    /// avoids cancellation when the origin is far from a small ellipsoid.
    pub fn chord(&self, origin: [f64; 3], dir: [f64; 3]) -> f64 {
        let mut o = [0.0; 3];
        let mut e = [0.0; 3];
        for i in 0..3 {
            o[i] = (origin[i] - self.center[i]) / self.semi_axes[i];
            e[i] = dir[i] / self.semi_axes[i];
        }
        let ee = dot(e, e);
        let t_star = -dot(o, e) / ee;
        let m = [o[0] + t_star * e[0], o[1] + t_star * e[1], o[2] + t_star * e[2]];
        let disc = 1.0 - dot(m, m);
        if disc <= 0.0 {
            return 0.0;
        }
        2.0 * (disc / ee).sqrt()
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Sum of ellipsoids; densities add where they overlap.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Phantom {
    pub ellipsoids: Vec<Ellipsoid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Large unit sphere with a denser and a lighter inclusion.
    Spheres3,
    /// Hollow sphere: unit outer sphere minus a unit inner sphere.
    Shell,
    /// Tiny ellipsoid at the isocenter.
    Point,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spheres3" => Ok(PhantomKind::Spheres3),
            "shell" => Ok(PhantomKind::Shell),
            "point" => Ok(PhantomKind::Point),
            other => Err(Error::Config(format!(
                "unknown phantom '{other}' (expected spheres3, shell or point)"
            ))),
        }
    }
}

impl Phantom {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        for e in &ellipsoids {
            if e.semi_axes.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::Config(format!("non-positive semi-axis in {e:?}")));
            }
        }
        Ok(Phantom { ellipsoids })
    }

    /// Summed density at a world point.
    pub fn density_at(&self, p: [f64; 3]) -> f64 {
        self.ellipsoids
            .iter()
            .filter(|e| e.contains(p))
            .map(|e| e.density)
            .sum()
    }

    /// Line integral of the density along the full line through `origin` with
    /// unit direction `dir`.
    pub fn line_integral(&self, origin: [f64; 3], dir: [f64; 3]) -> f64 {
        self.ellipsoids
            .iter()
            .map(|e| e.density * e.chord(origin, dir))
            .sum()
    }
}

/// Fixed phantoms used by the test suites.
pub fn make_phantom(kind: PhantomKind) -> Phantom {
    let ellipsoids = match kind {
        PhantomKind::Spheres3 => vec![
            Ellipsoid::sphere([0.0, 0.0, 0.0], 80.0, 1.0),
            Ellipsoid::sphere([30.0, -10.0, 8.0], 12.0, 0.5),
            Ellipsoid::sphere([-25.0, 25.0, -16.0], 12.0, -0.5),
        ],
        PhantomKind::Shell => vec![
            Ellipsoid::sphere([0.0; 3], 80.0, 1.0),
            Ellipsoid::sphere([0.0; 3], 70.0, -1.0),
        ],
        PhantomKind::Point => vec![Ellipsoid {
            center: [0.0; 3],
            semi_axes: [0.5; 3],
            density: 1.0,
        }],
    };
    Phantom { ellipsoids }
}

/// Renders one projection: pixel `(iu, iv)` holds the line integral along the
/// ray from the source through the detector position `(iu, iv)`.
pub fn forward_project(phantom: &Phantom, matrix: &ProjectionMatrix, isx: usize, isy: usize) -> Result<Vec<f32>> {
    let source = matrix.camera_center()?;
    let inv = matrix.left_block_inverse()?;
    let mut img = vec![0.0f32; isx * isy];
    if phantom.ellipsoids.is_empty() {
        return Ok(img);
    }
    for (iv, row) in img.chunks_exact_mut(isx).enumerate() {
        for (iu, px) in row.iter_mut().enumerate() {
            let q = [iu as f64, iv as f64, 1.0];
            let mut d = [0.0; 3];
            for (r, out) in d.iter_mut().enumerate() {
                *out = inv[r][0] * q[0] + inv[r][1] * q[1] + inv[r][2] * q[2];
            }
            let n = dot(d, d).sqrt();
            let dir = [d[0] / n, d[1] / n, d[2] / n];
            *px = phantom.line_integral(source, dir) as f32;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_circular_trajectory;

    #[test]
    fn point_phantom_shape() {
        let p = make_phantom(PhantomKind::Point);
        assert_eq!(p.ellipsoids.len(), 1);
        assert_eq!(p.ellipsoids[0].semi_axes, [0.5; 3]);
        assert_eq!(p.ellipsoids[0].center, [0.0; 3]);
    }

    #[test]
    fn spheres3_nonnegative_density() {
        let p = make_phantom(PhantomKind::Spheres3);
        assert!(p.density_at([0.0; 3]) >= 0.0);
        for e in &p.ellipsoids {
            assert!(p.density_at(e.center) >= 0.0);
        }
        assert_eq!(p.density_at([-25.0, 25.0, -16.0]), 0.5);
    }

    #[test]
    fn shell_is_hollow() {
        let p = make_phantom(PhantomKind::Shell);
        assert_eq!(p.density_at([0.0; 3]), 0.0);
        assert_eq!(p.density_at([10.0, -20.0, 30.0]), 0.0);
        assert_eq!(p.density_at([75.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn unknown_phantom_name() {
        assert!("rabbit".parse::<PhantomKind>().is_err());
        assert_eq!("shell".parse::<PhantomKind>().unwrap(), PhantomKind::Shell);
    }

    #[test]
    fn bad_semi_axis_rejected() {
        let e = Ellipsoid {
            center: [0.0; 3],
            semi_axes: [1.0, 0.0, 1.0],
            density: 1.0,
        };
        assert!(Phantom::new(vec![e]).is_err());
    }

    #[test]
    fn empty_phantom_gives_zero_image() {
        let m = make_circular_trajectory(3, 750.0, 1200.0, 32, 24, 12.0).unwrap()[1];
        let img = forward_project(&Phantom::default(), &m, 32, 24).unwrap();
        assert!(img.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_pixel_of_centered_sphere() {
        // Odd detector so that the principal point is a pixel center.
        let m = make_circular_trajectory(1, 750.0, 1200.0, 65, 33, 4.0).unwrap()[0];
        let ph = Phantom::new(vec![Ellipsoid::sphere([0.0; 3], 40.0, 0.25)]).unwrap();
        let img = forward_project(&ph, &m, 65, 33).unwrap();
        let center = img[16 * 65 + 32];
        assert!((center as f64 - 2.0 * 40.0 * 0.25).abs() < 1e-5);
    }

    #[test]
    fn chord_of_far_small_sphere() {
        let e = Ellipsoid::sphere([0.0; 3], 0.5, 1.0);
        let c = e.chord([750.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        assert!((c - 1.0).abs() < 1e-12);
        let miss = e.chord([750.0, 0.6, 0.0], [-1.0, 0.0, 0.0]);
        assert_eq!(miss, 0.0);
    }
}
