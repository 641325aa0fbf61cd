use std::f64::consts::PI;

use crate::latent::{PanoLatent, Shape};
use crate::projection::{lonlat_to_dir, ErpGrid, ProjectionError};
use crate::scalar::Scalar;

/// A location in world space.
///
/// Planar points use normalized pixel-center coordinates in `[0, 1)`, so a
/// target gives consistent values across resolutions of the same panorama.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WorldPoint {
    Plane { x: f64, y: f64 },
    Sphere { lon: f64, lat: f64 },
}

/// Normalized center of pixel `(col, row)` in a `width × height` panorama.
#[inline]
pub fn plane_point(col: usize, row: usize, width: usize, height: usize) -> WorldPoint {
    WorldPoint::Plane {
        x: (col as f64 + 0.5) / width as f64,
        y: (row as f64 + 0.5) / height as f64,
    }
}

/// A deterministic clean signal defined over world coordinates.
pub trait Target: Send + Sync {
    fn eval(&self, frame: usize, channel: usize, p: WorldPoint) -> f64;
}

/// Wraps a closure as a [`Target`].
pub struct FnTarget<F>(pub F);

impl<F> Target for FnTarget<F>
where
    F: Fn(usize, usize, WorldPoint) -> f64 + Send + Sync,
{
    fn eval(&self, frame: usize, channel: usize, p: WorldPoint) -> f64 {
        (self.0)(frame, channel, p)
    }
}

/// Smooth test scene, periodic in `x` and in time over `frames`.
///
/// On the plane it is a sum of low-order waves; on the sphere it is a smooth
/// function of the direction vector, so it has no pole singularity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticTarget {
    pub frames: usize,
    pub amplitude: f64,
}

impl AnalyticTarget {
    pub fn new(frames: usize) -> Self {
        Self {
            frames: frames.max(1),
            amplitude: 1.0,
        }
    }

    fn phase(&self, frame: usize, channel: usize) -> f64 {
        2.0 * PI * frame as f64 / self.frames as f64 + 0.7 * channel as f64
    }
}

impl Target for AnalyticTarget {
    fn eval(&self, frame: usize, channel: usize, p: WorldPoint) -> f64 {
        let ph = self.phase(frame, channel);
        let v = match p {
            WorldPoint::Plane { x, y } => {
                let tau = 2.0 * PI;
                0.6 * (tau * (2.0 * x) + ph).sin() * (PI * y).cos()
                    + 0.3 * (tau * (3.0 * x + 0.5 * y) - ph).cos()
                    + 0.2 * (tau * x + 2.0 * PI * y).sin()
            }
            WorldPoint::Sphere { lon, lat } => {
                let [dx, dy, dz] = lonlat_to_dir(lon, lat);
                0.6 * (2.0 * dx + ph).sin() + 0.4 * (3.0 * dy - ph).cos() * dz + 0.3 * dz * dz
            }
        };
        self.amplitude * v
    }
}

/// The target sampled on a planar panorama grid.
pub fn target_plane_latent<S: Scalar>(target: &dyn Target, shape: Shape, h_ring: bool, t_ring: bool) -> PanoLatent<S> {
    PanoLatent::from_fn(shape, h_ring, t_ring, |f, c, r, x| {
        S::of(target.eval(f, c, plane_point(x, r, shape.width, shape.height)))
    })
}

/// The target sampled at ERP texel centers.
pub fn target_erp_latent<S: Scalar>(
    target: &dyn Target,
    shape: Shape,
    t_ring: bool,
) -> Result<PanoLatent<S>, ProjectionError> {
    let grid = ErpGrid::new(shape.width, shape.height)?;
    Ok(PanoLatent::from_fn(shape, true, t_ring, |f, c, r, x| {
        let (lon, lat) = grid.texel_lonlat(x, r);
        S::of(target.eval(f, c, WorldPoint::Sphere { lon, lat }))
    }))
}
