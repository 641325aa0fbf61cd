//! Denoiser interface and the closed-form denoisers used for verification.
//!
//! A denoiser advances one window from noise level `t` to `t - 1`. The
//! request carries the retention coefficients for both levels, so a denoiser
//! never needs the schedule itself.

mod dirac;
mod smoothing;
mod target;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::{Shape, Tile, TileRegion};
use crate::plugin::PluginError;
use crate::projection::ViewportSpec;
use crate::scalar::Scalar;

pub use dirac::{dirac_oracle_step, ddim_from_x0, DiracOracle};
pub use smoothing::{smoothing_mock_step, SmoothingMock};
pub use target::{
    plane_point, target_erp_latent, target_plane_latent, AnalyticTarget, FnTarget, Target, WorldPoint,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiseError {
    #[error("tile shape {actual} does not match window geometry {expected}")]
    Shape { expected: Shape, actual: Shape },
    #[error("response shape {actual} differs from request shape {expected}")]
    ResponseShape { expected: Shape, actual: Shape },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("cannot step from a clean level (alpha_bar_t = {0})")]
    Level(f64),
    #[error("{0}")]
    Geometry(String),
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

/// Where a window sits in world space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowGeometry {
    /// A rectangular region of a planar panorama of the given extent.
    Plane {
        region: TileRegion,
        frames: usize,
        height: usize,
        width: usize,
    },
    /// A perspective viewport over frames `frame_start..frame_start+frame_len`
    /// (mod `frames`).
    Viewport {
        viewport: ViewportSpec,
        frame_start: isize,
        frame_len: usize,
        frames: usize,
    },
}

impl WindowGeometry {
    /// Tile shape implied by the geometry.
    pub fn tile_shape(&self, channels: usize) -> Shape {
        match self {
            WindowGeometry::Plane { region, .. } => region.tile_shape(channels),
            WindowGeometry::Viewport {
                viewport, frame_len, ..
            } => Shape::new(*frame_len, channels, viewport.height, viewport.width),
        }
    }

    /// Absolute frame index for each tile frame.
    pub fn frame_indices(&self) -> Vec<usize> {
        let (start, len, total) = match *self {
            WindowGeometry::Plane { region, frames, .. } => (region.frame_start, region.frame_len, frames),
            WindowGeometry::Viewport {
                frame_start,
                frame_len,
                frames,
                ..
            } => (frame_start, frame_len, frames),
        };
        (0..len as isize)
            .map(|k| (start + k).rem_euclid(total.max(1) as isize) as usize)
            .collect()
    }

    /// World point seen by each tile pixel, row-major.
    pub fn pixel_points(&self) -> Result<Vec<WorldPoint>, DenoiseError> {
        match *self {
            WindowGeometry::Plane {
                region,
                height,
                width,
                ..
            } => {
                if height == 0 || width == 0 {
                    return Err(DenoiseError::Geometry("empty panorama".into()));
                }
                if region.row_start + region.row_len > height {
                    return Err(DenoiseError::Geometry(format!(
                        "rows {}..{} outside panorama height {height}",
                        region.row_start,
                        region.row_start + region.row_len
                    )));
                }
                let mut out = Vec::with_capacity(region.row_len * region.col_len);
                for r in region.row_start..region.row_start + region.row_len {
                    for k in 0..region.col_len as isize {
                        let col = (region.col_start + k).rem_euclid(width as isize) as usize;
                        out.push(plane_point(col, r, width, height));
                    }
                }
                Ok(out)
            }
            WindowGeometry::Viewport { viewport, .. } => Ok(viewport
                .pixel_lonlats()
                .into_iter()
                .map(|(lon, lat)| WorldPoint::Sphere { lon, lat })
                .collect()),
        }
    }
}

/// One unit of denoising work.
#[derive(Clone, Copy, Debug)]
pub struct DenoiseRequest<'a, S> {
    /// Execution ordinal within the run (0 = first step).
    pub step: usize,
    /// Noise level of `tile`; the response is at level `t - 1`.
    pub t: usize,
    pub alpha_bar_t: f64,
    pub alpha_bar_prev: f64,
    pub geometry: WindowGeometry,
    pub tile: &'a Tile<S>,
    /// Opaque text conditioning, forwarded unchanged.
    pub text: &'a [u8],
    /// This window's cut of the conditioning image, if any.
    pub image: Option<&'a Tile<S>>,
}

impl<S: Scalar> DenoiseRequest<'_, S> {
    pub fn check(&self) -> Result<(), DenoiseError> {
        let expected = self.geometry.tile_shape(self.tile.shape().channels);
        if expected != self.tile.shape() {
            return Err(DenoiseError::Shape {
                expected,
                actual: self.tile.shape(),
            });
        }
        Ok(())
    }
}

/// Something that advances a window one noise level.
pub trait Denoiser<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn denoise(&self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, DenoiseError>;
}

/// Rejects responses of the wrong shape or with NaN/Inf values.
pub fn validate_response<S: Scalar>(req: &DenoiseRequest<'_, S>, out: &Tile<S>) -> Result<(), DenoiseError> {
    if out.shape() != req.tile.shape() {
        return Err(DenoiseError::ResponseShape {
            expected: req.tile.shape(),
            actual: out.shape(),
        });
    }
    if let Some(index) = out.first_non_finite() {
        return Err(DenoiseError::NonFinite { index });
    }
    Ok(())
}

/// Returns the request tile unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoDenoiser;

impl<S: Scalar> Denoiser<S> for EchoDenoiser {
    fn name(&self) -> &str {
        "echo"
    }

    fn denoise(&self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, DenoiseError> {
        Ok(req.tile.clone())
    }
}
