use std::sync::Arc;

use super::{DenoiseError, DenoiseRequest, Denoiser, Target};
use crate::latent::Tile;
use crate::scalar::Scalar;

/// Clean signal over a request's window, as `f64`, in tile element order.
pub(super) fn window_x0<S: Scalar>(req: &DenoiseRequest<'_, S>, target: &dyn Target) -> Result<Vec<f64>, DenoiseError> {
    req.check()?;
    let shape = req.tile.shape();
    let frames = req.geometry.frame_indices();
    let points = req.geometry.pixel_points()?;
    let mut x0 = Vec::with_capacity(shape.len());
    for &f in &frames {
        for c in 0..shape.channels {
            x0.extend(points.iter().map(|&p| target.eval(f, c, p)));
        }
    }
    Ok(x0)
}

/// Deterministic DDIM step toward the clean estimate `x0`:
/// `sqrt(ab_prev)·x0 + sqrt((1-ab_prev)/(1-ab_t))·(tile - sqrt(ab_t)·x0)`.
pub fn ddim_from_x0<S: Scalar>(
    tile: &Tile<S>,
    x0: &[f64],
    alpha_bar_t: f64,
    alpha_bar_prev: f64,
) -> Result<Tile<S>, DenoiseError> {
    if alpha_bar_t >= 1.0 {
        return Err(DenoiseError::Level(alpha_bar_t));
    }
    let c1 = alpha_bar_prev.sqrt();
    let c2 = ((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t)).sqrt();
    let s = alpha_bar_t.sqrt();
    let data = tile
        .data()
        .iter()
        .zip(x0)
        .map(|(&v, &x)| S::of(c1 * x + c2 * (v.as_f64() - s * x)))
        .collect();
    Ok(Tile::new(tile.shape(), data).expect("same shape"))
}

/// One oracle step for a window whose clean content is `target`.
pub fn dirac_oracle_step<S: Scalar>(req: &DenoiseRequest<'_, S>, target: &dyn Target) -> Result<Tile<S>, DenoiseError> {
    let x0 = window_x0(req, target)?;
    ddim_from_x0(req.tile, &x0, req.alpha_bar_t, req.alpha_bar_prev)
}

/// Denoiser that knows the clean signal exactly.
#[derive(Clone)]
pub struct DiracOracle {
    target: Arc<dyn Target>,
}

impl DiracOracle {
    pub fn new(target: Arc<dyn Target>) -> Self {
        Self { target }
    }
}

impl<S: Scalar> Denoiser<S> for DiracOracle {
    fn name(&self) -> &str {
        "dirac"
    }

    fn denoise(&self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, DenoiseError> {
        dirac_oracle_step(req, self.target.as_ref())
    }
}
