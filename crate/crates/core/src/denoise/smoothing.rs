use std::sync::Arc;

use super::dirac::window_x0;
use super::{ddim_from_x0, DenoiseError, DenoiseRequest, Denoiser, Target};
use crate::latent::{Shape, Tile};
use crate::scalar::Scalar;

/// Oracle with a deliberately local, window-dependent error.
///
/// The clean estimate is `x0 + g·N(tile - sqrt(ab_t)·x0)`, where `N` is the
/// mean over the in-tile neighbourhood of radius `radius` (rows and columns)
/// and `frame_radius` (frames), excluding the center and truncated at tile
/// edges, and `g = sqrt(ab_t) / (ab_t + (1 - ab_t)·rho)`. Because the
/// neighbourhood is cut at the window edge, elements next to a window
/// boundary see a different estimate from their neighbours across it. If
/// boundaries stay put, those differences accumulate into a seam.
///
/// With `radius == frame_radius == 0` the neighbourhood is empty and the step
/// is exactly the dirac oracle.
#[derive(Clone)]
pub struct SmoothingMock {
    target: Arc<dyn Target>,
    pub radius: usize,
    pub frame_radius: usize,
    pub rho: f64,
}

impl SmoothingMock {
    pub fn new(target: Arc<dyn Target>, radius: usize) -> Self {
        Self {
            target,
            radius,
            frame_radius: radius,
            rho: 0.01,
        }
    }
}

impl<S: Scalar> Denoiser<S> for SmoothingMock {
    fn name(&self) -> &str {
        "smoothing"
    }

    fn denoise(&self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, DenoiseError> {
        smoothing_mock_step(req, self.target.as_ref(), self.radius, self.frame_radius, self.rho)
    }
}

pub fn smoothing_mock_step<S: Scalar>(
    req: &DenoiseRequest<'_, S>,
    target: &dyn Target,
    radius: usize,
    frame_radius: usize,
    rho: f64,
) -> Result<Tile<S>, DenoiseError> {
    let mut x0 = window_x0(req, target)?;
    if radius > 0 || frame_radius > 0 {
        let ab = req.alpha_bar_t;
        let s = ab.sqrt();
        let residual: Vec<f64> = req
            .tile
            .data()
            .iter()
            .zip(&x0)
            .map(|(&v, &x)| v.as_f64() - s * x)
            .collect();
        let neighbour = neighbour_mean(&residual, req.tile.shape(), radius, frame_radius);
        let g = s / (ab + (1.0 - ab) * rho);
        for (x, n) in x0.iter_mut().zip(neighbour) {
            *x += g * n;
        }
    }
    ddim_from_x0(req.tile, &x0, req.alpha_bar_t, req.alpha_bar_prev)
}

/// Box mean excluding the center, per channel, truncated at the tile edges.
#[allow(clippy::needless_range_loop)]
fn neighbour_mean(v: &[f64], shape: Shape, radius: usize, frame_radius: usize) -> Vec<f64> {
    let (nf, nc, nh, nw) = (shape.frames, shape.channels, shape.height, shape.width);
    let mut sum = v.to_vec();
    // separable truncated box sums along columns, rows, then frames
    let mut line = Vec::new();
    for f in 0..nf {
        for c in 0..nc {
            for r in 0..nh {
                let base = shape.index(f, c, r, 0);
                box_line(&mut sum, base, 1, nw, radius, &mut line);
            }
            for x in 0..nw {
                let base = shape.index(f, c, 0, x);
                box_line(&mut sum, base, nw, nh, radius, &mut line);
            }
        }
    }
    let frame_stride = nc * nh * nw;
    for c in 0..nc {
        for i in 0..nh * nw {
            box_line(&mut sum, c * nh * nw + i, frame_stride, nf, frame_radius, &mut line);
        }
    }
    let counts = |n: usize, r: usize| -> Vec<f64> {
        (0..n)
            .map(|i| (i.min(r) + (n - 1 - i).min(r) + 1) as f64)
            .collect()
    };
    let (cf, ch, cw) = (counts(nf, frame_radius), counts(nh, radius), counts(nw, radius));
    let mut out = vec![0.0; v.len()];
    for f in 0..nf {
        for c in 0..nc {
            for r in 0..nh {
                for x in 0..nw {
                    let i = shape.index(f, c, r, x);
                    let n = cf[f] * ch[r] * cw[x] - 1.0;
                    if n > 0.0 {
                        out[i] = (sum[i] - v[i]) / n;
                    }
                }
            }
        }
    }
    out
}

/// In-place truncated window sum over `n` elements at `base + k·stride`.
fn box_line(buf: &mut [f64], base: usize, stride: usize, n: usize, r: usize, prefix: &mut Vec<f64>) {
    if r == 0 || n <= 1 {
        return;
    }
    prefix.clear();
    prefix.push(0.0);
    let mut acc = 0.0;
    for k in 0..n {
        acc += buf[base + k * stride];
        prefix.push(acc);
    }
    for k in 0..n {
        let lo = k.saturating_sub(r);
        let hi = (k + r + 1).min(n);
        buf[base + k * stride] = prefix[hi] - prefix[lo];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{dirac_oracle_step, AnalyticTarget, WindowGeometry};
    use crate::latent::TileRegion;
    use crate::rng::SeededRng;

    fn brute(v: &[f64], s: Shape, r: usize, fr: usize) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for f in 0..s.frames {
            for c in 0..s.channels {
                for y in 0..s.height {
                    for x in 0..s.width {
                        let (mut sum, mut n) = (0.0, 0.0);
                        for ff in f.saturating_sub(fr)..(f + fr + 1).min(s.frames) {
                            for yy in y.saturating_sub(r)..(y + r + 1).min(s.height) {
                                for xx in x.saturating_sub(r)..(x + r + 1).min(s.width) {
                                    if (ff, yy, xx) != (f, y, x) {
                                        sum += v[s.index(ff, c, yy, xx)];
                                        n += 1.0;
                                    }
                                }
                            }
                        }
                        out[s.index(f, c, y, x)] = if n > 0.0 { sum / n } else { 0.0 };
                    }
                }
            }
        }
        out
    }

    #[test]
    fn neighbour_mean_matches_brute_force() {
        let s = Shape::new(3, 2, 5, 7);
        let mut v = vec![0.0; s.len()];
        SeededRng::new(2).fill_normal(&mut v);
        for (r, fr) in [(0, 1), (1, 0), (2, 1), (3, 3)] {
            let a = neighbour_mean(&v, s, r, fr);
            let b = brute(&v, s, r, fr);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_radius_is_dirac() {
        let target = AnalyticTarget::new(1);
        let region = TileRegion::new((0, 1), (0, 8), (0, 8));
        let mut d = vec![0.0f32; region.tile_shape(2).len()];
        SeededRng::new(3).fill_normal(&mut d);
        let tile = Tile::new(region.tile_shape(2), d).unwrap();
        let req = DenoiseRequest {
            step: 0,
            t: 5,
            alpha_bar_t: 0.3,
            alpha_bar_prev: 0.4,
            geometry: WindowGeometry::Plane {
                region,
                frames: 1,
                height: 8,
                width: 8,
            },
            tile: &tile,
            text: &[],
            image: None,
        };
        assert_eq!(
            smoothing_mock_step(&req, &target, 0, 0, 0.01).unwrap(),
            dirac_oracle_step(&req, &target).unwrap()
        );
    }
}
