//! Sphere ↔ equirectangular mapping and perspective viewports.
//!
//! Conventions:
//! - a direction `(x, y, z)` on the unit sphere has longitude `atan2(y, x)`
//!   and latitude `asin(z)`; at the poles the longitude is defined as 0;
//! - ERP texel `(col, row)` has its center at longitude
//!   `-π + (col + ½)·2π/W` and latitude `π/2 - (row + ½)·π/H` (north up);
//! - a viewport looks along its center direction with image right pointing
//!   toward increasing longitude and image up toward increasing latitude
//!   (yaw then pitch, zero roll). Its vertical field of view follows from the
//!   horizontal one with square pixels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::{BlendAccumulator, LatentError, PanoLatent, Shape, Tile};
use crate::planner::AxisWindow;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::schedule::{NoiseSchedule, ScheduleError};

/// Allowed deviation of a direction's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("direction norm {0} is not 1 within {UNIT_TOLERANCE}")]
    NotUnit(f64),
    #[error("ERP width must equal twice height (got {width}x{height})")]
    Aspect { width: usize, height: usize },
    #[error("ERP latent must wrap horizontally")]
    NotRing,
    #[error("field of view {0} rad outside (0, π)")]
    Fov(f64),
    #[error("viewport size must be positive")]
    Size,
    #[error("tile shape {actual} does not match viewport {expected}")]
    TileShape { expected: Shape, actual: Shape },
    #[error("mask shape {mask:?} does not match latent {latent:?}")]
    MaskShape {
        mask: (usize, usize, usize),
        latent: (usize, usize, usize),
    },
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// `(longitude, latitude)` of a unit direction.
pub fn dir_to_lonlat<T: Scalar>(x: T, y: T, z: T) -> Result<(T, T), ProjectionError> {
    let norm = (x * x + y * y + z * z).sqrt().as_f64();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(ProjectionError::NotUnit(norm));
    }
    let lat = z.max(-T::one()).min(T::one()).asin();
    if x == T::zero() && y == T::zero() {
        return Ok((T::zero(), lat));
    }
    let mut lon = y.atan2(x);
    if lon >= T::PI() {
        lon = lon - T::PI() - T::PI();
    }
    Ok((lon, lat))
}

/// Unit direction for `(longitude, latitude)`.
pub fn lonlat_to_dir<T: Scalar>(lon: T, lat: T) -> [T; 3] {
    let (sl, cl) = lon.sin_cos();
    let (sb, cb) = lat.sin_cos();
    [cb * cl, cb * sl, sb]
}

/// Equirectangular grid with a 2:1 aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErpGrid {
    pub width: usize,
    pub height: usize,
}

impl ErpGrid {
    pub fn new(width: usize, height: usize) -> Result<Self, ProjectionError> {
        if height == 0 || width != 2 * height {
            return Err(ProjectionError::Aspect { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn for_latent<S: Scalar>(latent: &PanoLatent<S>) -> Result<Self, ProjectionError> {
        if !latent.h_ring() {
            return Err(ProjectionError::NotRing);
        }
        Self::new(latent.shape().width, latent.shape().height)
    }

    pub fn texels(&self) -> usize {
        self.width * self.height
    }

    pub fn texel_lonlat(&self, col: usize, row: usize) -> (f64, f64) {
        (
            -PI + (col as f64 + 0.5) * 2.0 * PI / self.width as f64,
            PI / 2.0 - (row as f64 + 0.5) * PI / self.height as f64,
        )
    }

    /// Continuous texel coordinates (texel centers at integers).
    pub fn lonlat_to_xy(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon + PI) / (2.0 * PI) * self.width as f64 - 0.5,
            (PI / 2.0 - lat) / PI * self.height as f64 - 0.5,
        )
    }

    /// Bilinear taps with longitude wrap and latitude clamp.
    pub fn taps(&self, lon: f64, lat: f64) -> Taps {
        let (x, y) = self.lonlat_to_xy(lon, lat);
        let x0 = x.floor();
        let fx = x - x0;
        let w = self.width as isize;
        let c0 = (x0 as isize).rem_euclid(w) as usize;
        let c1 = (x0 as isize + 1).rem_euclid(w) as usize;
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let r0 = y.floor() as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let fy = y - r0 as f64;
        Taps {
            texel: [
                r0 * self.width + c0,
                r0 * self.width + c1,
                r1 * self.width + c0,
                r1 * self.width + c1,
            ],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }
}

/// Four texel indices (`row·W + col`) and their bilinear weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Taps {
    pub texel: [usize; 4],
    pub weight: [f64; 4],
}

/// Samples channel `channel` of `frame` at `(lon, lat)`.
pub fn sample_erp<S: Scalar>(
    erp: &PanoLatent<S>,
    grid: &ErpGrid,
    frame: usize,
    channel: usize,
    lon: f64,
    lat: f64,
) -> S {
    let taps = grid.taps(lon, lat);
    let base = erp.shape().index(frame, channel, 0, 0);
    let data = erp.data();
    let mut acc = 0.0;
    for k in 0..4 {
        acc += taps.weight[k] * data[base + taps.texel[k]].as_f64();
    }
    S::of(acc)
}

/// Perspective camera on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewportSpec {
    /// Center longitude in `[-π, π)`.
    pub lon: f64,
    /// Center latitude in `[-π/2, π/2]`.
    pub lat: f64,
    /// Horizontal field of view, radians.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

impl ViewportSpec {
    pub fn new(lon: f64, lat: f64, fov: f64, width: usize, height: usize) -> Result<Self, ProjectionError> {
        if !(fov > 0.0 && fov < PI) {
            return Err(ProjectionError::Fov(fov));
        }
        if width == 0 || height == 0 {
            return Err(ProjectionError::Size);
        }
        Ok(Self {
            lon,
            lat,
            fov,
            width,
            height,
        })
    }

    pub fn fov_vertical(&self) -> f64 {
        2.0 * ((self.fov / 2.0).tan() * self.height as f64 / self.width as f64).atan()
    }

    /// Image-plane half extents at unit depth.
    pub fn half_extent(&self) -> (f64, f64) {
        let h = (self.fov / 2.0).tan();
        (h, h * self.height as f64 / self.width as f64)
    }

    /// Forward, right and up unit vectors.
    pub fn basis(&self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.lon.sin_cos();
        let (sb, cb) = self.lat.sin_cos();
        [
            [cb * ca, cb * sa, sb],
            [-sa, ca, 0.0],
            [-sb * ca, -sb * sa, cb],
        ]
    }

    /// Normalized world ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> [f64; 3] {
        let [fwd, right, up] = self.basis();
        let (hx, hy) = self.half_extent();
        let cx = ((2 * u + 1) as f64 / self.width as f64 - 1.0) * hx;
        let cy = ((2 * v + 1) as f64 / self.height as f64 - 1.0) * hy;
        let d = [
            fwd[0] + right[0] * cx - up[0] * cy,
            fwd[1] + right[1] * cx - up[1] * cy,
            fwd[2] + right[2] * cx - up[2] * cy,
        ];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    }

    /// `(longitude, latitude)` seen by each pixel, row-major.
    pub fn pixel_lonlats(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                let d = self.pixel_ray(u, v);
                out.push(dir_to_lonlat(d[0], d[1], d[2]).expect("normalized ray"));
            }
        }
        out
    }

    /// Continuous pixel coordinates of a world direction, if it falls within
    /// the hull of pixel centers that projection samples.
    pub fn image_coords(&self, d: [f64; 3], basis: &[[f64; 3]; 3]) -> Option<(f64, f64)> {
        self.image_coords_with(d, basis, self.half_extent())
    }

    #[inline]
    fn image_coords_with(&self, d: [f64; 3], basis: &[[f64; 3]; 3], (hx, hy): (f64, f64)) -> Option<(f64, f64)> {
        let [fwd, right, up] = basis;
        let z = dot(d, *fwd);
        if z <= 0.0 {
            return None;
        }
        let cx = dot(d, *right) / z;
        let cy = -dot(d, *up) / z;
        let px = (cx / hx + 1.0) * self.width as f64 / 2.0 - 0.5;
        let py = (cy / hy + 1.0) * self.height as f64 / 2.0 - 0.5;
        let eps = 1e-9;
        if px < -eps || py < -eps || px > (self.width - 1) as f64 + eps || py > (self.height - 1) as f64 + eps {
            return None;
        }
        Some((
            px.clamp(0.0, (self.width - 1) as f64),
            py.clamp(0.0, (self.height - 1) as f64),
        ))
    }
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Bilinear taps into the ERP grid for every viewport pixel.
pub fn viewport_taps(grid: &ErpGrid, vp: &ViewportSpec) -> Vec<Taps> {
    vp.pixel_lonlats()
        .into_iter()
        .map(|(lon, lat)| grid.taps(lon, lat))
        .collect()
}

/// Builds a viewport tile over `frames` (source frame indices) from a texel
/// fetch `fetch(frame, channel, texel)`.
pub(crate) fn project_with<S: Scalar>(
    taps: &[Taps],
    frames: &[usize],
    channels: usize,
    vp: &ViewportSpec,
    mut fetch: impl FnMut(usize, usize, usize) -> S,
) -> Tile<S> {
    let shape = Shape::new(frames.len(), channels, vp.height, vp.width);
    let mut data = Vec::with_capacity(shape.len());
    for &f in frames {
        for c in 0..channels {
            for t in taps {
                let mut acc = 0.0;
                for k in 0..4 {
                    if t.weight[k] != 0.0 {
                        acc += t.weight[k] * fetch(f, c, t.texel[k]).as_f64();
                    }
                }
                data.push(S::of(acc));
            }
        }
    }
    Tile::new(shape, data).expect("shape built from parts")
}

/// Resolves a (possibly wrapping) frame range.
pub(crate) fn frame_indices<S: Scalar>(
    erp: &PanoLatent<S>,
    start: isize,
    len: usize,
) -> Result<Vec<usize>, ProjectionError> {
    let region = crate::latent::TileRegion::new((start, len), (0, 1), (0, 1));
    erp.check_region(&region)?;
    Ok(crate::latent::axis_map(start, len, erp.shape().frames))
}

/// Perspective tile for `vp` over frames `start..start+len` (the Proj operator).
pub fn project_erp_to_viewport<S: Scalar>(
    erp: &PanoLatent<S>,
    frame_start: isize,
    frame_len: usize,
    vp: &ViewportSpec,
) -> Result<Tile<S>, ProjectionError> {
    let grid = ErpGrid::for_latent(erp)?;
    let frames = frame_indices(erp, frame_start, frame_len)?;
    let taps = viewport_taps(&grid, vp);
    let shape = erp.shape();
    let data = erp.data();
    Ok(project_with(&taps, &frames, shape.channels, vp, |f, c, texel| {
        data[shape.index(f, c, 0, 0) + texel]
    }))
}

/// Per-frame, per-texel record of what has been denoised in the current step.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoisedMask {
    frames: usize,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl DenoisedMask {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            width,
            height,
            bits: vec![false; frames * width * height],
        }
    }

    pub fn for_latent<S: Scalar>(latent: &PanoLatent<S>) -> Self {
        let s = latent.shape();
        Self::new(s.frames, s.height, s.width)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn reset(&mut self) {
        self.bits.fill(false);
    }

    #[inline]
    pub fn get(&self, frame: usize, texel: usize) -> bool {
        self.bits[frame * self.width * self.height + texel]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, texel: usize, v: bool) {
        self.bits[frame * self.width * self.height + texel] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// First `(frame, row, col)` not yet marked.
    pub fn first_unset(&self) -> Option<(usize, usize, usize)> {
        self.bits.iter().position(|&b| !b).map(|i| {
            let plane = self.width * self.height;
            (i / plane, (i % plane) / self.width, i % self.width)
        })
    }

    fn check<S: Scalar>(&self, latent: &PanoLatent<S>) -> Result<(), ProjectionError> {
        let s = latent.shape();
        if (s.frames, s.height, s.width) != self.dims() {
            return Err(ProjectionError::MaskShape {
                mask: self.dims(),
                latent: (s.frames, s.height, s.width),
            });
        }
        Ok(())
    }
}

/// Visits every ERP texel inside `vp`'s footprint with its pixel coordinates.
pub fn for_each_footprint_texel(
    grid: &ErpGrid,
    vp: &ViewportSpec,
    mut visit: impl FnMut(usize, f64, f64),
) {
    let basis = vp.basis();
    let half = vp.half_extent();
    // Every footprint direction lies within the half-diagonal angle of the
    // forward axis, so rows farther than that in latitude are skipped.
    let reach = (half.0.hypot(half.1)).atan() + 1e-6;
    let lon_trig: Vec<(f64, f64)> = (0..grid.width)
        .map(|c| grid.texel_lonlat(c, 0).0.sin_cos())
        .collect();
    for row in 0..grid.height {
        let lat = grid.texel_lonlat(0, row).1;
        if (lat - vp.lat).abs() > reach {
            continue;
        }
        let (sb, cb) = lat.sin_cos();
        for (col, &(sa, ca)) in lon_trig.iter().enumerate() {
            let d = [cb * ca, cb * sa, sb];
            if let Some((px, py)) = vp.image_coords_with(d, &basis, half) {
                visit(row * grid.width + col, px, py);
            }
        }
    }
}

/// Bilinear read of one tile plane at fixed pixel coordinates.
#[derive(Clone, Copy, Debug)]
struct PlaneTap {
    texel: usize,
    /// Plane offsets of `(x0, y0)`, `(x1, y0)`, `(x0, y1)`, `(x1, y1)`.
    at: [usize; 4],
    fx: f64,
    fy: f64,
}

impl PlaneTap {
    fn new(texel: usize, width: usize, height: usize, px: f64, py: f64) -> Self {
        let x0 = (px.floor() as usize).min(width.saturating_sub(2));
        let y0 = (py.floor() as usize).min(height.saturating_sub(2));
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Self {
            texel,
            at: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
            fx: px - x0 as f64,
            fy: py - y0 as f64,
        }
    }

    #[inline]
    fn sample<S: Scalar>(&self, plane: &[S]) -> f64 {
        let v = |k: usize| plane[self.at[k]].as_f64();
        let (fx, fy) = (self.fx, self.fy);
        (1.0 - fy) * ((1.0 - fx) * v(0) + fx * v(1)) + fy * ((1.0 - fx) * v(2) + fx * v(3))
    }
}

fn footprint_taps(grid: &ErpGrid, vp: &ViewportSpec) -> Vec<PlaneTap> {
    let mut taps = Vec::new();
    for_each_footprint_texel(grid, vp, |texel, px, py| {
        taps.push(PlaneTap::new(texel, vp.width, vp.height, px, py));
    });
    taps
}

fn check_tile<S: Scalar>(
    tile: &Tile<S>,
    vp: &ViewportSpec,
    frames: &AxisWindow,
    channels: usize,
) -> Result<(), ProjectionError> {
    let expected = Shape::new(frames.len, channels, vp.height, vp.width);
    if tile.shape() != expected {
        return Err(ProjectionError::TileShape {
            expected,
            actual: tile.shape(),
        });
    }
    Ok(())
}

/// Tile-local frame offsets and latent frame indices of a clip's write range.
fn write_frames(frames: &AxisWindow, total: usize) -> Vec<(usize, usize)> {
    (0..frames.write_len as isize)
        .map(|k| {
            let abs = frames.write_start + k;
            ((abs - frames.start) as usize, abs.rem_euclid(total as isize) as usize)
        })
        .collect()
}

/// Gathers `tile` back into ERP accumulators (the Con_Proj operator, blended).
///
/// `frames` gives the tile's source frame range and the sub-range to write.
/// Every texel inside the viewport footprint receives the bilinearly sampled
/// tile value with weight 1 and is marked in `mask`. Returns the number of
/// texels written per frame.
pub fn reproject_viewport_to_erp<S: Scalar>(
    tile: &Tile<S>,
    vp: &ViewportSpec,
    frames: &AxisWindow,
    acc: &mut BlendAccumulator<S>,
    mask: &mut DenoisedMask,
) -> Result<usize, ProjectionError> {
    let shape = acc.shape();
    let grid = ErpGrid::new(shape.width, shape.height)?;
    check_tile(tile, vp, frames, shape.channels)?;
    if mask.dims() != (shape.frames, shape.height, shape.width) {
        return Err(ProjectionError::MaskShape {
            mask: mask.dims(),
            latent: (shape.frames, shape.height, shape.width),
        });
    }
    let targets = write_frames(frames, shape.frames);
    let taps = footprint_taps(&grid, vp);
    let ts = tile.shape();
    for &(local, f) in &targets {
        for c in 0..shape.channels {
            let plane = &tile.data()[ts.index(local, c, 0, 0)..][..ts.plane()];
            for t in &taps {
                let (row, col) = (t.texel / grid.width, t.texel % grid.width);
                acc.add_value(f, c, row, col, S::of(t.sample(plane)));
            }
        }
        for t in &taps {
            acc.add_weight(f, t.texel / grid.width, t.texel % grid.width);
            mask.set(f, t.texel, true);
        }
    }
    Ok(taps.len())
}

/// Like [`reproject_viewport_to_erp`] but overwrites the latent in place.
pub fn reproject_overwrite<S: Scalar>(
    tile: &Tile<S>,
    vp: &ViewportSpec,
    frames: &AxisWindow,
    latent: &mut PanoLatent<S>,
    mask: &mut DenoisedMask,
) -> Result<usize, ProjectionError> {
    reproject_overwrite_in(tile, vp, frames, latent, mask, None)
}

/// [`reproject_overwrite`] filling frames in parallel on `pool`.
pub(crate) fn reproject_overwrite_in<S: Scalar>(
    tile: &Tile<S>,
    vp: &ViewportSpec,
    frames: &AxisWindow,
    latent: &mut PanoLatent<S>,
    mask: &mut DenoisedMask,
    pool: Option<&rayon::ThreadPool>,
) -> Result<usize, ProjectionError> {
    let grid = ErpGrid::for_latent(latent)?;
    let shape = latent.shape();
    check_tile(tile, vp, frames, shape.channels)?;
    mask.check(latent)?;
    let targets = write_frames(frames, shape.frames);
    let taps = footprint_taps(&grid, vp);
    let ts = tile.shape();
    let per_frame = shape.channels * shape.plane();
    let mut local_of = vec![None; shape.frames];
    for &(local, f) in &targets {
        local_of[f] = Some(local);
    }
    let mut work: Vec<(usize, &mut [S])> = latent
        .data_mut()
        .chunks_mut(per_frame)
        .enumerate()
        .filter_map(|(f, d)| local_of[f].map(|local| (local, d)))
        .collect();
    let fill = |(local, dst): &mut (usize, &mut [S])| {
        for c in 0..shape.channels {
            let src = &tile.data()[ts.index(*local, c, 0, 0)..][..ts.plane()];
            let out = &mut dst[c * shape.plane()..][..shape.plane()];
            for t in &taps {
                out[t.texel] = S::of(t.sample(src));
            }
        }
    };
    match pool {
        Some(p) if work.len() > 1 => {
            use rayon::prelude::*;
            p.install(|| work.par_iter_mut().for_each(fill));
        }
        _ => work.iter_mut().for_each(fill),
    }
    for &(_, f) in &targets {
        for t in &taps {
            mask.set(f, t.texel, true);
        }
    }
    Ok(taps.len())
}

/// Re-noises texels already denoised in this step back to level `t`:
/// masked texels become `sqrt(a)·z + sqrt(1-a)·ε` with the single-step
/// retention `a = alpha_bar[t] / alpha_bar[t-1]`; unmasked texels are copied.
pub fn rebalance_overlap<S: Scalar>(
    latent: &PanoLatent<S>,
    mask: &DenoisedMask,
    schedule: &NoiseSchedule,
    t: usize,
    rng: &mut SeededRng,
) -> Result<PanoLatent<S>, ProjectionError> {
    let a = schedule.step_retention(t)?;
    rebalance_with_retention(latent, mask, a, rng)
}

/// [`rebalance_overlap`] with an explicit retention factor.
pub fn rebalance_with_retention<S: Scalar>(
    latent: &PanoLatent<S>,
    mask: &DenoisedMask,
    retention: f64,
    rng: &mut SeededRng,
) -> Result<PanoLatent<S>, ProjectionError> {
    mask.check(latent)?;
    let mut out = latent.clone();
    if retention >= 1.0 {
        return Ok(out);
    }
    let shape = latent.shape();
    let keep = S::of(retention.sqrt());
    let add = S::of((1.0 - retention).sqrt());
    let plane = shape.plane();
    let data = out.data_mut();
    for f in 0..shape.frames {
        for texel in 0..plane {
            if !mask.get(f, texel) {
                continue;
            }
            for c in 0..shape.channels {
                let i = shape.index(f, c, 0, 0) + texel;
                let e: S = rng.normal();
                data[i] = keep * data[i] + add * e;
            }
        }
    }
    Ok(out)
}
