use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::projection::ViewportSpec;

pub const MAX_FOV_DEGREES: f64 = 175.0;

/// Layout of perspective viewports over the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewportGrid {
    pub lon_count: usize,
    pub lat_count: usize,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Per-step longitude shift in degrees.
    pub lon_shift_deg: f64,
    /// Per-step latitude shift in degrees.
    pub lat_shift_deg: f64,
}

impl ViewportGrid {
    /// Shifts default to a quarter of the center spacing on each axis.
    pub fn new(lon_count: usize, lat_count: usize, fov_deg: f64, width: usize, height: usize) -> Self {
        let lon_count_f = lon_count.max(1) as f64;
        let lat_count_f = lat_count.max(1) as f64;
        Self {
            lon_count,
            lat_count,
            fov_deg,
            width,
            height,
            lon_shift_deg: 360.0 / lon_count_f / 4.0,
            lat_shift_deg: 180.0 / lat_count_f / 4.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.lon_count == 0 {
            return Err(PlanError::Zero("longitude count"));
        }
        if self.lat_count == 0 {
            return Err(PlanError::Zero("latitude count"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(PlanError::Zero("viewport size"));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < MAX_FOV_DEGREES) {
            return Err(PlanError::Fov(self.fov_deg));
        }
        Ok(())
    }

    /// Largest latitude offset (radians) that keeps both poles inside the
    /// outermost rows' footprints: a tenth short of `fov_v/2 - spacing/2`,
    /// never more than half a spacing. The footprint is the hull of pixel
    /// centers, so `fov_v` shrinks with the viewport's pixel count.
    pub fn lat_amplitude(&self) -> f64 {
        let spacing = PI / self.lat_count as f64;
        let rows = self.height.saturating_sub(1) as f64;
        let half_v = (self.fov_deg.to_radians() / 2.0).tan() * rows / self.width as f64;
        let reach = half_v.atan() - spacing / 2.0;
        (0.9 * reach).clamp(0.0, spacing / 2.0)
    }

    /// Longitude and latitude offsets (radians) applied at `step`.
    ///
    /// Longitude advances by `step·δ_α` modulo the center spacing. Latitude
    /// advances by `step·δ_β` modulo `2a` within `[-a, a)`, where `a` is
    /// [`lat_amplitude`](Self::lat_amplitude), so rows move every step yet
    /// never uncover a pole.
    pub fn offsets(&self, step: usize) -> (f64, f64) {
        let lon_spacing = 2.0 * PI / self.lon_count as f64;
        let a = self.lat_amplitude();
        let lat = if a > 0.0 {
            (step as f64 * self.lat_shift_deg.to_radians() + a).rem_euclid(2.0 * a) - a
        } else {
            0.0
        };
        ((step as f64 * self.lon_shift_deg.to_radians()).rem_euclid(lon_spacing), lat)
    }
}

/// Viewport centers for execution step `step`, top latitude row first.
///
/// Longitudes sit at `-π + i·2π/n_α + offset`, wrapped into `[-π, π)`.
/// Latitude rows sit at band centers `-π/2 + (j + ½)·π/n_β + offset`.
pub fn plan_viewport_step(grid: &ViewportGrid, step: usize) -> Result<Vec<ViewportSpec>, PlanError> {
    grid.validate()?;
    let (lon_off, lat_off) = grid.offsets(step);
    let lon_spacing = 2.0 * PI / grid.lon_count as f64;
    let lat_spacing = PI / grid.lat_count as f64;
    let mut lats: Vec<f64> = (0..grid.lat_count)
        .map(|j| (-PI / 2.0 + lat_spacing * (j as f64 + 0.5) + lat_off).clamp(-PI / 2.0, PI / 2.0))
        .collect();
    lats.sort_by(|a, b| b.total_cmp(a));
    let fov = grid.fov_deg.to_radians();
    let mut out = Vec::with_capacity(grid.lon_count * grid.lat_count);
    for lat in lats {
        for i in 0..grid.lon_count {
            let lon = (lon_spacing * i as f64 + lon_off).rem_euclid(2.0 * PI) - PI;
            out.push(
                ViewportSpec::new(lon, lat, fov, grid.width, grid.height)
                    .expect("grid validated"),
            );
        }
    }
    Ok(out)
}
