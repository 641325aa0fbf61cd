use serde::{Deserialize, Serialize};

use super::interp::Interpolation;
use super::PipelineError;
use crate::planner::{SpatialPlanConfig, TemporalPlanConfig, ViewportGrid, MAX_FOV_DEGREES};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Planar panorama tiled by rectangular windows.
    PerspectivePano,
    /// Equirectangular 360° panorama denoised through perspective viewports.
    Erp360,
}

/// Declarative description of a run. Every table rejects unknown keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub channels: usize,
    pub steps: usize,
    pub seed: u64,
    /// Wrap the column axis. Always on in ERP mode.
    pub h_ring: bool,
    /// Treat frames as a ring so the last→first transition is denoised.
    pub loopable: bool,
    /// Parallel denoiser calls in exclusive steps.
    pub workers: usize,
    pub window: WindowConfig,
    pub shift: ShiftConfig,
    pub schedule: ScheduleConfig,
    pub gmg: GmgConfig,
    pub erp: ErpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::PerspectivePano,
            width: 512,
            height: 128,
            frames: 16,
            channels: 4,
            steps: 50,
            seed: 0,
            h_ring: true,
            loopable: false,
            workers: 1,
            window: WindowConfig::default(),
            shift: ShiftConfig::default(),
            schedule: ScheduleConfig::default(),
            gmg: GmgConfig::default(),
            erp: ErpConfig::default(),
        }
    }
}

/// Denoiser window size. In ERP mode `width × height` is the viewport
/// resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            frames: 16,
        }
    }
}

/// Offset rule parameters; unset values take the planner defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub frames: Option<usize>,
    pub warmup_steps: Option<usize>,
    pub warmup_divisor: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Latent-diffusion training schedule subsampled to `steps` levels.
    Ldm,
    /// Plain linear betas over `steps` levels.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Ldm,
            beta_min: 0.000_85,
            beta_max: 0.012,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmgConfig {
    pub enabled: bool,
    /// Integer factor between the high- and low-resolution panoramas.
    pub scale: usize,
    pub interpolation: Interpolation,
    /// Level the upsampled result is renoised to; default `round(0.6·T)`.
    pub renoise_step: Option<usize>,
}

impl Default for GmgConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            scale: 4,
            interpolation: Interpolation::Bicubic,
            renoise_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErpConfig {
    pub lon_count: usize,
    pub lat_count: usize,
    pub fov_deg: f64,
    pub lon_shift_deg: Option<f64>,
    pub lat_shift_deg: Option<f64>,
    /// Average overlapping viewport writes instead of overwriting them.
    pub blend: bool,
}

impl Default for ErpConfig {
    fn default() -> Self {
        Self {
            lon_count: 6,
            lat_count: 3,
            fov_deg: 100.0,
            lon_shift_deg: None,
            lat_shift_deg: None,
            blend: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, v) in [
            ("width", self.width),
            ("height", self.height),
            ("frames", self.frames),
            ("channels", self.channels),
            ("steps", self.steps),
            ("workers", self.workers),
            ("window.width", self.window.width),
            ("window.height", self.window.height),
            ("window.frames", self.window.frames),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.window.frames > self.frames {
            return bad(format!(
                "window.frames {} exceeds frames {}",
                self.window.frames, self.frames
            ));
        }
        match self.mode {
            Mode::Erp360 => {
                if self.width != 2 * self.height {
                    return bad(format!(
                        "ERP width must equal twice height (got {}x{})",
                        self.width, self.height
                    ));
                }
                if !(self.erp.fov_deg > 0.0 && self.erp.fov_deg < MAX_FOV_DEGREES) {
                    return bad(format!("erp.fov_deg {} outside (0, {MAX_FOV_DEGREES})", self.erp.fov_deg));
                }
                if self.erp.lon_count == 0 || self.erp.lat_count == 0 {
                    return bad("erp.lon_count and erp.lat_count must be positive".into());
                }
            }
            Mode::PerspectivePano => {
                self.spatial_plan(self.width, self.height, self.window.width, self.window.height)
                    .validate()
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
            }
        }
        if self.gmg.enabled {
            let s = self.gmg.scale;
            if s == 0 || !self.width.is_multiple_of(s) || !self.height.is_multiple_of(s) {
                return bad(format!(
                    "non-integer scale: {}x{} is not divisible by gmg.scale {s}",
                    self.width, self.height
                ));
            }
            let r = self.renoise_step();
            if r == 0 || r > self.steps {
                return bad(format!("gmg.renoise_step {r} outside 1..={}", self.steps));
            }
        }
        self.build_schedule()?;
        Ok(())
    }

    pub fn t_ring(&self) -> bool {
        self.loopable
    }

    pub fn effective_h_ring(&self) -> bool {
        self.mode == Mode::Erp360 || self.h_ring
    }

    pub fn renoise_step(&self) -> usize {
        self.gmg
            .renoise_step
            .unwrap_or_else(|| ((0.6 * self.steps as f64).round() as usize).clamp(1, self.steps))
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule, PipelineError> {
        let s = match self.schedule.kind {
            ScheduleKind::Ldm => NoiseSchedule::scaled_linear_subsampled(
                self.steps,
                1000.max(self.steps),
                self.schedule.beta_min,
                self.schedule.beta_max,
            ),
            ScheduleKind::Linear => NoiseSchedule::linear(self.steps, self.schedule.beta_min, self.schedule.beta_max),
        };
        s.map_err(|e| PipelineError::Config(format!("schedule: {e}")))
    }

    /// Spatial planner configuration for a panorama of the given size.
    pub fn spatial_plan(&self, width: usize, height: usize, win_w: usize, win_h: usize) -> SpatialPlanConfig {
        let mut c = SpatialPlanConfig::new(width, height, win_w, win_h, self.steps);
        c.h_ring = self.effective_h_ring();
        if let Some(x) = self.shift.x {
            c.shift_x = x;
        }
        if let Some(y) = self.shift.y {
            c.shift_y = y;
        }
        if let Some(k) = self.shift.warmup_steps {
            c.warmup_steps = k;
        }
        if let Some(d) = self.shift.warmup_divisor {
            c.warmup_divisor = d;
        }
        c
    }

    pub fn temporal_plan(&self) -> TemporalPlanConfig {
        let mut c = TemporalPlanConfig::new(self.frames, self.window.frames, self.loopable);
        if let Some(s) = self.shift.frames {
            c.shift = s;
        }
        c
    }

    pub fn viewport_grid(&self, win_w: usize, win_h: usize) -> ViewportGrid {
        let mut g = ViewportGrid::new(self.erp.lon_count, self.erp.lat_count, self.erp.fov_deg, win_w, win_h);
        if let Some(s) = self.erp.lon_shift_deg {
            g.lon_shift_deg = s;
        }
        if let Some(s) = self.erp.lat_shift_deg {
            g.lat_shift_deg = s;
        }
        g
    }
}
