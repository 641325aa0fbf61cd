//! Per-step window decompositions.
//!
//! Step indices passed to the planners are execution ordinals: step 0 is the
//! first denoising step (at the highest noise level), step `T - 1` the last.
//! Offsets follow `(step · shift) mod window`.

mod axis;
mod spatial;
mod temporal;
mod viewport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::TileRegion;

pub use axis::AxisWindow;
pub use spatial::{plan_spatial_step, SpatialPlanConfig};
pub use temporal::{plan_temporal_step, TemporalPlanConfig};
pub use viewport::{plan_viewport_step, ViewportGrid, MAX_FOV_DEGREES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("window {window} exceeds panorama {panorama} along the {axis} axis")]
    WindowTooLarge {
        axis: &'static str,
        window: usize,
        panorama: usize,
    },
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("warm-up of {warmup} steps exceeds the {steps}-step schedule")]
    Warmup { warmup: usize, steps: usize },
    #[error("warm-up divisor {divisor} must be in 1..={max}")]
    Divisor { divisor: usize, max: usize },
    #[error("field of view {0}° outside (0°, 175°)")]
    Fov(f64),
    #[error("step {step} plan failed its coverage invariant: {detail}")]
    Invariant { step: usize, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Write regions partition the latent; no element is written twice.
    Exclusive,
    /// Windows overlap; writes are averaged through accumulators.
    Blended,
}

/// A denoising window: `read` is what the denoiser sees, `write` the part of
/// its output committed to the latent. In blended mode they coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlannedWindow {
    pub read: TileRegion,
    pub write: TileRegion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub step: usize,
    pub mode: PlanMode,
    /// Column and row offsets applied at this step (0 in blended mode).
    pub offset: (usize, usize),
    pub windows: Vec<PlannedWindow>,
}

impl StepPlan {
    /// Columns `x` (mod width) at which a write region starts, i.e. the
    /// seams between horizontally adjacent windows.
    pub fn boundary_columns(&self, width: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = self
            .windows
            .iter()
            .map(|w| w.write.col_start.rem_euclid(width as isize) as usize)
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Replaces every window's frame range with a clip's read and write ranges.
    pub fn with_clip(&self, clip: &AxisWindow) -> StepPlan {
        let windows = self
            .windows
            .iter()
            .map(|w| {
                let mut read = w.read;
                let mut write = w.write;
                read.frame_start = clip.start;
                read.frame_len = clip.len;
                write.frame_start = clip.write_start;
                write.frame_len = clip.write_len;
                PlannedWindow { read, write }
            })
            .collect();
        StepPlan {
            windows,
            ..self.clone()
        }
    }
}

/// Counts claims per (frame, row, column) for a set of write regions.
pub(crate) fn claim_counts(
    windows: &[PlannedWindow],
    frames: usize,
    height: usize,
    width: usize,
) -> Vec<u32> {
    let mut counts = vec![0u32; frames * height * width];
    for w in windows {
        let r = &w.write;
        for df in 0..r.frame_len as isize {
            let f = (r.frame_start + df).rem_euclid(frames as isize) as usize;
            for row in r.row_start..r.row_start + r.row_len {
                for dc in 0..r.col_len as isize {
                    let x = (r.col_start + dc).rem_euclid(width as isize) as usize;
                    counts[(f * height + row) * width + x] += 1;
                }
            }
        }
    }
    counts
}

pub(crate) fn verify_plan(
    plan: &StepPlan,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<(), PlanError> {
    let counts = claim_counts(&plan.windows, frames, height, width);
    let bad = match plan.mode {
        PlanMode::Exclusive => counts.iter().position(|&c| c != 1),
        PlanMode::Blended => counts.iter().position(|&c| c == 0),
    };
    match bad {
        None => Ok(()),
        Some(i) => Err(PlanError::Invariant {
            step: plan.step,
            detail: format!(
                "element (frame {}, row {}, col {}) claimed {} times",
                i / (height * width),
                (i / width) % height,
                i % width,
                counts[i]
            ),
        }),
    }
}
