use serde::{Deserialize, Serialize};

use super::axis::{exclusive_axis, AxisWindow};
use super::PlanError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalPlanConfig {
    pub frames: usize,
    pub window_frames: usize,
    /// Per-step frame shift; 0 disables shifting.
    pub shift: usize,
    /// Treat the sequence as a ring so clips cross the last→first boundary.
    pub loopable: bool,
}

impl TemporalPlanConfig {
    /// Default shift of a quarter clip, so each frame visits four clip
    /// positions per cycle.
    pub fn new(frames: usize, window_frames: usize, loopable: bool) -> Self {
        Self {
            frames,
            window_frames,
            shift: (window_frames / 4).max(1),
            loopable,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.frames == 0 {
            return Err(PlanError::Zero("frames"));
        }
        if self.window_frames == 0 {
            return Err(PlanError::Zero("window frames"));
        }
        if self.window_frames > self.frames {
            return Err(PlanError::WindowTooLarge {
                axis: "frame",
                window: self.window_frames,
                panorama: self.frames,
            });
        }
        Ok(())
    }

    pub fn offset(&self, step: usize) -> usize {
        (step * self.shift) % self.window_frames
    }
}

/// Frame clips for execution step `step`; write ranges partition all frames.
///
/// A non-looping sequence that fits one clip is a single clip, so the
/// temporal stage vanishes when `frames == window_frames`.
pub fn plan_temporal_step(cfg: &TemporalPlanConfig, step: usize) -> Result<Vec<AxisWindow>, PlanError> {
    cfg.validate()?;
    if cfg.frames == cfg.window_frames && !cfg.loopable {
        return Ok(vec![AxisWindow {
            start: 0,
            len: cfg.frames,
            write_start: 0,
            write_len: cfg.frames,
        }]);
    }
    Ok(exclusive_axis(
        cfg.frames,
        cfg.window_frames,
        cfg.offset(step),
        cfg.loopable,
    ))
}
