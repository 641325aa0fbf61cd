use serde::{Deserialize, Serialize};

use super::axis::{blended_axis, exclusive_axis, AxisWindow};
use super::{verify_plan, PlanError, PlanMode, PlannedWindow, StepPlan};
use crate::latent::TileRegion;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialPlanConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub window_width: usize,
    pub window_height: usize,
    pub h_ring: bool,
    /// Per-step column shift. 0 disables shifting; multiples of the window
    /// width are accepted but degenerate (see [`Self::degenerate_shift`]).
    pub shift_x: usize,
    pub shift_y: usize,
    /// Number of leading steps planned with overlapping blended windows.
    pub warmup_steps: usize,
    /// Warm-up stride is `window / warmup_divisor`.
    pub warmup_divisor: usize,
    pub steps: usize,
}

impl SpatialPlanConfig {
    /// Defaults: shifts of a quarter window, a warm-up of `ceil(T/4)` steps at
    /// half-window stride, horizontal ring.
    pub fn new(width: usize, height: usize, window_width: usize, window_height: usize, steps: usize) -> Self {
        Self {
            frames: 1,
            width,
            height,
            window_width,
            window_height,
            h_ring: true,
            shift_x: (window_width / 4).max(1),
            shift_y: (window_height / 4).max(1),
            warmup_steps: steps.div_ceil(4),
            warmup_divisor: 2,
            steps,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, v) in [
            ("frames", self.frames),
            ("width", self.width),
            ("height", self.height),
            ("window width", self.window_width),
            ("window height", self.window_height),
            ("steps", self.steps),
        ] {
            if v == 0 {
                return Err(PlanError::Zero(name));
            }
        }
        if self.window_width > self.width {
            return Err(PlanError::WindowTooLarge {
                axis: "column",
                window: self.window_width,
                panorama: self.width,
            });
        }
        if self.window_height > self.height {
            return Err(PlanError::WindowTooLarge {
                axis: "row",
                window: self.window_height,
                panorama: self.height,
            });
        }
        if self.warmup_steps > self.steps {
            return Err(PlanError::Warmup {
                warmup: self.warmup_steps,
                steps: self.steps,
            });
        }
        let max = self.window_width.min(self.window_height);
        if self.warmup_divisor == 0 || self.warmup_divisor > max {
            return Err(PlanError::Divisor {
                divisor: self.warmup_divisor,
                max,
            });
        }
        Ok(())
    }

    /// True when a configured shift never moves the window edges.
    pub fn degenerate_shift(&self) -> bool {
        let dead_x = self.shift_x.is_multiple_of(self.window_width) && self.window_width < self.width;
        let dead_y = self.shift_y.is_multiple_of(self.window_height) && self.window_height < self.height;
        dead_x || dead_y
    }

    pub fn offset(&self, step: usize) -> (usize, usize) {
        (
            (step * self.shift_x) % self.window_width,
            (step * self.shift_y) % self.window_height,
        )
    }

    pub fn mode(&self, step: usize) -> PlanMode {
        if step < self.warmup_steps {
            PlanMode::Blended
        } else {
            PlanMode::Exclusive
        }
    }
}

/// Window layout for execution step `step`.
pub fn plan_spatial_step(cfg: &SpatialPlanConfig, step: usize) -> Result<StepPlan, PlanError> {
    cfg.validate()?;
    let mode = cfg.mode(step);
    let (offset, cols, rows) = match mode {
        PlanMode::Blended => {
            let sx = (cfg.window_width / cfg.warmup_divisor).max(1);
            let sy = (cfg.window_height / cfg.warmup_divisor).max(1);
            (
                (0, 0),
                blended_axis(cfg.width, cfg.window_width, sx, cfg.h_ring),
                blended_axis(cfg.height, cfg.window_height, sy, false),
            )
        }
        PlanMode::Exclusive => {
            let (ox, oy) = cfg.offset(step);
            (
                (ox, oy),
                exclusive_axis(cfg.width, cfg.window_width, ox, cfg.h_ring),
                exclusive_axis(cfg.height, cfg.window_height, oy, false),
            )
        }
    };
    let frames = AxisWindow {
        start: 0,
        len: cfg.frames,
        write_start: 0,
        write_len: cfg.frames,
    };
    let mut windows = Vec::with_capacity(rows.len() * cols.len());
    for r in &rows {
        for c in &cols {
            windows.push(window(&frames, r, c));
        }
    }
    let plan = StepPlan {
        step,
        mode,
        offset,
        windows,
    };
    verify_plan(&plan, cfg.frames, cfg.height, cfg.width)?;
    Ok(plan)
}

fn window(f: &AxisWindow, r: &AxisWindow, c: &AxisWindow) -> PlannedWindow {
    PlannedWindow {
        read: TileRegion::new(
            (f.start, f.len),
            (r.start as usize, r.len),
            (c.start, c.len),
        ),
        write: TileRegion::new(
            (f.write_start, f.write_len),
            (r.write_start as usize, r.write_len),
            (c.write_start, c.write_len),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::claim_counts;
    use proptest::prelude::*;

    fn cfg(w: usize, h: usize, ww: usize, wh: usize) -> SpatialPlanConfig {
        let mut c = SpatialPlanConfig::new(w, h, ww, wh, 8);
        c.warmup_steps = 0;
        c
    }

    #[test]
    fn aligned_tiling_at_zero_offset() {
        let c = cfg(128, 32, 32, 32);
        let p = plan_spatial_step(&c, 0).unwrap();
        assert_eq!(p.mode, PlanMode::Exclusive);
        let starts: Vec<isize> = p.windows.iter().map(|w| w.write.col_start).collect();
        assert_eq!(starts, vec![0, 32, 64, 96]);
        assert!(p.windows.iter().all(|w| w.read == w.write && w.read.row_len == 32));
    }

    #[test]
    fn ring_shift_wraps_last_window() {
        let mut c = cfg(128, 32, 32, 32);
        c.shift_x = 8;
        c.shift_y = 0;
        let p = plan_spatial_step(&c, 1).unwrap();
        assert_eq!(p.offset.0, 8);
        let starts: Vec<isize> = p.windows.iter().map(|w| w.write.col_start).collect();
        assert_eq!(starts, vec![8, 40, 72, 104]);
        // brute-force audit of every column
        let mut hits = [0; 128];
        for w in &p.windows {
            for k in 0..w.write.col_len as isize {
                hits[((w.write.col_start + k) % 128) as usize] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
        let last = p.windows.last().unwrap().write;
        assert_eq!((last.col_start, last.col_len), (104, 32));
    }

    #[test]
    fn padding_rows_cover_each_row_once() {
        let mut c = cfg(32, 64, 32, 32);
        c.shift_y = 8;
        let p = plan_spatial_step(&c, 1).unwrap();
        assert_eq!(p.offset.1, 8);
        let bands: Vec<(usize, usize, usize, usize)> = p
            .windows
            .iter()
            .map(|w| (w.read.row_start, w.read.row_len, w.write.row_start, w.write.row_len))
            .collect();
        assert_eq!(bands, vec![(0, 32, 0, 8), (8, 32, 8, 32), (32, 32, 40, 24)]);
        let mut hits = [0; 64];
        for w in &p.windows {
            for h in &mut hits[w.write.row_start..w.write.row_start + w.write.row_len] {
                *h += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn warmup_is_blended_then_exclusive() {
        let mut c = SpatialPlanConfig::new(128, 64, 32, 32, 8);
        c.warmup_steps = 2;
        let p = plan_spatial_step(&c, 0).unwrap();
        assert_eq!(p.mode, PlanMode::Blended);
        // 50% stride: 8 ring columns x 3 row bands
        assert_eq!(p.windows.len(), 8 * 3);
        assert_eq!(plan_spatial_step(&c, 2).unwrap().mode, PlanMode::Exclusive);
    }

    #[test]
    fn boundaries_move_every_exclusive_step() {
        let mut c = SpatialPlanConfig::new(512, 128, 32, 32, 50);
        c.warmup_steps = 13;
        for step in c.warmup_steps..c.steps - 1 {
            let a = plan_spatial_step(&c, step).unwrap().boundary_columns(512);
            let b = plan_spatial_step(&c, step + 1).unwrap().boundary_columns(512);
            assert!(a.iter().all(|x| !b.contains(x)), "step {step}");
        }
    }

    #[test]
    fn validation_errors() {
        let mut c = cfg(64, 32, 65, 32);
        assert!(matches!(c.validate(), Err(PlanError::WindowTooLarge { axis: "column", .. })));
        c.window_width = 32;
        c.warmup_steps = 9;
        assert!(matches!(c.validate(), Err(PlanError::Warmup { .. })));
        c.warmup_steps = 0;
        c.warmup_divisor = 0;
        assert!(matches!(c.validate(), Err(PlanError::Divisor { .. })));
    }

    #[test]
    fn degenerate_shift_flag() {
        let mut c = cfg(64, 32, 32, 32);
        c.shift_x = 32;
        assert!(c.degenerate_shift());
        c.shift_x = 8;
        assert!(!c.degenerate_shift());
    }

    proptest! {
        #[test]
        fn every_step_partitions(
            w in 1usize..80, h in 1usize..40, fw in 1usize..80, fh in 1usize..40,
            sx in 0usize..90, sy in 0usize..50, ring in any::<bool>(), step in 0usize..64,
        ) {
            let ww = fw.min(w);
            let wh = fh.min(h);
            let mut c = cfg(w, h, ww, wh);
            c.h_ring = ring;
            c.shift_x = sx;
            c.shift_y = sy;
            c.steps = 64;
            c.warmup_steps = 4;
            c.warmup_divisor = 1;
            let p = plan_spatial_step(&c, step).unwrap();
            let counts = claim_counts(&p.windows, 1, h, w);
            match p.mode {
                PlanMode::Exclusive => prop_assert!(counts.iter().all(|&n| n == 1)),
                PlanMode::Blended => prop_assert!(counts.iter().all(|&n| n >= 1)),
            }
            for win in &p.windows {
                prop_assert_eq!(win.read.col_len, ww);
                prop_assert_eq!(win.read.row_len, wh);
                prop_assert!(win.read.contains(&win.write).is_ok());
            }
            prop_assert_eq!(plan_spatial_step(&c, step).unwrap(), p);
        }
    }
}
