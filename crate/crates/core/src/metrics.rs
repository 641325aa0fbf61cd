//! Seam, flicker and coverage measurements for tests and the CLI.

use serde::Serialize;
use thiserror::Error;

use crate::latent::{PanoLatent, TileRegion};
use crate::planner::{
    plan_spatial_step, plan_temporal_step, plan_viewport_step, PlanError, PlanMode, SpatialPlanConfig,
    TemporalPlanConfig, ViewportGrid,
};
use crate::projection::{for_each_footprint_texel, ErpGrid, ProjectionError};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Seed for the interior baseline sample.
pub const SEAM_BASELINE_SEED: u64 = 0x5ea4;
pub const SEAM_BASELINE_PAIRS: usize = 32;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("seam metric needs a horizontal ring latent")]
    NotRing,
    #[error("seam metric needs at least 4 columns, got {0}")]
    TooNarrow(usize),
    #[error("flicker metric needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeamReport {
    /// Mean |Δ| across the seam.
    pub boundary: f64,
    /// Mean |Δ| over sampled interior column pairs.
    pub baseline: f64,
    /// `boundary / baseline`, or 1 when the baseline is 0.
    pub ratio: f64,
}

impl SeamReport {
    fn new(boundary: f64, baseline: f64) -> Self {
        let ratio = if baseline > 0.0 { boundary / baseline } else { 1.0 };
        Self {
            boundary,
            baseline,
            ratio,
        }
    }
}

/// Seam between the last and first columns of a ring latent.
pub fn wrap_seam_metric<S: Scalar>(latent: &PanoLatent<S>) -> Result<SeamReport, MetricError> {
    seam_metric_at(latent, 0)
}

/// Seam between columns `seam - 1` and `seam` (mod width). Interior pairs are
/// drawn relative to the seam, so rotating the latent by `s` and measuring at
/// `seam + s` gives the same report.
pub fn seam_metric_at<S: Scalar>(latent: &PanoLatent<S>, seam: usize) -> Result<SeamReport, MetricError> {
    if !latent.h_ring() {
        return Err(MetricError::NotRing);
    }
    let s = latent.shape();
    let w = s.width;
    if w < 4 {
        return Err(MetricError::TooNarrow(w));
    }
    let pair_mean = |a: usize, b: usize| -> f64 {
        let mut acc = 0.0;
        for f in 0..s.frames {
            for c in 0..s.channels {
                for r in 0..s.height {
                    acc += (latent.at(f, c, r, a).as_f64() - latent.at(f, c, r, b).as_f64()).abs();
                }
            }
        }
        acc / (s.frames * s.channels * s.height) as f64
    };
    let seam = seam % w;
    let boundary = pair_mean((seam + w - 1) % w, seam);
    // pair d is columns (seam + d, seam + d + 1), d in 0..=w-2
    let mut rng = SeededRng::new(SEAM_BASELINE_SEED);
    let baseline = (0..SEAM_BASELINE_PAIRS)
        .map(|_| {
            let d = rng.below(w - 1);
            pair_mean((seam + d) % w, (seam + d + 1) % w)
        })
        .sum::<f64>()
        / SEAM_BASELINE_PAIRS as f64;
    Ok(SeamReport::new(boundary, baseline))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlickerReport {
    /// Mean |Z[f+1] − Z[f]| for f = 0..F-1, then F-1 → 0 when looped.
    pub transitions: Vec<f64>,
    pub loop_transition: Option<f64>,
    pub median_interior: f64,
    /// `loop / median`; `None` without a loop or with a zero median.
    pub loop_ratio: Option<f64>,
}

/// Per-transition mean absolute frame difference. The wrap transition is
/// included when `looped` (defaults to the latent's temporal ring flag).
pub fn temporal_flicker_metric<S: Scalar>(
    latent: &PanoLatent<S>,
    looped: Option<bool>,
) -> Result<FlickerReport, MetricError> {
    let s = latent.shape();
    if s.frames < 2 {
        return Err(MetricError::TooShort(s.frames));
    }
    let looped = looped.unwrap_or(latent.t_ring());
    let per_frame = s.channels * s.plane();
    let data = latent.data();
    let diff = |a: usize, b: usize| -> f64 {
        let x = &data[a * per_frame..(a + 1) * per_frame];
        let y = &data[b * per_frame..(b + 1) * per_frame];
        x.iter().zip(y).map(|(p, q)| (q.as_f64() - p.as_f64()).abs()).sum::<f64>() / per_frame as f64
    };
    let mut transitions: Vec<f64> = (0..s.frames - 1).map(|f| diff(f, f + 1)).collect();
    let mut sorted = transitions.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median_interior = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let loop_transition = looped.then(|| diff(s.frames - 1, 0));
    if let Some(l) = loop_transition {
        transitions.push(l);
    }
    let loop_ratio = loop_transition.filter(|_| median_interior > 0.0).map(|l| l / median_interior);
    Ok(FlickerReport {
        transitions,
        loop_transition,
        median_interior,
        loop_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageViolation {
    pub step: usize,
    /// `uncovered`, `double_claim`, `read_misses_write` or `window_size`.
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CoverageReport {
    pub plan: String,
    pub steps: usize,
    pub exclusive_steps: usize,
    pub blended_steps: usize,
    /// Elements checked per step.
    pub elements: usize,
    pub violations: Vec<CoverageViolation>,
    /// Total violations; only the first few are kept in `violations`.
    pub violation_count: usize,
    pub warnings: Vec<String>,
}

const KEPT_VIOLATIONS: usize = 20;

impl CoverageReport {
    fn new(plan: impl Into<String>, elements: usize) -> Self {
        Self {
            plan: plan.into(),
            elements,
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn violate(&mut self, step: usize, kind: &str, detail: String) {
        self.violation_count += 1;
        if self.violations.len() < KEPT_VIOLATIONS {
            self.violations.push(CoverageViolation {
                step,
                kind: kind.into(),
                detail,
            });
        }
    }

    /// Checks one step's claim bitmap.
    fn tally(&mut self, step: usize, mode: PlanMode, counts: &[u32], locate: impl Fn(usize) -> String) {
        self.steps += 1;
        match mode {
            PlanMode::Exclusive => self.exclusive_steps += 1,
            PlanMode::Blended => self.blended_steps += 1,
        }
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                self.violate(step, "uncovered", locate(i));
            } else if c > 1 && mode == PlanMode::Exclusive {
                self.violate(step, "double_claim", format!("{} claimed {c} times", locate(i)));
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{}: {} steps ({} exclusive, {} blended), {} elements per step, {} violations\n",
            self.plan, self.steps, self.exclusive_steps, self.blended_steps, self.elements, self.violation_count
        );
        for v in &self.violations {
            s.push_str(&format!("  step {} {}: {}\n", v.step, v.kind, v.detail));
        }
        if self.violation_count > self.violations.len() {
            s.push_str(&format!("  ... {} more\n", self.violation_count - self.violations.len()));
        }
        for w in &self.warnings {
            s.push_str(&format!("  warning: {w}\n"));
        }
        s
    }
}

fn axis_cells(start: isize, len: usize, extent: usize) -> impl Iterator<Item = usize> {
    (0..len as isize).map(move |k| (start + k).rem_euclid(extent as isize) as usize)
}

fn contains_axis(outer_start: isize, outer_len: usize, inner_start: isize, inner_len: usize) -> bool {
    inner_start >= outer_start && inner_start + inner_len as isize <= outer_start + outer_len as isize
}

fn read_contains_write(read: &TileRegion, write: &TileRegion) -> bool {
    contains_axis(read.col_start, read.col_len, write.col_start, write.col_len)
        && contains_axis(read.row_start as isize, read.row_len, write.row_start as isize, write.row_len)
}

/// Exhaustive row×column claim audit of every step of a spatial plan.
pub fn audit_spatial(cfg: &SpatialPlanConfig) -> Result<CoverageReport, MetricError> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut report = CoverageReport::new(format!("spatial {w}x{h}, window {}x{}", cfg.window_width, cfg.window_height), w * h);
    if cfg.degenerate_shift() {
        report.warnings.push(format!(
            "degenerate schedule: shift ({}, {}) is a multiple of the window, boundaries never move",
            cfg.shift_x, cfg.shift_y
        ));
    }
    let mut counts = vec![0u32; w * h];
    for step in 0..cfg.steps {
        let plan = plan_spatial_step(cfg, step)?;
        counts.fill(0);
        for win in &plan.windows {
            let (r, wr) = (&win.read, &win.write);
            if r.col_len != cfg.window_width || r.row_len != cfg.window_height {
                report.violate(step, "window_size", format!("read {}x{}", r.col_len, r.row_len));
            }
            if !read_contains_write(r, wr) {
                report.violate(step, "read_misses_write", format!("{wr:?} outside {r:?}"));
            }
            for row in wr.row_start..wr.row_start + wr.row_len {
                for x in axis_cells(wr.col_start, wr.col_len, w) {
                    counts[row * w + x] += 1;
                }
            }
        }
        report.tally(step, plan.mode, &counts, |i| format!("row {}, column {}", i / w, i % w));
    }
    Ok(report)
}

/// Frame-claim audit of every step of a temporal plan.
pub fn audit_temporal(cfg: &TemporalPlanConfig, steps: usize) -> Result<CoverageReport, MetricError> {
    cfg.validate()?;
    let mut report = CoverageReport::new(
        format!(
            "temporal {} frames, clip {}{}",
            cfg.frames,
            cfg.window_frames,
            if cfg.loopable { ", loopable" } else { "" }
        ),
        cfg.frames,
    );
    if cfg.frames > cfg.window_frames && cfg.shift.is_multiple_of(cfg.window_frames) {
        report.warnings.push(format!(
            "degenerate schedule: frame shift {} is a multiple of the clip, boundaries never move",
            cfg.shift
        ));
    }
    let mut counts = vec![0u32; cfg.frames];
    for step in 0..steps {
        let clips = plan_temporal_step(cfg, step)?;
        counts.fill(0);
        for c in &clips {
            if c.len != cfg.window_frames {
                report.violate(step, "window_size", format!("clip of {} frames", c.len));
            }
            if !contains_axis(c.start, c.len, c.write_start, c.write_len) {
                report.violate(step, "read_misses_write", format!("{c:?}"));
            }
            for f in axis_cells(c.write_start, c.write_len, cfg.frames) {
                counts[f] += 1;
            }
        }
        report.tally(step, PlanMode::Exclusive, &counts, |i| format!("frame {i}"));
    }
    Ok(report)
}

/// Sphere coverage audit: every ERP texel must fall inside at least one
/// viewport footprint at every step.
pub fn audit_viewports(
    grid: &ViewportGrid,
    erp_width: usize,
    erp_height: usize,
    steps: usize,
) -> Result<CoverageReport, MetricError> {
    let erp = ErpGrid::new(erp_width, erp_height)?;
    let mut report = CoverageReport::new(
        format!(
            "viewports {}x{} fov {}° on {erp_width}x{erp_height} ERP",
            grid.lon_count, grid.lat_count, grid.fov_deg
        ),
        erp.texels(),
    );
    let mut counts = vec![0u32; erp.texels()];
    for step in 0..steps {
        let vps = plan_viewport_step(grid, step)?;
        counts.fill(0);
        for vp in &vps {
            for_each_footprint_texel(&erp, vp, |texel, _, _| counts[texel] += 1);
        }
        // overlap is expected here; only holes count
        report.tally(step, PlanMode::Blended, &counts, |i| {
            let (lon, lat) = erp.texel_lonlat(i % erp_width, i / erp_width);
            format!("texel row {}, column {} (lon {lon:.4}, lat {lat:.4})", i / erp_width, i % erp_width)
        });
    }
    Ok(report)
}
