use std::fmt::Write as _;

use anyhow::anyhow;
use panoshift::metrics::{audit_spatial, audit_temporal, audit_viewports, CoverageReport};
use panoshift::pipeline::{Mode, RunConfig};
use panoshift::planner::{plan_spatial_step, plan_temporal_step, plan_viewport_step, PlanMode, SpatialPlanConfig, ViewportGrid};
use panoshift::projection::{for_each_footprint_texel, ErpGrid};

use crate::Failure;

const MAX_COLS: usize = 64;
const MAX_ROWS: usize = 32;
const GLYPHS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn glyph(i: usize) -> char {
    GLYPHS[i % GLYPHS.len()] as char
}

fn count_glyph(n: u32) -> char {
    match n {
        0 => '.',
        1..=9 => char::from_digit(n, 10).unwrap(),
        _ => '+',
    }
}

/// Writer map of one spatial step. Exclusive steps show the owning window,
/// blended steps how many windows touch each cell. Large latents are
/// sampled down to at most 64×32 cells.
fn spatial_diagram(cfg: &SpatialPlanConfig, step: usize, out: &mut String) -> Result<(), Failure> {
    let plan = plan_spatial_step(cfg, step).map_err(|e| Failure::Config(e.into()))?;
    let (w, h) = (cfg.width, cfg.height);
    let mut owner = vec![usize::MAX; w * h];
    let mut count = vec![0u32; w * h];
    for (i, win) in plan.windows.iter().enumerate() {
        let r = &win.write;
        for row in r.row_start..r.row_start + r.row_len {
            for k in 0..r.col_len as isize {
                let col = (r.col_start + k).rem_euclid(w as isize) as usize;
                owner[row * w + col] = i;
                count[row * w + col] += 1;
            }
        }
    }
    let (ox, oy) = cfg.offset(step);
    let mode = match plan.mode {
        PlanMode::Exclusive => "exclusive",
        PlanMode::Blended => "blended",
    };
    let _ = writeln!(
        out,
        "step {step} ({mode}): offset x={ox} y={oy}, {} windows",
        plan.windows.len()
    );
    let sx = w.div_ceil(MAX_COLS);
    let sy = h.div_ceil(MAX_ROWS);
    for row in (0..h).step_by(sy) {
        out.push_str("  ");
        for col in (0..w).step_by(sx) {
            let i = row * w + col;
            out.push(match plan.mode {
                PlanMode::Exclusive if count[i] == 1 => glyph(owner[i]),
                _ => count_glyph(count[i]),
            });
        }
        out.push('\n');
    }
    Ok(())
}

fn viewport_diagram(grid: &ViewportGrid, step: usize, out: &mut String) -> Result<(), Failure> {
    let vps = plan_viewport_step(grid, step).map_err(|e| Failure::Config(e.into()))?;
    let (lon, lat) = grid.offsets(step);
    let _ = writeln!(
        out,
        "step {step}: offset lon={:.2}° lat={:.2}°, {} viewports",
        lon.to_degrees(),
        lat.to_degrees(),
        vps.len()
    );
    for row in vps.chunks(grid.lon_count.max(1)) {
        let centres: Vec<String> = row
            .iter()
            .map(|v| format!("({:.1}, {:.1})", v.lon.to_degrees(), v.lat.to_degrees()))
            .collect();
        let _ = writeln!(out, "  centres {}", centres.join(" "));
    }
    let erp = ErpGrid::new(MAX_COLS, MAX_ROWS).map_err(|e| Failure::Config(e.into()))?;
    let mut count = vec![0u32; erp.texels()];
    for vp in &vps {
        for_each_footprint_texel(&erp, vp, |i, _, _| count[i] += 1);
    }
    for row in count.chunks(MAX_COLS) {
        out.push_str("  ");
        out.extend(row.iter().map(|&n| count_glyph(n)));
        out.push('\n');
    }
    Ok(())
}

fn temporal_listing(run: &RunConfig, step: usize, out: &mut String) -> Result<(), Failure> {
    let tc = run.temporal_plan();
    let clips = plan_temporal_step(&tc, step).map_err(|e| Failure::Config(e.into()))?;
    let _ = writeln!(out, "step {step}: o_f={}, {} clips", tc.offset(step), clips.len());
    for c in &clips {
        let end = c.start + c.len as isize;
        let wend = c.write_start + c.write_len as isize;
        let _ = writeln!(out, "  read frames {}..{end}, write {}..{wend}", c.start, c.write_start);
    }
    Ok(())
}

/// Plan, diagrams and coverage reports for one resolution stage.
fn audit_stage(
    run: &RunConfig,
    label: &str,
    (width, height, win_w, win_h): (usize, usize, usize, usize),
    draw: usize,
    out: &mut String,
) -> Result<Vec<CoverageReport>, Failure> {
    let metric = |e: panoshift::metrics::MetricError| Failure::Config(anyhow!("{label}: {e}"));
    let _ = writeln!(out, "== {label}: {width}x{height}, window {win_w}x{win_h}, {} steps", run.steps);
    let mut reports = Vec::new();
    match run.mode {
        Mode::PerspectivePano => {
            let sc = run.spatial_plan(width, height, win_w, win_h);
            let offsets: Vec<String> = (0..run.steps).map(|s| sc.offset(s).0.to_string()).collect();
            let _ = writeln!(out, "column offsets: {}", offsets.join(","));
            for step in 0..draw.min(run.steps) {
                spatial_diagram(&sc, step, out)?;
            }
            reports.push(audit_spatial(&sc).map_err(metric)?);
        }
        Mode::Erp360 => {
            let grid = run.viewport_grid(win_w, win_h);
            for step in 0..draw.min(run.steps) {
                viewport_diagram(&grid, step, out)?;
            }
            reports.push(audit_viewports(&grid, width, height, run.steps).map_err(metric)?);
        }
    }
    Ok(reports)
}

pub fn audit_plan(run: &RunConfig, draw: Option<usize>) -> Result<(), Failure> {
    run.validate()?;
    let draw = draw.unwrap_or(run.steps);
    let mut out = String::new();
    let mut reports = Vec::new();
    if run.gmg.enabled {
        let s = run.gmg.scale;
        let (lw, lh) = (run.width / s, run.height / s);
        let win = match run.mode {
            Mode::PerspectivePano => (run.window.width.min(lw), run.window.height.min(lh)),
            Mode::Erp360 => ((run.window.width / s).max(1), (run.window.height / s).max(1)),
        };
        reports.extend(audit_stage(run, "low-resolution stage", (lw, lh, win.0, win.1), draw, &mut out)?);
    }
    let full = (run.width, run.height, run.window.width, run.window.height);
    reports.extend(audit_stage(run, "full-resolution stage", full, draw, &mut out)?);

    let tc = run.temporal_plan();
    let _ = writeln!(
        out,
        "== temporal: {} frames, clip {}, shift {}, loopable {}",
        tc.frames, tc.window_frames, tc.shift, tc.loopable
    );
    for step in 0..draw.min(run.steps) {
        temporal_listing(run, step, &mut out)?;
    }
    reports.push(audit_temporal(&tc, run.steps).map_err(|e| Failure::Config(e.into()))?);

    out.push_str("== coverage\n");
    let mut total = 0;
    for r in &reports {
        out.push_str(&r.to_text());
        total += r.violation_count;
    }
    let _ = writeln!(out, "total: {total} violations");
    print!("{out}");
    if total > 0 {
        return Err(Failure::Pipeline(anyhow!("plan audit found {total} violations")));
    }
    Ok(())
}
