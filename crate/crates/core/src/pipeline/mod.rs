//! Full runs: spatial and temporal offset shifting, viewport denoising of
//! 360° panoramas, and two-stage motion guidance.
//!
//! Memory: the only panorama-sized buffers are the working latent, a second
//! latent for double-buffered exclusive steps, a value+weight accumulator for
//! blended steps and a per-texel mask in ERP mode. Denoisers only ever see one
//! window at a time, and at most `workers` windows are in flight.

mod config;
mod interp;

use std::collections::HashMap;
use std::mem::size_of;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::denoise::{validate_response, DenoiseError, DenoiseRequest, Denoiser, WindowGeometry};
use crate::latent::{axis_map, BlendAccumulator, LatentError, PanoLatent, Shape, Tile};
use crate::planner::{
    plan_spatial_step, plan_temporal_step, plan_viewport_step, AxisWindow, PlanError, PlanMode, PlannedWindow,
};
use crate::projection::{
    project_with, reproject_overwrite_in, reproject_viewport_to_erp, viewport_taps, DenoisedMask, ErpGrid,
    ProjectionError, Taps, ViewportSpec,
};
use crate::rng::{tag, SeededRng};
use crate::scalar::Scalar;
use crate::schedule::{renoise, NoiseSchedule};

pub use config::{ErpConfig, GmgConfig, Mode, RunConfig, ScheduleConfig, ScheduleKind, ShiftConfig, WindowConfig};
pub use interp::{box_downsample, upsample, Interpolation};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("step {step}: {source}")]
    Plan { step: usize, source: PlanError },
    #[error("step {step}: {source}")]
    Latent { step: usize, source: LatentError },
    #[error("step {step}: {source}")]
    Projection { step: usize, source: ProjectionError },
    #[error("step {step}, window {window} ({geometry}): {source}")]
    Denoise {
        step: usize,
        window: usize,
        geometry: String,
        source: DenoiseError,
    },
    #[error("step {step}: sphere coverage hole at frame {frame}, row {row}, column {col}")]
    Coverage {
        step: usize,
        frame: usize,
        row: usize,
        col: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// A single-stage run.
    Main,
    /// Motion-guidance stage 1.
    LowRes,
    /// Motion-guidance stage 2.
    HighRes,
}

/// Passed to the step observer after every step.
pub struct StepEvent<'a, S> {
    pub stage: StageKind,
    /// Execution ordinal.
    pub step: usize,
    /// Noise level of `latent` after the step.
    pub level: usize,
    /// ERP overwrite steps report `Exclusive`.
    pub mode: PlanMode,
    pub latent: &'a PanoLatent<S>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub steps: usize,
    pub blended_steps: usize,
    pub exclusive_steps: usize,
    pub denoiser_calls: u64,
    /// Largest tile handed to the denoiser, in elements and bytes.
    pub peak_window_elements: usize,
    pub peak_window_bytes: usize,
    pub panorama_elements: usize,
    /// Panorama-sized working buffers at their largest.
    pub resident_buffer_bytes: usize,
    pub elapsed_ms: f64,
    pub warnings: Vec<String>,
}

pub struct RunOutput<S> {
    pub latent: PanoLatent<S>,
    /// Upsampled stage-1 result of a motion-guided run, before renoising.
    pub guide: Option<PanoLatent<S>>,
    pub stats: RunStats,
}

type Observer<'a, S> = Box<dyn FnMut(&StepEvent<'_, S>) + Send + 'a>;

/// Resolution-specific parameters of one stage.
#[derive(Clone, Copy, Debug)]
struct Stage {
    kind: StageKind,
    /// RNG key prefix.
    key: u64,
    width: usize,
    height: usize,
    win_w: usize,
    win_h: usize,
}

#[derive(Default)]
struct Buffers<S> {
    next: Option<PanoLatent<S>>,
    acc: Option<BlendAccumulator<S>>,
    mask: Option<DenoisedMask>,
}

impl<S: Scalar> Buffers<S> {
    fn bytes(&self) -> usize {
        let n = self.next.as_ref().map_or(0, |l| std::mem::size_of_val(l.data()));
        let a = self.acc.as_ref().map_or(0, |a| {
            let s = a.shape();
            (s.len() + s.frames * s.plane()) * size_of::<S>()
        });
        let m = self.mask.as_ref().map_or(0, |m| {
            let (f, h, w) = m.dims();
            f * h * w
        });
        n + a + m
    }
}

/// One window of work within a step.
struct Job {
    geometry: WindowGeometry,
    source: JobSource,
}

enum JobSource {
    Region(PlannedWindow),
    Viewport { vp: ViewportSpec, clip: AxisWindow },
}

pub struct Pipeline<'a, S: Scalar> {
    cfg: RunConfig,
    schedule: NoiseSchedule,
    denoiser: &'a dyn Denoiser<S>,
    pool: Option<rayon::ThreadPool>,
    root: SeededRng,
    text: Vec<u8>,
    image: Option<PanoLatent<S>>,
    stage_image: Option<PanoLatent<S>>,
    // behind a mutex only so `&Pipeline` is Sync; runs take it out first
    observer: Mutex<Option<Observer<'a, S>>>,
}

impl<'a, S: Scalar> Pipeline<'a, S> {
    pub fn new(cfg: RunConfig, denoiser: &'a dyn Denoiser<S>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let schedule = cfg.build_schedule()?;
        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            root: SeededRng::new(cfg.seed),
            cfg,
            schedule,
            denoiser,
            pool,
            text: Vec::new(),
            image: None,
            stage_image: None,
            observer: Mutex::new(None),
        })
    }

    /// Opaque text conditioning forwarded with every request.
    pub fn with_text(mut self, text: impl Into<Vec<u8>>) -> Self {
        self.text = text.into();
        self
    }

    /// Conditioning image at output resolution (one frame or one per frame);
    /// each request receives its window's cut of it.
    pub fn with_image(mut self, image: PanoLatent<S>) -> Result<Self, PipelineError> {
        let s = image.shape();
        if s.width != self.cfg.width || s.height != self.cfg.height || (s.frames != 1 && s.frames != self.cfg.frames) {
            return Err(PipelineError::Config(format!(
                "conditioning image {s} does not match panorama {}x{} with 1 or {} frames",
                self.cfg.width, self.cfg.height, self.cfg.frames
            )));
        }
        let mut image = image;
        image.set_topology(self.cfg.effective_h_ring(), false);
        self.image = Some(image);
        Ok(self)
    }

    pub fn with_observer(mut self, observer: impl FnMut(&StepEvent<'_, S>) + Send + 'a) -> Self {
        self.observer = Mutex::new(Some(Box::new(observer)));
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.cfg.frames, self.cfg.channels, self.cfg.height, self.cfg.width)
    }

    /// Runs the configured mode, with motion guidance when enabled.
    pub fn run(&mut self) -> Result<RunOutput<S>, PipelineError> {
        let start = Instant::now();
        let mut obs = self.observer.get_mut().unwrap_or_else(|e| e.into_inner()).take();
        let mut stats = RunStats {
            panorama_elements: self.shape().len(),
            warnings: self.warnings(),
            ..RunStats::default()
        };
        let (latent, guide) = if self.cfg.gmg.enabled {
            let (l, g) = self.gmg(&mut obs, &mut stats)?;
            (l, Some(g))
        } else {
            let stage = self.main_stage(StageKind::Main);
            let init = self.initial_noise(self.shape(), &[tag::INITIAL_NOISE]);
            self.stage_image = self.image.clone();
            (self.run_stage(&stage, init, self.schedule.steps(), &mut obs, &mut stats)?, None)
        };
        self.observer = Mutex::new(obs);
        stats.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(RunOutput { latent, guide, stats })
    }

    fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.cfg.mode == Mode::PerspectivePano {
            let sc = self.cfg.spatial_plan(self.cfg.width, self.cfg.height, self.cfg.window.width, self.cfg.window.height);
            if sc.degenerate_shift() {
                w.push(format!(
                    "degenerate shift: ({}, {}) is a multiple of the {}x{} window, boundaries never move",
                    sc.shift_x, sc.shift_y, sc.window_width, sc.window_height
                ));
            }
        }
        let tc = self.cfg.temporal_plan();
        if tc.frames > tc.window_frames && tc.shift.is_multiple_of(tc.window_frames) {
            w.push(format!(
                "degenerate frame shift: {} is a multiple of the {}-frame clip",
                tc.shift, tc.window_frames
            ));
        }
        w
    }

    fn main_stage(&self, kind: StageKind) -> Stage {
        Stage {
            kind,
            key: 0,
            width: self.cfg.width,
            height: self.cfg.height,
            win_w: self.cfg.window.width,
            win_h: self.cfg.window.height,
        }
    }

    fn initial_noise(&self, shape: Shape, key: &[u64]) -> PanoLatent<S> {
        let mut l = PanoLatent::zeros(shape, self.cfg.effective_h_ring(), self.cfg.t_ring());
        self.root.fork(key).fill_normal(l.data_mut());
        l
    }

    fn gmg(
        &mut self,
        obs: &mut Option<Observer<'a, S>>,
        stats: &mut RunStats,
    ) -> Result<(PanoLatent<S>, PanoLatent<S>), PipelineError> {
        let s = self.cfg.gmg.scale;
        let (lw, lh) = (self.cfg.width / s, self.cfg.height / s);
        let (ww, wh) = match self.cfg.mode {
            Mode::PerspectivePano => (self.cfg.window.width.min(lw), self.cfg.window.height.min(lh)),
            Mode::Erp360 => ((self.cfg.window.width / s).max(1), (self.cfg.window.height / s).max(1)),
        };
        let low = Stage {
            kind: StageKind::LowRes,
            key: tag::STAGE_LOW_RES,
            width: lw,
            height: lh,
            win_w: ww,
            win_h: wh,
        };
        if self.cfg.mode == Mode::PerspectivePano {
            self.cfg
                .spatial_plan(lw, lh, ww, wh)
                .validate()
                .map_err(|e| PipelineError::Config(format!("low-resolution stage: {e}")))?;
        }
        let low_shape = Shape::new(self.cfg.frames, self.cfg.channels, lh, lw);
        let init = self.initial_noise(low_shape, &[tag::STAGE_LOW_RES, tag::INITIAL_NOISE]);
        self.stage_image = self.image.as_ref().map(|i| box_downsample(i, s));
        let steps = self.schedule.steps();
        let low_out = self.run_stage(&low, init, steps, obs, stats)?;

        let guide = upsample(&low_out, s, self.cfg.gmg.interpolation);
        drop(low_out);
        let t_r = self.cfg.renoise_step();
        let init = if t_r == steps {
            // fully renoised: identical to a plain run
            self.initial_noise(self.shape(), &[tag::INITIAL_NOISE])
        } else {
            let mut rng = self.root.fork(&[tag::GMG_RENOISE]);
            let data = renoise(guide.data(), &self.schedule, t_r, &mut rng)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            PanoLatent::from_vec(guide.shape(), guide.h_ring(), guide.t_ring(), data).expect("same shape")
        };
        self.stage_image = self.image.clone();
        let high = self.main_stage(StageKind::HighRes);
        let out = self.run_stage(&high, init, t_r, obs, stats)?;
        Ok((out, guide))
    }

    fn run_stage(
        &self,
        stage: &Stage,
        mut current: PanoLatent<S>,
        t_start: usize,
        obs: &mut Option<Observer<'a, S>>,
        stats: &mut RunStats,
    ) -> Result<PanoLatent<S>, PipelineError> {
        let steps = self.schedule.steps();
        let mut bufs = Buffers::default();
        for t in (1..=t_start).rev() {
            let step = steps - t;
            let mode = match self.cfg.mode {
                Mode::PerspectivePano => self.plane_step(stage, step, t, &mut current, &mut bufs, stats)?,
                Mode::Erp360 => self.erp_step(stage, step, t, &mut current, &mut bufs, stats)?,
            };
            stats.steps += 1;
            match mode {
                PlanMode::Blended => stats.blended_steps += 1,
                PlanMode::Exclusive => stats.exclusive_steps += 1,
            }
            if let Some(obs) = obs.as_mut() {
                obs(&StepEvent {
                    stage: stage.kind,
                    step,
                    level: t - 1,
                    mode,
                    latent: &current,
                });
            }
        }
        let resident = bufs.bytes() + std::mem::size_of_val(current.data());
        stats.resident_buffer_bytes = stats.resident_buffer_bytes.max(resident);
        Ok(current)
    }

    fn plane_step(
        &self,
        stage: &Stage,
        step: usize,
        t: usize,
        current: &mut PanoLatent<S>,
        bufs: &mut Buffers<S>,
        stats: &mut RunStats,
    ) -> Result<PlanMode, PipelineError> {
        let plan_err = |source| PipelineError::Plan { step, source };
        let latent_err = |source| PipelineError::Latent { step, source };
        let sc = self.cfg.spatial_plan(stage.width, stage.height, stage.win_w, stage.win_h);
        let plan = plan_spatial_step(&sc, step).map_err(plan_err)?;
        let clips = plan_temporal_step(&self.cfg.temporal_plan(), step).map_err(plan_err)?;
        let shape = current.shape();
        let jobs: Vec<Job> = clips
            .iter()
            .flat_map(|clip| plan.with_clip(clip).windows)
            .map(|w| Job {
                geometry: WindowGeometry::Plane {
                    region: w.read,
                    frames: shape.frames,
                    height: shape.height,
                    width: shape.width,
                },
                source: JobSource::Region(w),
            })
            .collect();
        match plan.mode {
            PlanMode::Exclusive => {
                let next = bufs
                    .next
                    .get_or_insert_with(|| PanoLatent::zeros(shape, current.h_ring(), current.t_ring()));
                self.denoise_jobs(step, t, &jobs, current, stats, |job, tile| {
                    let JobSource::Region(w) = &job.source else { unreachable!() };
                    next.insert_subtile(&w.read, &tile, &w.write).map_err(latent_err)
                })?;
                std::mem::swap(current, next);
            }
            PlanMode::Blended => {
                let acc = bufs.acc.get_or_insert_with(|| BlendAccumulator::for_latent(current));
                acc.reset();
                self.denoise_jobs(step, t, &jobs, current, stats, |job, tile| {
                    let JobSource::Region(w) = &job.source else { unreachable!() };
                    if w.read == w.write {
                        acc.add(&w.write, &tile)
                    } else {
                        tile.subtile(&w.read, &w.write).and_then(|sub| acc.add(&w.write, &sub))
                    }
                    .map_err(latent_err)
                })?;
                acc.finalize_full(current).map_err(latent_err)?;
            }
        }
        Ok(plan.mode)
    }

    fn erp_step(
        &self,
        stage: &Stage,
        step: usize,
        t: usize,
        current: &mut PanoLatent<S>,
        bufs: &mut Buffers<S>,
        stats: &mut RunStats,
    ) -> Result<PlanMode, PipelineError> {
        let plan_err = |source| PipelineError::Plan { step, source };
        let proj_err = |source| PipelineError::Projection { step, source };
        let grid = self.cfg.viewport_grid(stage.win_w, stage.win_h);
        let viewports = plan_viewport_step(&grid, step).map_err(plan_err)?;
        let clips = plan_temporal_step(&self.cfg.temporal_plan(), step).map_err(plan_err)?;
        let erp = ErpGrid::for_latent(current).map_err(proj_err)?;
        let shape = current.shape();
        let mask = bufs.mask.get_or_insert_with(|| DenoisedMask::for_latent(current));
        mask.reset();
        let jobs: Vec<Job> = clips
            .iter()
            .flat_map(|&clip| {
                viewports.iter().map(move |&vp| Job {
                    geometry: WindowGeometry::Viewport {
                        viewport: vp,
                        frame_start: clip.start,
                        frame_len: clip.len,
                        frames: shape.frames,
                    },
                    source: JobSource::Viewport { vp, clip },
                })
            })
            .collect();

        if self.cfg.erp.blend {
            let acc = bufs.acc.get_or_insert_with(|| BlendAccumulator::for_latent(current));
            acc.reset();
            self.denoise_jobs(step, t, &jobs, current, stats, |job, tile| {
                let JobSource::Viewport { vp, clip } = &job.source else { unreachable!() };
                reproject_viewport_to_erp(&tile, vp, clip, acc, mask).map_err(proj_err)?;
                Ok(())
            })?;
            if let Some((frame, row, col)) = mask.first_unset() {
                return Err(PipelineError::Coverage { step, frame, row, col });
            }
            acc.finalize_full(current)
                .map_err(|source| PipelineError::Latent { step, source })?;
            return Ok(PlanMode::Blended);
        }

        // Overwrite mode: viewports run in order against the live latent.
        // Texels an earlier viewport already advanced to level t-1 are
        // renoised back to level t in the view the next viewport reads.
        let retention = self
            .schedule
            .step_retention(t)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let n_vp = viewports.len();
        for (i, job) in jobs.iter().enumerate() {
            let JobSource::Viewport { vp, clip } = &job.source else { unreachable!() };
            let taps = viewport_taps(&erp, vp);
            let frames = axis_map(clip.start, clip.len, shape.frames);
            let rng = self
                .root
                .fork(&[tag::REBALANCE, stage.key, step as u64, (i / n_vp) as u64, (i % n_vp) as u64]);
            let tile = rebalanced_view(&taps, &frames, vp, current, mask, retention, rng);
            let out = self.denoise_one(step, t, i, job, &tile, stats)?;
            reproject_overwrite_in(&out, vp, clip, current, mask, self.pool.as_ref()).map_err(proj_err)?;
        }
        if let Some((frame, row, col)) = mask.first_unset() {
            return Err(PipelineError::Coverage { step, frame, row, col });
        }
        Ok(PlanMode::Exclusive)
    }

    fn input_tile(&self, job: &Job, src: &PanoLatent<S>, step: usize) -> Result<Tile<S>, PipelineError> {
        match &job.source {
            JobSource::Region(w) => src
                .extract_tile(&w.read)
                .map_err(|source| PipelineError::Latent { step, source }),
            JobSource::Viewport { vp, clip } => crate::projection::project_erp_to_viewport(src, clip.start, clip.len, vp)
                .map_err(|source| PipelineError::Projection { step, source }),
        }
    }

    /// The job's cut of the conditioning image.
    fn image_tile(&self, job: &Job) -> Option<Tile<S>> {
        let img = self.stage_image.as_ref()?;
        let per_frame = img.shape().frames > 1;
        match &job.source {
            JobSource::Region(w) => {
                let mut r = w.read;
                if !per_frame {
                    r.frame_start = 0;
                    r.frame_len = 1;
                }
                img.extract_tile(&r).ok()
            }
            JobSource::Viewport { vp, clip } => {
                let (s, l) = if per_frame { (clip.start, clip.len) } else { (0, 1) };
                crate::projection::project_erp_to_viewport(img, s, l, vp).ok()
            }
        }
    }

    fn denoise_one(
        &self,
        step: usize,
        t: usize,
        index: usize,
        job: &Job,
        tile: &Tile<S>,
        stats: &mut RunStats,
    ) -> Result<Tile<S>, PipelineError> {
        let out = self.call(step, t, index, job, tile)?;
        record(stats, tile);
        Ok(out)
    }

    fn call(&self, step: usize, t: usize, index: usize, job: &Job, tile: &Tile<S>) -> Result<Tile<S>, PipelineError> {
        let image = self.image_tile(job);
        let req = DenoiseRequest {
            step,
            t,
            alpha_bar_t: self.schedule.alpha_bars()[t],
            alpha_bar_prev: self.schedule.alpha_bars()[t - 1],
            geometry: job.geometry,
            tile,
            text: &self.text,
            image: image.as_ref(),
        };
        let wrap = |source| PipelineError::Denoise {
            step,
            window: index,
            geometry: describe(&job.geometry),
            source,
        };
        req.check().map_err(wrap)?;
        let out = self.denoiser.denoise(&req).map_err(wrap)?;
        validate_response(&req, &out).map_err(wrap)?;
        Ok(out)
    }

    /// Denoises `jobs` reading from `src`, `workers` at a time, and hands the
    /// results to `sink` in job order.
    fn denoise_jobs(
        &self,
        step: usize,
        t: usize,
        jobs: &[Job],
        src: &PanoLatent<S>,
        stats: &mut RunStats,
        mut sink: impl FnMut(&Job, Tile<S>) -> Result<(), PipelineError>,
    ) -> Result<(), PipelineError> {
        let run_one = |i: usize| -> Result<(Tile<S>, usize), PipelineError> {
            let tile = self.input_tile(&jobs[i], src, step)?;
            let out = self.call(step, t, i, &jobs[i], &tile)?;
            Ok((out, tile.data().len()))
        };
        let width = self.cfg.workers.max(1);
        for start in (0..jobs.len()).step_by(width) {
            let idx: Vec<usize> = (start..(start + width).min(jobs.len())).collect();
            let results: Vec<_> = match &self.pool {
                Some(pool) => pool.install(|| idx.par_iter().map(|&i| run_one(i)).collect()),
                None => idx.iter().map(|&i| run_one(i)).collect(),
            };
            for (i, r) in idx.into_iter().zip(results) {
                let (out, n) = r?;
                stats.denoiser_calls += 1;
                stats.peak_window_elements = stats.peak_window_elements.max(n);
                stats.peak_window_bytes = stats.peak_window_elements * size_of::<S>();
                sink(&jobs[i], out)?;
            }
        }
        Ok(())
    }
}

fn record<S: Scalar>(stats: &mut RunStats, tile: &Tile<S>) {
    stats.denoiser_calls += 1;
    stats.peak_window_elements = stats.peak_window_elements.max(tile.data().len());
    stats.peak_window_bytes = stats.peak_window_elements * size_of::<S>();
}

/// Projects `vp` from `latent`, substituting renoised values for texels
/// already marked in `mask`. Noise is drawn from `rng` in ascending
/// `(frame, texel, channel)` order.
fn rebalanced_view<S: Scalar>(
    taps: &[Taps],
    frames: &[usize],
    vp: &ViewportSpec,
    latent: &PanoLatent<S>,
    mask: &DenoisedMask,
    retention: f64,
    mut rng: SeededRng,
) -> Tile<S> {
    let shape = latent.shape();
    let data = latent.data();
    let mut keys = Vec::new();
    if retention < 1.0 {
        for &f in frames {
            for tap in taps {
                for k in 0..4 {
                    if tap.weight[k] != 0.0 && mask.get(f, tap.texel[k]) {
                        keys.push((f, tap.texel[k]));
                    }
                }
            }
        }
        keys.sort_unstable();
        keys.dedup();
    }
    let keep = retention.sqrt();
    let add = (1.0 - retention).sqrt();
    let mut slot = HashMap::with_capacity(keys.len());
    let mut values = Vec::with_capacity(keys.len() * shape.channels);
    for (i, &(f, texel)) in keys.iter().enumerate() {
        for c in 0..shape.channels {
            let v = data[shape.index(f, c, 0, 0) + texel].as_f64();
            let e: f64 = rng.normal();
            values.push(S::of(keep * v + add * e));
        }
        slot.insert((f, texel), i);
    }
    project_with(taps, frames, shape.channels, vp, |f, c, texel| match slot.get(&(f, texel)) {
        Some(&i) => values[i * shape.channels + c],
        None => data[shape.index(f, c, 0, 0) + texel],
    })
}

fn describe(g: &WindowGeometry) -> String {
    match g {
        WindowGeometry::Plane { region: r, .. } => format!(
            "frames {}+{}, rows {}+{}, cols {}+{}",
            r.frame_start, r.frame_len, r.row_start, r.row_len, r.col_start, r.col_len
        ),
        WindowGeometry::Viewport {
            viewport: v,
            frame_start,
            frame_len,
            ..
        } => format!(
            "viewport lon {:.4} lat {:.4}, frames {}+{}",
            v.lon, v.lat, frame_start, frame_len
        ),
    }
}

fn run_mode<S: Scalar>(
    cfg: &RunConfig,
    denoiser: &dyn Denoiser<S>,
    check: impl FnOnce(&RunConfig) -> Result<(), String>,
) -> Result<PanoLatent<S>, PipelineError> {
    check(cfg).map_err(PipelineError::Config)?;
    Ok(Pipeline::new(cfg.clone(), denoiser)?.run()?.latent)
}

/// Planar offset-shifting run.
pub fn run_spatial_osd<S: Scalar>(cfg: &RunConfig, denoiser: &dyn Denoiser<S>) -> Result<PanoLatent<S>, PipelineError> {
    run_mode(cfg, denoiser, |c| {
        if c.mode != Mode::PerspectivePano {
            return Err("run_spatial_osd needs mode perspective_pano".into());
        }
        if c.gmg.enabled {
            return Err("run_spatial_osd is single-stage; use run_gmg".into());
        }
        Ok(())
    })
}

/// 360° viewport run.
pub fn run_erp_osd<S: Scalar>(cfg: &RunConfig, denoiser: &dyn Denoiser<S>) -> Result<PanoLatent<S>, PipelineError> {
    run_mode(cfg, denoiser, |c| {
        if c.mode != Mode::Erp360 {
            return Err("run_erp_osd needs mode erp_360".into());
        }
        if c.gmg.enabled {
            return Err("run_erp_osd is single-stage; use run_gmg".into());
        }
        Ok(())
    })
}

/// Two-stage motion-guided run in either mode.
pub fn run_gmg<S: Scalar>(cfg: &RunConfig, denoiser: &dyn Denoiser<S>) -> Result<PanoLatent<S>, PipelineError> {
    let mut c = cfg.clone();
    c.gmg.enabled = true;
    run_mode(&c, denoiser, |_| Ok(()))
}

/// Run with frame clips; any mode.
pub fn run_temporal_osd<S: Scalar>(cfg: &RunConfig, denoiser: &dyn Denoiser<S>) -> Result<PanoLatent<S>, PipelineError> {
    run_mode(cfg, denoiser, |c| {
        if c.frames < c.window.frames {
            return Err(format!("frames {} shorter than window.frames {}", c.frames, c.window.frames));
        }
        Ok(())
    })
}
