use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use panoshift::denoise::{AnalyticTarget, DiracOracle, EchoDenoiser, SmoothingMock, Target};
use panoshift::dump::write_pwlt;
use panoshift::plugin::{split_command, PluginDenoiser};
use panoshift::{Denoiser, Latent, Pipeline, RunStats};
use serde::{Deserialize, Serialize};

use crate::config::{CliConfig, DenoiserKind};
use crate::report::{summarize, MetricsSummary};
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

/// Linear map from latent values to 8-bit intensities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToneMap {
    pub min: f64,
    pub max: f64,
    /// Latent channels shown as R, G, B (or gray when only one).
    pub channels: Vec<usize>,
}

impl ToneMap {
    fn for_latent(latent: &Latent) -> Self {
        let c = latent.shape().channels;
        let channels: Vec<usize> = if c >= 3 { vec![0, 1, 2] } else { vec![0] };
        let s = latent.shape();
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for f in 0..s.frames {
            for &ch in &channels {
                let start = (f * s.channels + ch) * s.plane();
                for &v in &latent.data()[start..start + s.plane()] {
                    min = min.min(v as f64);
                    max = max.max(v as f64);
                }
            }
        }
        Self { min, max, channels }
    }

    fn byte(&self, v: f32) -> u8 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0;
        }
        ((v as f64 - self.min) / span * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub kind: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a CliConfig,
    seed: u64,
    denoiser: String,
    created_unix_ms: u128,
    elapsed_ms: f64,
    stats: &'a RunStats,
    tone_map: Option<ToneMap>,
    metrics: &'a MetricsSummary,
    artifacts: &'a [Artifact],
}

/// Only the part of an earlier manifest needed to clean up after it.
#[derive(Deserialize)]
struct PreviousManifest {
    artifacts: Vec<Artifact>,
}

/// Removes the files an earlier run listed, so a smaller rerun leaves no
/// stale frames behind.
fn remove_previous(dir: &Path) -> anyhow::Result<()> {
    let path = dir.join(MANIFEST);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let Ok(prev) = serde_json::from_str::<PreviousManifest>(&text) else {
        return Ok(());
    };
    for a in prev.artifacts {
        let rel = Path::new(&a.path);
        if rel.components().all(|c| matches!(c, Component::Normal(_))) {
            match fs::remove_file(dir.join(rel)) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                    return Err(e).with_context(|| format!("cannot remove stale {}", a.path))
                }
                _ => {}
            }
        }
    }
    fs::remove_file(&path).with_context(|| format!("cannot remove {}", path.display()))
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn create(&mut self, rel: &str, kind: &str, body: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> anyhow::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        body(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.into_inner().map_err(|e| anyhow!("cannot write {}: {}", path.display(), e.error()))?.sync_all()?;
        self.artifacts.push(Artifact {
            path: rel.to_owned(),
            kind: kind.to_owned(),
            bytes: fs::metadata(&path)?.len(),
        });
        Ok(())
    }
}

fn write_png(w: &mut impl Write, latent: &Latent, frame: usize, tone: &ToneMap) -> anyhow::Result<()> {
    let s = latent.shape();
    let color = if tone.channels.len() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    let mut enc = png::Encoder::new(w, s.width as u32, s.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut px = Vec::with_capacity(s.plane() * tone.channels.len());
    for r in 0..s.height {
        for x in 0..s.width {
            for &c in &tone.channels {
                px.push(tone.byte(latent.at(frame, c, r, x)));
            }
        }
    }
    let mut w = enc.write_header()?;
    w.write_image_data(&px)?;
    w.finish()?;
    Ok(())
}

fn build_denoiser(cfg: &CliConfig) -> Result<Box<dyn Denoiser<f32>>, Failure> {
    let target: Arc<dyn Target> = Arc::new(AnalyticTarget::new(cfg.run.frames));
    let d = &cfg.denoiser;
    Ok(match d.kind {
        DenoiserKind::Dirac => Box::new(DiracOracle::new(target)),
        DenoiserKind::Smoothing => Box::new(SmoothingMock::new(target, d.radius)),
        DenoiserKind::Echo => Box::new(EchoDenoiser),
        DenoiserKind::Plugin => {
            let command = d
                .command
                .as_deref()
                .filter(|c| !c.trim().is_empty())
                .ok_or_else(|| Failure::Config(anyhow!("denoiser.kind = \"plugin\" needs denoiser.command")))?;
            let timeout = Duration::try_from_secs_f64(d.timeout_secs)
                .map_err(|e| Failure::Config(anyhow!("invalid denoiser.timeout_secs: {e}")))?;
            let count = d.instances.unwrap_or(cfg.run.workers).max(1);
            let p = PluginDenoiser::spawn(&split_command(command), count, timeout)
                .with_context(|| format!("plugin {command:?}"))
                .map_err(Failure::Plugin)?;
            Box::new(p)
        }
    })
}

pub fn generate(cfg: &CliConfig) -> Result<(), Failure> {
    cfg.run.validate()?;
    let denoiser = build_denoiser(cfg)?;
    let out = Pipeline::new(cfg.run.clone(), denoiser.as_ref())?
        .with_text(cfg.denoiser.prompt.as_bytes())
        .run()?;

    let io = |e: anyhow::Error| Failure::Pipeline(e);
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(io)?;
    remove_previous(dir).map_err(io)?;
    let mut w = Writer {
        dir: dir.clone(),
        artifacts: Vec::new(),
    };

    let metrics = summarize(&out.latent);
    w.create("latent.pwlt", "pwlt", |f| Ok(write_pwlt(f, &out.latent)?)).map_err(io)?;
    if let (true, Some(guide)) = (cfg.output.guide, &out.guide) {
        w.create("guide.pwlt", "pwlt_guide", |f| Ok(write_pwlt(f, guide)?)).map_err(io)?;
    }
    let tone = cfg.output.png.then(|| ToneMap::for_latent(&out.latent));
    if let Some(tone) = &tone {
        for frame in 0..out.latent.shape().frames {
            w.create(&format!("frames/frame_{frame:04}.png"), "png", |f| {
                write_png(f, &out.latent, frame, tone)
            })
            .map_err(io)?;
        }
    }
    w.create("metrics.json", "metrics", |f| {
        serde_json::to_writer_pretty(&mut *f, &metrics)?;
        Ok(f.write_all(b"\n")?)
    })
    .map_err(io)?;

    let manifest = Manifest {
        tool: "panoshift",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed: cfg.run.seed,
        denoiser: denoiser.name().to_owned(),
        created_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
        elapsed_ms: out.stats.elapsed_ms,
        stats: &out.stats,
        tone_map: tone,
        metrics: &metrics,
        artifacts: &w.artifacts,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(io)?;

    for warning in &out.stats.warnings {
        eprintln!("warning: {warning}");
    }
    print!("{}", metrics.to_text());
    println!(
        "{} steps, {} denoiser calls, {:.0} ms; {} artifacts in {}",
        out.stats.steps,
        out.stats.denoiser_calls,
        out.stats.elapsed_ms,
        w.artifacts.len(),
        dir.display()
    );
    Ok(())
}
