use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use panoshift::pipeline::{Mode, RunConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Contents of a config file. Every table rejects unknown keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub run: RunConfig,
    pub denoiser: DenoiserConfig,
    pub output: OutputConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        let mut run = RunConfig::default();
        // The front end runs the two-stage pipeline unless told otherwise.
        run.gmg.enabled = true;
        Self {
            run,
            denoiser: DenoiserConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    /// Closed-form single step towards the analytic test scene.
    Dirac,
    /// Dirac step followed by a box blur of the prediction.
    Smoothing,
    /// Returns its input.
    Echo,
    /// External process speaking the plugin protocol.
    Plugin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    /// Plugin command line, split on whitespace.
    pub command: Option<String>,
    /// Plugin processes to start; defaults to the worker count.
    pub instances: Option<usize>,
    pub timeout_secs: f64,
    /// Blur radius of the smoothing mock.
    pub radius: usize,
    /// Text prompt forwarded to the denoiser.
    pub prompt: String,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::Dirac,
            command: None,
            instances: None,
            timeout_secs: 60.0,
            radius: 2,
            prompt: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub png: bool,
    /// Also dump the low-resolution guide of a two-stage run.
    pub guide: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("panoshift-out"),
            png: true,
            guide: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(alias = "perspective_pano")]
    Perspective,
    #[value(alias = "erp")]
    Erp360,
}

/// Flags shared by the subcommands that build a run.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML config file; flags override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Latent size as WxH or WxHxF.
    #[arg(long, value_name = "WxH[xF]")]
    pub size: Option<String>,
    /// Window size as WxH or WxHxF.
    #[arg(long, value_name = "WxH[xF]")]
    pub window: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Treat frames as a ring so the clip loops.
    #[arg(long)]
    pub loopable: bool,
    #[arg(long, conflicts_with = "no_gmg")]
    pub gmg: bool,
    #[arg(long)]
    pub no_gmg: bool,
    #[arg(long, value_name = "COLUMNS")]
    pub shift_x: Option<usize>,
    #[arg(long, value_name = "ROWS")]
    pub shift_y: Option<usize>,
    #[arg(long, value_name = "FRAMES")]
    pub shift_frames: Option<usize>,
    /// Parallel denoiser calls.
    #[arg(long, env = "PANOSHIFT_WORKERS")]
    pub workers: Option<usize>,
}

fn parse_dims(s: &str, what: &str) -> anyhow::Result<(usize, usize, Option<usize>)> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("invalid {what} {s:?}, expected WxH or WxHxF"))?;
    match nums[..] {
        [w, h] => Ok((w, h, None)),
        [w, h, f] => Ok((w, h, Some(f))),
        _ => bail!("invalid {what} {s:?}, expected WxH or WxHxF"),
    }
}

pub fn load(path: &Path) -> Result<CliConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::Config)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Config)
}

impl Overrides {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn resolve(&self) -> Result<CliConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => load(p)?,
            None => CliConfig::default(),
        };
        self.apply(&mut cfg.run).map_err(Failure::Config)?;
        Ok(cfg)
    }

    fn apply(&self, run: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(s) = &self.size {
            let (w, h, f) = parse_dims(s, "size")?;
            run.width = w;
            run.height = h;
            if let Some(f) = f {
                run.frames = f;
                // A shorter clip than the window would be rejected outright.
                run.window.frames = run.window.frames.min(f);
            }
        }
        if let Some(s) = &self.window {
            let (w, h, f) = parse_dims(s, "window")?;
            run.window.width = w;
            run.window.height = h;
            if let Some(f) = f {
                run.window.frames = f;
            }
        }
        if let Some(m) = self.mode {
            run.mode = match m {
                ModeArg::Perspective => Mode::PerspectivePano,
                ModeArg::Erp360 => Mode::Erp360,
            };
        }
        if let Some(v) = self.seed {
            run.seed = v;
        }
        if let Some(v) = self.steps {
            run.steps = v;
        }
        if let Some(v) = self.channels {
            run.channels = v;
        }
        if self.loopable {
            run.loopable = true;
        }
        if self.gmg {
            run.gmg.enabled = true;
        }
        if self.no_gmg {
            run.gmg.enabled = false;
        }
        if self.shift_x.is_some() {
            run.shift.x = self.shift_x;
        }
        if self.shift_y.is_some() {
            run.shift.y = self.shift_y;
        }
        if self.shift_frames.is_some() {
            run.shift.frames = self.shift_frames;
        }
        if let Some(v) = self.workers {
            run.workers = v;
        }
        Ok(())
    }
}
