//! `panoshift` command-line front end.

mod audit;
mod config;
mod generate;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use panoshift::denoise::DenoiseError;
use panoshift::plugin::{run_conformance, split_command, PluginChannel};
use panoshift::PipelineError;

use config::{DenoiserKind, Overrides};

/// How a command failed; selects the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input files (exit 2).
    Config(anyhow::Error),
    /// The run itself failed (exit 3).
    Pipeline(anyhow::Error),
    /// A plugin broke the wire protocol or could not be started (exit 4).
    Plugin(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Pipeline(_) => 3,
            Failure::Plugin(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Pipeline(e) | Failure::Plugin(e) => e,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Config(_) => Failure::Config(e.into()),
            PipelineError::Denoise {
                source: DenoiseError::Plugin(_),
                ..
            } => Failure::Plugin(e.into()),
            _ => Failure::Pipeline(e.into()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "panoshift", version, about = "Tiled panoramic video denoising with shifting windows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline and write frames, a tensor dump, metrics and a manifest.
    Generate {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Built-in denoiser.
        #[arg(long, value_enum, conflicts_with = "plugin")]
        oracle: Option<DenoiserKind>,
        /// Plugin command line; runs the plugin denoiser.
        #[arg(long)]
        plugin: Option<String>,
        /// Skip PNG export.
        #[arg(long)]
        no_png: bool,
    },
    /// Print every step's window layout and audit the plan's coverage.
    AuditPlan {
        #[command(flatten)]
        overrides: Overrides,
        /// Only draw the first N steps (the audit still covers all of them).
        #[arg(long, value_name = "N")]
        draw_steps: Option<usize>,
        /// Skip the diagrams.
        #[arg(long)]
        no_diagram: bool,
    },
    /// Seam and flicker metrics of a PWLT tensor dump.
    Metrics {
        dump: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Handshake and three denoise exchanges against a plugin.
    ProtocolEchoTest {
        #[arg(long, default_value_t = 30.0, value_name = "SECS")]
        timeout: f64,
        /// Plugin command line.
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
    },
}

fn plugin_argv(command: &[String]) -> Vec<String> {
    match command {
        [one] => split_command(one),
        _ => command.to_vec(),
    }
}

fn protocol_echo_test(command: &[String], timeout: f64) -> Result<(), Failure> {
    let argv = plugin_argv(command);
    let timeout = Duration::try_from_secs_f64(timeout)
        .map_err(|e| Failure::Config(anyhow::anyhow!("invalid timeout: {e}")))?;
    let report = run_conformance(|| PluginChannel::spawn(&argv, timeout));
    print!("{}", report.to_text());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Plugin(anyhow::anyhow!("plugin {:?} failed conformance", argv.join(" "))))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            overrides,
            out,
            oracle,
            plugin,
            no_png,
        } => {
            let mut cfg = overrides.resolve()?;
            if let Some(k) = oracle {
                cfg.denoiser.kind = k;
            }
            if let Some(p) = plugin {
                cfg.denoiser.kind = DenoiserKind::Plugin;
                cfg.denoiser.command = Some(p);
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            if no_png {
                cfg.output.png = false;
            }
            generate::generate(&cfg)
        }
        Command::AuditPlan {
            overrides,
            draw_steps,
            no_diagram,
        } => {
            let cfg = overrides.resolve()?;
            let draw = if no_diagram { Some(0) } else { draw_steps };
            audit::audit_plan(&cfg.run, draw)
        }
        Command::Metrics { dump, json } => report::metrics(&dump, json),
        Command::ProtocolEchoTest { timeout, command } => protocol_echo_test(&command, timeout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
