//! Reference plugin for protocol tests, speaking the wire protocol on
//! stdin/stdout.
//!
//! Behaviours: `echo` returns the request tile, `oracle` runs the dirac
//! oracle on the analytic test scene, `short` drops the last value, `nan`
//! poisons one value, `malformed` answers with a broken JSON frame.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use panoshift::denoise::{AnalyticTarget, WindowGeometry};
use panoshift::plugin::{
    dirac_handler, echo_handler, serve, write_frame, Capabilities, FrameReader, Hello, PluginError, Reply,
    RequestHeader, ServeRequest, PROTO_VERSION,
};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Behaviour {
    Echo,
    Oracle,
    Short,
    Nan,
    Malformed,
}

#[derive(Parser, Debug)]
#[command(name = "panoshift-fixture-plugin", about = "Test plugin for the panoshift wire protocol")]
struct Args {
    #[arg(value_enum, default_value = "echo")]
    behaviour: Behaviour,
    #[arg(long, default_value_t = 4096)]
    max_width: usize,
    #[arg(long, default_value_t = 4096)]
    max_height: usize,
    #[arg(long, default_value_t = 1024)]
    max_frames: usize,
}

fn panorama_frames(g: &WindowGeometry) -> usize {
    match *g {
        WindowGeometry::Plane { frames, .. } | WindowGeometry::Viewport { frames, .. } => frames,
    }
}

fn handle(behaviour: Behaviour, req: &ServeRequest) -> Reply {
    match behaviour {
        Behaviour::Oracle => dirac_handler(req, &AnalyticTarget::new(panorama_frames(&req.header.geometry))),
        Behaviour::Short => {
            let v = req.tile.data();
            Reply::Tensor(v[..v.len().saturating_sub(1)].to_vec())
        }
        Behaviour::Nan => {
            let mut v = req.tile.data().to_vec();
            let mid = v.len() / 2;
            if let Some(x) = v.get_mut(mid) {
                *x = f32::NAN;
            }
            Reply::Tensor(v)
        }
        _ => echo_handler(req),
    }
}

/// Correct handshake, then a broken header frame for the first request.
fn malformed(caps: &Capabilities) -> Result<(), PluginError> {
    let mut frames = FrameReader::new(BufReader::new(io::stdin().lock()));
    let mut out = BufWriter::new(io::stdout().lock());
    let io_err = |e: io::Error| PluginError::Io(e.to_string());
    let Some(hello) = frames.read_frame()? else {
        return Ok(());
    };
    let _: Hello = serde_json::from_slice(&hello.payload).map_err(|e| PluginError::Handshake(e.to_string()))?;
    write_frame(&mut out, &serde_json::to_vec(caps).expect("caps serialize"))?;
    out.flush().map_err(io_err)?;
    let Some(header) = frames.read_frame()? else {
        return Ok(());
    };
    let header: RequestHeader =
        serde_json::from_slice(&header.payload).map_err(|e| PluginError::Io(e.to_string()))?;
    frames.read_frame()?;
    if header.image_shape.is_some() {
        frames.read_frame()?;
    }
    write_frame(&mut out, b"{\"status\": \"ok\", \"shape\": [1,")?;
    out.flush().map_err(io_err)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let caps = Capabilities {
        proto: PROTO_VERSION,
        name: format!("fixture-{:?}", args.behaviour).to_lowercase(),
        max_window: [args.max_width, args.max_height],
        max_frames: args.max_frames,
        conditioning: vec!["text".into(), "image".into()],
    };
    let result = match args.behaviour {
        Behaviour::Malformed => malformed(&caps),
        b => serve(
            BufReader::new(io::stdin().lock()),
            BufWriter::new(io::stdout().lock()),
            &caps,
            |req| handle(b, req),
        )
        .map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fixture plugin: {e}");
            ExitCode::FAILURE
        }
    }
}
