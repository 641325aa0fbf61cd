use serde::Serialize;

use super::host::PluginChannel;
use super::message::{encode_text, from_shape, RequestHeader, DTYPE};
use super::PluginError;
use crate::denoise::WindowGeometry;
use crate::latent::{Shape, TileRegion};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub plugin: String,
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("{mark} {}: {}\n", c.name, c.detail));
        }
        s.push_str(if self.passed() { "conformance: pass\n" } else { "conformance: fail\n" });
        s
    }

    fn push(&mut self, name: &str, r: Result<String, PluginError>) -> bool {
        let (passed, detail) = match r {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push(ConformanceCheck {
            name: name.into(),
            passed,
            detail,
        });
        passed
    }
}

/// Handshake plus three denoise exchanges; the third repeats the first and
/// must reproduce its reply bit for bit.
pub fn run_conformance(connect: impl FnOnce() -> Result<PluginChannel, PluginError>) -> ConformanceReport {
    let mut report = ConformanceReport {
        plugin: String::new(),
        checks: Vec::new(),
    };
    let mut ch = match connect() {
        Ok(ch) => ch,
        Err(e) => {
            report.push("handshake", Err(e));
            return report;
        }
    };
    let caps = ch.capabilities().clone();
    report.plugin = caps.name.clone();
    report.push(
        "handshake",
        Ok(format!(
            "max window {}x{}, {} frames",
            caps.max_window[0], caps.max_window[1], caps.max_frames
        )),
    );
    let shape = Shape::new(
        caps.max_frames.clamp(1, 2),
        4,
        caps.max_window[1].clamp(1, 8),
        caps.max_window[0].clamp(1, 8),
    );
    let requests = [(0usize, 50usize, 11u64), (1, 49, 12), (0, 50, 11)];
    let mut replies = Vec::new();
    for (k, &(step, t, seed)) in requests.iter().enumerate() {
        let (header, tile) = request(shape, step, t, seed);
        let r = ch.exchange(&header, &tile, None);
        let name = format!("exchange {}", k + 1);
        let ok = report.push(
            &name,
            r.as_ref()
                .map(|v| {
                    let echo = v.iter().zip(&tile).all(|(a, b)| a.to_bits() == b.to_bits());
                    format!("{} values{}", v.len(), if echo { " (echo)" } else { "" })
                })
                .map_err(Clone::clone),
        );
        if !ok {
            return report;
        }
        replies.push(r.expect("checked"));
    }
    let same = replies[0].iter().zip(&replies[2]).all(|(a, b)| a.to_bits() == b.to_bits());
    report.push(
        "determinism",
        if same {
            Ok("repeated request reproduced bit-exactly".into())
        } else {
            Err(PluginError::Remote("repeated request produced a different reply".into()))
        },
    );
    report
}

fn request(shape: Shape, step: usize, t: usize, seed: u64) -> (RequestHeader, Vec<f32>) {
    let mut tile = vec![0f32; shape.len()];
    SeededRng::new(seed).fill_normal(&mut tile);
    let alpha_bar_t = 0.1 + 0.01 * (50 - t) as f64;
    let header = RequestHeader {
        op: "denoise".into(),
        step,
        t,
        alpha_bar_t,
        alpha_bar_prev: alpha_bar_t + 0.01,
        geometry: WindowGeometry::Plane {
            region: TileRegion::new((0, shape.frames), (0, shape.height), (0, shape.width)),
            frames: shape.frames,
            height: shape.height,
            width: shape.width,
        },
        dtype: DTYPE.into(),
        shape: from_shape(shape),
        text: encode_text(b"conformance"),
        image_shape: None,
    };
    (header, tile)
}
