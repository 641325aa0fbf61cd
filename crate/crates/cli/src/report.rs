use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use panoshift::dump::read_pwlt;
use panoshift::metrics::{temporal_flicker_metric, wrap_seam_metric, FlickerReport, SeamReport};
use panoshift::Latent;
use serde::Serialize;

use crate::Failure;

#[derive(Clone, Debug, Serialize)]
pub struct MetricsSummary {
    pub shape: [usize; 4],
    pub h_ring: bool,
    pub t_ring: bool,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Wrap seam against interior column pairs; only for column rings.
    pub seam: Option<SeamReport>,
    /// Frame-to-frame differences; only for two or more frames.
    pub flicker: Option<FlickerReport>,
}

pub fn summarize(latent: &Latent) -> MetricsSummary {
    let s = latent.shape();
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in latent.data() {
        let v = v as f64;
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    MetricsSummary {
        shape: [s.frames, s.channels, s.height, s.width],
        h_ring: latent.h_ring(),
        t_ring: latent.t_ring(),
        min,
        max,
        mean: sum / latent.data().len().max(1) as f64,
        seam: latent.h_ring().then(|| wrap_seam_metric(latent).ok()).flatten(),
        flicker: temporal_flicker_metric(latent, None).ok(),
    }
}

impl MetricsSummary {
    pub fn to_text(&self) -> String {
        let [f, c, h, w] = self.shape;
        let mut s = format!(
            "latent {w}x{h}, {f} frames, {c} channels (h_ring {}, t_ring {})\n",
            self.h_ring, self.t_ring
        );
        s.push_str(&format!("range [{:.6}, {:.6}], mean {:.6}\n", self.min, self.max, self.mean));
        match &self.seam {
            Some(r) => s.push_str(&format!(
                "seam: boundary {:.6}, interior {:.6}, ratio {:.4}\n",
                r.boundary, r.baseline, r.ratio
            )),
            None => s.push_str("seam: n/a\n"),
        }
        match &self.flicker {
            Some(r) => {
                s.push_str(&format!("flicker: median transition {:.6}", r.median_interior));
                if let (Some(l), Some(q)) = (r.loop_transition, r.loop_ratio) {
                    s.push_str(&format!(", loop transition {l:.6}, loop ratio {q:.4}"));
                }
                s.push('\n');
            }
            None => s.push_str("flicker: n/a\n"),
        }
        s
    }
}

pub fn metrics(path: &Path, json: bool) -> Result<(), Failure> {
    let latent: Latent = File::open(path)
        .map_err(anyhow::Error::from)
        .and_then(|f| Ok(read_pwlt(&mut BufReader::new(f))?))
        .with_context(|| format!("cannot read dump {}", path.display()))
        .map_err(Failure::Config)?;
    let summary = summarize(&latent);
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        print!("{}", summary.to_text());
    }
    Ok(())
}
