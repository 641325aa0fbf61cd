use serde::{Deserialize, Serialize};

use crate::latent::{PanoLatent, Shape};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Keys cubic convolution, `a = -0.5`.
    Bicubic,
    Bilinear,
}

/// Integer-factor spatial upsampling. Columns wrap when the latent is a
/// horizontal ring; rows and non-ring columns clamp at the edges.
pub fn upsample<S: Scalar>(src: &PanoLatent<S>, factor: usize, kind: Interpolation) -> PanoLatent<S> {
    let s = src.shape();
    let out_shape = Shape::new(s.frames, s.channels, s.height * factor, s.width * factor);
    let col_taps = taps(s.width, factor, kind, src.h_ring());
    let row_taps = taps(s.height, factor, kind, false);
    let mut rows_buf = vec![0.0f64; s.height * out_shape.width];
    let mut out = PanoLatent::zeros(out_shape, src.h_ring(), src.t_ring());
    for f in 0..s.frames {
        for c in 0..s.channels {
            for r in 0..s.height {
                let line = &src.data()[s.index(f, c, r, 0)..s.index(f, c, r, 0) + s.width];
                for (i, tap) in col_taps.iter().enumerate() {
                    rows_buf[r * out_shape.width + i] = tap.iter().map(|&(j, w)| w * line[j].as_f64()).sum();
                }
            }
            let base = out_shape.index(f, c, 0, 0);
            let dst = &mut out.data_mut()[base..base + out_shape.plane()];
            for (i, tap) in row_taps.iter().enumerate() {
                for x in 0..out_shape.width {
                    let v: f64 = tap.iter().map(|&(j, w)| w * rows_buf[j * out_shape.width + x]).sum();
                    dst[i * out_shape.width + x] = S::of(v);
                }
            }
        }
    }
    out
}

/// Source indices and weights for each output position along one axis.
fn taps(n: usize, factor: usize, kind: Interpolation, ring: bool) -> Vec<Vec<(usize, f64)>> {
    let resolve = |k: isize| -> usize {
        if ring {
            k.rem_euclid(n as isize) as usize
        } else {
            k.clamp(0, n as isize - 1) as usize
        }
    };
    (0..n * factor)
        .map(|i| {
            let src = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = src.floor();
            let frac = src - base;
            let b = base as isize;
            match kind {
                Interpolation::Bilinear => vec![(resolve(b), 1.0 - frac), (resolve(b + 1), frac)],
                Interpolation::Bicubic => (-1..=2)
                    .map(|k| (resolve(b + k), keys(frac - k as f64)))
                    .collect(),
            }
        })
        .collect()
}

fn keys(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Mean over `factor × factor` blocks.
pub fn box_downsample<S: Scalar>(src: &PanoLatent<S>, factor: usize) -> PanoLatent<S> {
    let s = src.shape();
    let out = Shape::new(s.frames, s.channels, s.height / factor, s.width / factor);
    let norm = (factor * factor) as f64;
    PanoLatent::from_fn(out, src.h_ring(), src.t_ring(), |f, c, r, x| {
        let mut acc = 0.0;
        for dr in 0..factor {
            for dx in 0..factor {
                acc += src.at(f, c, r * factor + dr, x * factor + dx).as_f64();
            }
        }
        S::of(acc / norm)
    })
}
