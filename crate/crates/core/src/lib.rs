//! Tuning-free panoramic video denoising machinery.
//!
//! The engine tiles an oversized latent into denoiser-sized windows whose
//! boundaries move every step, projects 360° equirectangular latents into
//! perspective viewports, and can seed a full-resolution run from an
//! upsampled low-resolution one. The denoiser itself is pluggable: closed-form
//! oracles ship in [`denoise`], external models attach through [`plugin`].
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod denoise;
pub mod dump;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod plugin;
pub mod projection;
pub mod rng;
pub mod scalar;
pub mod schedule;

pub use denoise::{DenoiseError, DenoiseRequest, Denoiser, WindowGeometry};
pub use latent::{BlendAccumulator, PanoLatent, Shape, Tile, TileRegion};
pub use pipeline::{Pipeline, PipelineError, RunConfig, RunOutput, RunStats};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use schedule::NoiseSchedule;

pub type Latent = PanoLatent<f32>;
pub type Latent64 = PanoLatent<f64>;
pub type Tile32 = Tile<f32>;
pub type Tile64 = Tile<f64>;
pub type Accumulator = BlendAccumulator<f32>;
pub type Accumulator64 = BlendAccumulator<f64>;
