//! Length-prefixed plugin protocol for out-of-process denoisers.
//!
//! Every message is a frame: a `u32` little-endian payload length followed by
//! the payload. Text frames carry JSON, tensor frames carry raw little-endian
//! `f32` values in canonical element order.
//!
//! ```text
//! host   -> plugin  {"proto":1}
//! plugin -> host    {"proto":1,"name":..,"max_window":[w,h],"max_frames":f,"conditioning":[..]}
//! then per window:
//! host   -> plugin  {"op":"denoise","step":..,"t":..,"alpha_bar_t":..,"alpha_bar_prev":..,
//!                    "geometry":{..},"dtype":"f32","shape":[F,C,H,W],"text":"<base64>",
//!                    "image_shape":null|[F,C,H,W]}
//! host   -> plugin  tensor frame (F·C·H·W values)
//! host   -> plugin  conditioning image tensor frame, only when image_shape is set
//! plugin -> host    {"status":"ok","dtype":"f32","shape":[F,C,H,W]}  + tensor frame
//!               or  {"status":"error","message":".."}                 (no tensor)
//! ```

mod conformance;
mod frame;
mod host;
mod message;
mod serve;

use std::time::Duration;

use thiserror::Error;

use crate::latent::Shape;

pub use conformance::{run_conformance, ConformanceCheck, ConformanceReport};
pub use frame::{write_frame, Frame, FrameReader, MAX_FRAME_LEN};
pub use host::{split_command, PluginChannel, PluginDenoiser, DEFAULT_TIMEOUT};
pub use message::{
    decode_tensor, encode_text, from_shape, parse_json, to_json, to_shape, Capabilities, Hello, RequestHeader,
    ResponseHeader, DTYPE, PROTO_VERSION,
};
pub use serve::{dirac_handler, echo_handler, serve, Reply, ServeRequest};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PluginError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("truncated frame at byte offset {offset}: expected {expected} bytes, got {got}")]
    Truncated { offset: u64, expected: usize, got: usize },
    #[error("frame at byte offset {offset} declares {len} bytes, above the limit")]
    FrameTooLarge { offset: u64, len: usize },
    #[error("malformed JSON frame at byte offset {offset}: {message}")]
    Json { offset: u64, message: String },
    #[error("payload length mismatch at byte offset {offset}: expected {expected} bytes, got {actual}")]
    PayloadLength {
        offset: u64,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value at index {index} (byte offset {offset})")]
    NonFinite { index: usize, offset: u64 },
    #[error("response shape {actual} does not match request shape {expected}")]
    Shape { expected: Shape, actual: Shape },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("capability violation: {0}")]
    Capability(String),
    #[error("plugin reported an error: {0}")]
    Remote(String),
    #[error("no reply from plugin within {0:?}")]
    Timeout(Duration),
    #[error("plugin closed the stream at byte offset {offset}")]
    Closed { offset: u64 },
    #[error("cannot start plugin: {0}")]
    Spawn(String),
}
