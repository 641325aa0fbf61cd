use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::PluginError;
use crate::denoise::WindowGeometry;
use crate::latent::Shape;

pub const PROTO_VERSION: u32 = 1;
pub const DTYPE: &str = "f32";

/// First frame sent by the host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub proto: u32,
}

/// Plugin reply to [`Hello`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default = "default_proto")]
    pub proto: u32,
    #[serde(default)]
    pub name: String,
    /// Largest window as `[width, height]`.
    pub max_window: [usize; 2],
    pub max_frames: usize,
    #[serde(default)]
    pub conditioning: Vec<String>,
}

fn default_proto() -> u32 {
    PROTO_VERSION
}

impl Capabilities {
    /// Checks a tile shape against the declared limits.
    pub fn admits(&self, shape: Shape) -> Result<(), PluginError> {
        if shape.width > self.max_window[0] || shape.height > self.max_window[1] || shape.frames > self.max_frames {
            return Err(PluginError::Capability(format!(
                "window {}x{}x{} exceeds declared maximum {}x{}x{}",
                shape.width, shape.height, shape.frames, self.max_window[0], self.max_window[1], self.max_frames
            )));
        }
        Ok(())
    }
}

/// Header of a denoise request; a tensor frame follows, then an optional
/// conditioning image tensor frame when `image_shape` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub op: String,
    pub step: usize,
    pub t: usize,
    pub alpha_bar_t: f64,
    pub alpha_bar_prev: f64,
    pub geometry: WindowGeometry,
    pub dtype: String,
    /// `[frames, channels, height, width]`.
    pub shape: [usize; 4],
    /// Base64 text conditioning.
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image_shape: Option<[usize; 4]>,
}

impl RequestHeader {
    pub fn tile_shape(&self) -> Shape {
        to_shape(self.shape)
    }

    pub fn text_bytes(&self) -> Result<Vec<u8>, PluginError> {
        STANDARD
            .decode(&self.text)
            .map_err(|e| PluginError::Handshake(format!("bad base64 text conditioning: {e}")))
    }
}

pub fn encode_text(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

/// Plugin reply header; on `"ok"` a tensor frame of `shape` follows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseHeader {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 4]>,
}

impl ResponseHeader {
    pub fn ok(shape: Shape) -> Self {
        Self {
            status: "ok".into(),
            message: None,
            dtype: Some(DTYPE.into()),
            shape: Some(from_shape(shape)),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: "error".into(),
            message: Some(message.into()),
            dtype: None,
            shape: None,
        }
    }
}

pub fn to_shape(s: [usize; 4]) -> Shape {
    Shape::new(s[0], s[1], s[2], s[3])
}

pub fn from_shape(s: Shape) -> [usize; 4] {
    [s.frames, s.channels, s.height, s.width]
}

/// Parses a JSON text frame, attributing failures to its offset.
pub fn parse_json<T: for<'de> Deserialize<'de>>(payload: &[u8], offset: u64) -> Result<T, PluginError> {
    serde_json::from_slice(payload).map_err(|e| PluginError::Json {
        offset,
        message: e.to_string(),
    })
}

pub fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("message types serialize")
}

/// Decodes a tensor frame of `shape`, checking length and finiteness.
pub fn decode_tensor(payload: &[u8], offset: u64, shape: Shape) -> Result<Vec<f32>, PluginError> {
    let expected = shape.len() * 4;
    if payload.len() != expected {
        return Err(PluginError::PayloadLength {
            offset,
            expected,
            actual: payload.len(),
        });
    }
    let values: Vec<f32> = crate::dump::decode_f32s(payload);
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(PluginError::NonFinite {
            index,
            offset: offset + 4 * index as u64,
        });
    }
    Ok(values)
}
