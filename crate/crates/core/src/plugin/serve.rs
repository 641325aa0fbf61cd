use std::io::{Read, Write};

use super::frame::{write_frame, FrameReader};
use super::message::{
    decode_tensor, parse_json, to_json, to_shape, Capabilities, Hello, RequestHeader, ResponseHeader, DTYPE,
    PROTO_VERSION,
};
use super::PluginError;
use crate::denoise::{dirac_oracle_step, DenoiseRequest, Target};
use crate::latent::Tile;

/// A decoded request as seen by the plugin.
#[derive(Clone, Debug)]
pub struct ServeRequest {
    pub header: RequestHeader,
    pub tile: Tile<f32>,
    pub text: Vec<u8>,
    pub image: Option<Tile<f32>>,
}

/// What a handler sends back. `Tensor` is written verbatim after an `ok`
/// header, so a handler can also produce a wrong-length reply on purpose.
#[derive(Clone, Debug, PartialEq)]
pub enum Reply {
    Tensor(Vec<f32>),
    Error(String),
}

/// Plugin-side session loop over a byte stream.
///
/// Answers the handshake with `caps`, then serves denoise requests until the
/// host closes the stream. Malformed host frames get an error reply and end
/// the session with an error; requests beyond `caps` get an error reply and
/// the session continues. Returns the number of requests answered.
pub fn serve<R: Read, W: Write>(
    reader: R,
    mut writer: W,
    caps: &Capabilities,
    mut handler: impl FnMut(&ServeRequest) -> Reply,
) -> Result<usize, PluginError> {
    let mut frames = FrameReader::new(reader);
    let hello = frames.read_frame()?.ok_or(PluginError::Closed { offset: 0 })?;
    let hello: Hello = parse_json(&hello.payload, hello.offset)?;
    if hello.proto != PROTO_VERSION {
        let msg = format!("unsupported protocol version {}", hello.proto);
        reply_error(&mut writer, &msg)?;
        return Err(PluginError::Handshake(msg));
    }
    write_frame(&mut writer, &to_json(caps))?;
    flush(&mut writer)?;

    let mut served = 0;
    loop {
        let Some(f) = frames.read_frame()? else {
            return Ok(served);
        };
        let header: RequestHeader = match parse_json(&f.payload, f.offset) {
            Ok(h) => h,
            Err(e) => {
                reply_error(&mut writer, &e.to_string())?;
                return Err(e);
            }
        };
        let shape = header.tile_shape();
        let tensor = match frames.read_frame()? {
            Some(t) => t,
            None => return Err(PluginError::Closed { offset: frames.offset() }),
        };
        let values = match decode_tensor(&tensor.payload, tensor.offset, shape) {
            Ok(v) => v,
            Err(e) => {
                reply_error(&mut writer, &e.to_string())?;
                return Err(e);
            }
        };
        let image = match header.image_shape {
            None => None,
            Some(s) => {
                let f = frames
                    .read_frame()?
                    .ok_or(PluginError::Closed { offset: frames.offset() })?;
                let v = decode_tensor(&f.payload, f.offset, to_shape(s))?;
                Some(Tile::new(to_shape(s), v).expect("length checked"))
            }
        };
        if header.op != "denoise" {
            reply_error(&mut writer, &format!("unknown op {:?}", header.op))?;
            continue;
        }
        if header.dtype != DTYPE {
            reply_error(&mut writer, &format!("unsupported dtype {:?}", header.dtype))?;
            continue;
        }
        if let Err(e) = caps.admits(shape) {
            reply_error(&mut writer, &e.to_string())?;
            continue;
        }
        let text = match header.text_bytes() {
            Ok(t) => t,
            Err(e) => {
                reply_error(&mut writer, &e.to_string())?;
                continue;
            }
        };
        let req = ServeRequest {
            header,
            tile: Tile::new(shape, values).expect("length checked"),
            text,
            image,
        };
        match handler(&req) {
            Reply::Tensor(out) => {
                write_frame(&mut writer, &to_json(&ResponseHeader::ok(shape)))?;
                let mut buf = Vec::with_capacity(out.len() * 4);
                crate::dump::encode_f32s(&out, &mut buf);
                write_frame(&mut writer, &buf)?;
            }
            Reply::Error(msg) => write_frame(&mut writer, &to_json(&ResponseHeader::error(msg)))?,
        }
        flush(&mut writer)?;
        served += 1;
    }
}

fn reply_error(w: &mut impl Write, msg: &str) -> Result<(), PluginError> {
    write_frame(w, &to_json(&ResponseHeader::error(msg)))?;
    flush(w)
}

fn flush(w: &mut impl Write) -> Result<(), PluginError> {
    w.flush().map_err(|e| PluginError::Io(e.to_string()))
}

/// Handler returning the request tile.
pub fn echo_handler(req: &ServeRequest) -> Reply {
    Reply::Tensor(req.tile.data().to_vec())
}

/// Handler running the dirac oracle for `target`.
pub fn dirac_handler(req: &ServeRequest, target: &dyn Target) -> Reply {
    let h = &req.header;
    let r = DenoiseRequest {
        step: h.step,
        t: h.t,
        alpha_bar_t: h.alpha_bar_t,
        alpha_bar_prev: h.alpha_bar_prev,
        geometry: h.geometry,
        tile: &req.tile,
        text: &req.text,
        image: req.image.as_ref(),
    };
    match dirac_oracle_step(&r, target) {
        Ok(t) => Reply::Tensor(t.into_vec()),
        Err(e) => Reply::Error(e.to_string()),
    }
}
