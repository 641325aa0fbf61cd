//! PWLT tensor dump: a 32-byte header followed by little-endian `f32`
//! elements in canonical order.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PWLT"
//!      4     4  version (u32 LE, currently 1)
//!      8    16  frames, channels, height, width (u32 LE each)
//!     24     1  h_ring flag (0/1)
//!     25     1  t_ring flag (0/1)
//!     26     6  zero padding
//!     32     …  frames·channels·height·width f32 LE values
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::latent::{PanoLatent, Shape};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"PWLT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"PWLT\"")]
    Magic([u8; 4]),
    #[error("unsupported dump version {0}")]
    Version(u32),
    #[error("topology flag byte at offset {offset} has value {value}, expected 0 or 1")]
    Flag { offset: usize, value: u8 },
    #[error("dimension {0} does not fit in u32")]
    Dimension(usize),
    #[error("payload truncated: expected {expected} bytes of tensor data")]
    Truncated { expected: usize },
}

pub fn encode_header(shape: Shape, h_ring: bool, t_ring: bool) -> Result<[u8; HEADER_LEN], DumpError> {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&VERSION.to_le_bytes());
    for (i, d) in [shape.frames, shape.channels, shape.height, shape.width]
        .into_iter()
        .enumerate()
    {
        let d = u32::try_from(d).map_err(|_| DumpError::Dimension(d))?;
        h[8 + 4 * i..12 + 4 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[24] = h_ring as u8;
    h[25] = t_ring as u8;
    Ok(h)
}

pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(Shape, bool, bool), DumpError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DumpError::Magic(magic));
    }
    let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(DumpError::Version(version));
    }
    let dim = |i: usize| u32::from_le_bytes(h[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
    let flag = |offset: usize| match h[offset] {
        0 => Ok(false),
        1 => Ok(true),
        value => Err(DumpError::Flag { offset, value }),
    };
    Ok((shape, flag(24)?, flag(25)?))
}

/// Appends `values` to `out` as little-endian f32.
pub fn encode_f32s<S: Scalar>(values: &[S], out: &mut Vec<u8>) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.as_f32().to_le_bytes());
    }
}

/// Decodes little-endian f32 values; `bytes.len()` must be a multiple of 4.
pub fn decode_f32s<S: Scalar>(bytes: &[u8]) -> Vec<S> {
    bytes
        .chunks_exact(4)
        .map(|b| S::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect()
}

pub fn write_pwlt<S: Scalar, W: Write>(w: &mut W, latent: &PanoLatent<S>) -> Result<(), DumpError> {
    w.write_all(&encode_header(latent.shape(), latent.h_ring(), latent.t_ring())?)?;
    let mut buf = Vec::new();
    for chunk in latent.data().chunks(1 << 16) {
        buf.clear();
        encode_f32s(chunk, &mut buf);
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_pwlt<S: Scalar, R: Read>(r: &mut R) -> Result<PanoLatent<S>, DumpError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let (shape, h_ring, t_ring) = decode_header(&h)?;
    let expected = shape.len() * 4;
    let mut bytes = vec![0u8; expected];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DumpError::Truncated { expected },
        _ => DumpError::Io(e),
    })?;
    Ok(PanoLatent::from_vec(shape, h_ring, t_ring, decode_f32s(&bytes))
        .expect("length derived from shape"))
}

pub fn to_bytes<S: Scalar>(latent: &PanoLatent<S>) -> Result<Vec<u8>, DumpError> {
    let mut out = Vec::with_capacity(HEADER_LEN + latent.data().len() * 4);
    write_pwlt(&mut out, latent)?;
    Ok(out)
}
