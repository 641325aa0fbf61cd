use std::io::{self, Read, Write};

use super::PluginError;

/// Largest payload accepted from a peer (1 GiB).
pub const MAX_FRAME_LEN: usize = 1 << 30;

/// A received frame and the byte offset of its payload in the stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub offset: u64,
    pub payload: Vec<u8>,
}

/// Reads `u32 LE length + payload` frames, tracking the stream offset.
pub struct FrameReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Next frame, or `None` on a clean end of stream between frames.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, PluginError> {
        let start = self.offset;
        let mut len = [0u8; 4];
        let got = read_full(&mut self.inner, &mut len)?;
        self.offset += got as u64;
        if got == 0 {
            return Ok(None);
        }
        if got < 4 {
            return Err(PluginError::Truncated {
                offset: start,
                expected: 4,
                got,
            });
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > MAX_FRAME_LEN {
            return Err(PluginError::FrameTooLarge { offset: start, len });
        }
        let payload_offset = self.offset;
        let mut payload = vec![0u8; len];
        let got = read_full(&mut self.inner, &mut payload)?;
        self.offset += got as u64;
        if got < len {
            return Err(PluginError::Truncated {
                offset: payload_offset,
                expected: len,
                got,
            });
        }
        Ok(Some(Frame {
            offset: payload_offset,
            payload,
        }))
    }
}

/// Fills `buf` as far as the stream allows; returns the byte count.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize, PluginError> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(PluginError::Io(e.to_string())),
        }
    }
    Ok(n)
}

/// Writes one frame; does not flush.
pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<(), PluginError> {
    let len = u32::try_from(payload.len()).map_err(|_| PluginError::FrameTooLarge {
        offset: 0,
        len: payload.len(),
    })?;
    w.write_all(&len.to_le_bytes())
        .and_then(|_| w.write_all(payload))
        .map_err(|e| PluginError::Io(e.to_string()))
}
