use std::io::{BufWriter, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use super::frame::{write_frame, Frame, FrameReader};
use super::message::{
    decode_tensor, encode_text, from_shape, parse_json, to_json, to_shape, Capabilities, Hello, RequestHeader,
    ResponseHeader, DTYPE, PROTO_VERSION,
};
use super::PluginError;
use crate::denoise::{DenoiseError, DenoiseRequest, Denoiser};
use crate::latent::Tile;
use crate::scalar::Scalar;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// One exclusive connection to a plugin process or stream.
pub struct PluginChannel {
    writer: Option<Box<dyn Write + Send>>,
    frames: mpsc::Receiver<Result<Frame, PluginError>>,
    /// Bytes consumed by the reader thread so far.
    read_offset: Arc<AtomicU64>,
    timeout: Duration,
    caps: Capabilities,
    child: Option<Child>,
}

impl PluginChannel {
    /// Performs the handshake over an existing byte stream pair.
    pub fn connect<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, PluginError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::start(reader, Box::new(BufWriter::new(writer)), timeout, None)
    }

    /// Launches `argv` and handshakes over its stdin/stdout.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, PluginError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| PluginError::Spawn("empty plugin command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PluginError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        Self::start(stdout, Box::new(BufWriter::new(stdin)), timeout, Some(child))
    }

    fn start<R: Read + Send + 'static>(
        reader: R,
        writer: Box<dyn Write + Send>,
        timeout: Duration,
        child: Option<Child>,
    ) -> Result<Self, PluginError> {
        let (tx, rx) = mpsc::channel();
        let read_offset = Arc::new(AtomicU64::new(0));
        let shared = Arc::clone(&read_offset);
        thread::spawn(move || {
            let mut r = FrameReader::new(reader);
            loop {
                let next = r.read_frame();
                shared.store(r.offset(), Ordering::Relaxed);
                match next {
                    Ok(Some(f)) => {
                        if tx.send(Ok(f)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut ch = Self {
            writer: Some(writer),
            frames: rx,
            read_offset,
            timeout,
            caps: Capabilities {
                proto: PROTO_VERSION,
                name: String::new(),
                max_window: [0, 0],
                max_frames: 0,
                conditioning: Vec::new(),
            },
            child,
        };
        ch.send(&to_json(&Hello { proto: PROTO_VERSION }))?;
        ch.flush()?;
        let f = ch.recv()?;
        let caps: Capabilities = parse_json(&f.payload, f.offset)?;
        if caps.proto != PROTO_VERSION {
            return Err(PluginError::Handshake(format!(
                "plugin speaks protocol {}, host speaks {PROTO_VERSION}",
                caps.proto
            )));
        }
        ch.caps = caps;
        Ok(ch)
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), PluginError> {
        let w = self.writer.as_mut().expect("writer present until drop");
        write_frame(w, payload)
    }

    fn flush(&mut self) -> Result<(), PluginError> {
        let w = self.writer.as_mut().expect("writer present until drop");
        w.flush().map_err(|e| PluginError::Io(e.to_string()))
    }

    fn recv(&self) -> Result<Frame, PluginError> {
        match self.frames.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(PluginError::Timeout(self.timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(PluginError::Closed {
                offset: self.read_offset.load(Ordering::Relaxed),
            }),
        }
    }

    /// Sends a raw request and returns the decoded reply values.
    pub fn exchange(
        &mut self,
        header: &RequestHeader,
        tile: &[f32],
        image: Option<&[f32]>,
    ) -> Result<Vec<f32>, PluginError> {
        self.caps.admits(header.tile_shape())?;
        self.send(&to_json(header))?;
        let mut buf = Vec::with_capacity(tile.len() * 4);
        crate::dump::encode_f32s(tile, &mut buf);
        self.send(&buf)?;
        if let Some(img) = image {
            buf.clear();
            crate::dump::encode_f32s(img, &mut buf);
            self.send(&buf)?;
        }
        self.flush()?;
        let f = self.recv()?;
        let reply: ResponseHeader = parse_json(&f.payload, f.offset)?;
        if reply.status != "ok" {
            return Err(PluginError::Remote(reply.message.unwrap_or_else(|| reply.status.clone())));
        }
        if let Some(d) = reply.dtype.as_deref() {
            if d != DTYPE {
                return Err(PluginError::Remote(format!("unsupported dtype {d:?}")));
            }
        }
        let expected = header.tile_shape();
        if let Some(s) = reply.shape {
            if to_shape(s) != expected {
                return Err(PluginError::Shape {
                    expected,
                    actual: to_shape(s),
                });
            }
        }
        let f = self.recv()?;
        decode_tensor(&f.payload, f.offset, expected)
    }

    /// Runs one denoise request over the protocol.
    pub fn call<S: Scalar>(&mut self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, PluginError> {
        let shape = req.tile.shape();
        let header = RequestHeader {
            op: "denoise".into(),
            step: req.step,
            t: req.t,
            alpha_bar_t: req.alpha_bar_t,
            alpha_bar_prev: req.alpha_bar_prev,
            geometry: req.geometry,
            dtype: DTYPE.into(),
            shape: from_shape(shape),
            text: encode_text(req.text),
            image_shape: req.image.map(|i| from_shape(i.shape())),
        };
        let tile: Vec<f32> = req.tile.data().iter().map(|v| v.as_f32()).collect();
        let image: Option<Vec<f32>> = req.image.map(|i| i.data().iter().map(|v| v.as_f32()).collect());
        let values = self.exchange(&header, &tile, image.as_deref())?;
        Ok(Tile::new(shape, values.into_iter().map(|v| S::of(v as f64)).collect()).expect("length checked"))
    }
}

impl Drop for PluginChannel {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved plugin exit on EOF
        drop(self.writer.take());
        if let Some(mut child) = self.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Splits a plugin command line on whitespace.
pub fn split_command(command: &str) -> Vec<String> {
    command.split_whitespace().map(str::to_owned).collect()
}

/// A bounded pool of plugin channels shared by pipeline workers.
pub struct PluginDenoiser {
    pool: Mutex<Vec<PluginChannel>>,
    available: Condvar,
    failed: AtomicBool,
    name: String,
}

impl PluginDenoiser {
    pub fn new(channels: Vec<PluginChannel>) -> Result<Self, PluginError> {
        let name = channels
            .first()
            .map(|c| c.capabilities().name.clone())
            .ok_or_else(|| PluginError::Spawn("empty plugin pool".into()))?;
        Ok(Self {
            pool: Mutex::new(channels),
            available: Condvar::new(),
            failed: AtomicBool::new(false),
            name: if name.is_empty() { "plugin".into() } else { name },
        })
    }

    /// Starts `count` instances of `argv`.
    pub fn spawn(argv: &[String], count: usize, timeout: Duration) -> Result<Self, PluginError> {
        let channels = (0..count.max(1))
            .map(|_| PluginChannel::spawn(argv, timeout))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(channels)
    }

    pub fn capabilities(&self) -> Capabilities {
        let pool = self.pool.lock().unwrap_or_else(|e| e.into_inner());
        pool.first().map(|c| c.capabilities().clone()).expect("pool is never empty at rest")
    }
}

impl<S: Scalar> Denoiser<S> for PluginDenoiser {
    fn name(&self) -> &str {
        &self.name
    }

    fn denoise(&self, req: &DenoiseRequest<'_, S>) -> Result<Tile<S>, DenoiseError> {
        if self.failed.load(Ordering::Acquire) {
            return Err(PluginError::Remote("an earlier plugin call failed".into()).into());
        }
        let mut ch = {
            let mut pool = self.pool.lock().unwrap_or_else(|e| e.into_inner());
            loop {
                if let Some(ch) = pool.pop() {
                    break ch;
                }
                pool = self.available.wait(pool).unwrap_or_else(|e| e.into_inner());
            }
        };
        let out = ch.call(req);
        if out.is_err() {
            self.failed.store(true, Ordering::Release);
        }
        self.pool.lock().unwrap_or_else(|e| e.into_inner()).push(ch);
        self.available.notify_one();
        Ok(out?)
    }
}
