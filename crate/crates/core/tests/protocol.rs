//! Host side of the plugin protocol against in-process plugin sessions.

use std::io::{Read, Write};
use std::os::unix::net::UnixStream;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use panoshift::denoise::{AnalyticTarget, DiracOracle, Target, WindowGeometry};
use panoshift::latent::{Shape, TileRegion};
use panoshift::pipeline::{Pipeline, PipelineError, RunConfig, WindowConfig};
use panoshift::plugin::{
    dirac_handler, echo_handler, encode_text, from_shape, run_conformance, serve, write_frame, Capabilities,
    FrameReader, PluginChannel, PluginDenoiser, PluginError, Reply, RequestHeader, ResponseHeader, ServeRequest,
    DTYPE,
};
use panoshift::rng::SeededRng;

const TIMEOUT: Duration = Duration::from_secs(20);

fn caps(w: usize, h: usize, f: usize) -> Capabilities {
    Capabilities {
        proto: 1,
        name: "test-plugin".into(),
        max_window: [w, h],
        max_frames: f,
        conditioning: vec!["text".into()],
    }
}

/// Starts a plugin session in a thread; returns the host end of the socket.
fn plugin_socket<H>(caps: Capabilities, handler: H) -> (UnixStream, thread::JoinHandle<Result<usize, PluginError>>)
where
    H: FnMut(&ServeRequest) -> Reply + Send + 'static,
{
    let (host, plugin) = UnixStream::pair().unwrap();
    let reader = plugin.try_clone().unwrap();
    let handle = thread::spawn(move || serve(reader, plugin, &caps, handler));
    (host, handle)
}

fn channel<H>(caps: Capabilities, handler: H) -> PluginChannel
where
    H: FnMut(&ServeRequest) -> Reply + Send + 'static,
{
    let (host, _) = plugin_socket(caps, handler);
    PluginChannel::connect(host.try_clone().unwrap(), host, TIMEOUT).unwrap()
}

fn header(shape: Shape) -> RequestHeader {
    RequestHeader {
        op: "denoise".into(),
        step: 3,
        t: 47,
        alpha_bar_t: 0.3,
        alpha_bar_prev: 0.31,
        geometry: WindowGeometry::Plane {
            region: TileRegion::new((0, shape.frames), (0, shape.height), (0, shape.width)),
            frames: shape.frames,
            height: shape.height,
            width: shape.width,
        },
        dtype: DTYPE.into(),
        shape: from_shape(shape),
        text: encode_text(b"a waterfall"),
        image_shape: None,
    }
}

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut v = vec![0f32; n];
    SeededRng::new(seed).fill_normal(&mut v);
    v
}

#[test]
fn echo_round_trip_is_bit_exact() {
    let shape = Shape::new(2, 4, 8, 8);
    let mut ch = channel(caps(8, 8, 2), echo_handler);
    assert_eq!(ch.capabilities().name, "test-plugin");
    let mut tile = noise(shape.len(), 1);
    tile[0] = f32::MIN_POSITIVE / 4.0; // subnormal
    tile[1] = -0.0;
    let back = ch.exchange(&header(shape), &tile, None).unwrap();
    assert!(tile.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn text_and_image_reach_the_plugin() {
    let shape = Shape::new(1, 2, 4, 4);
    let mut ch = channel(caps(8, 8, 2), |req: &ServeRequest| {
        assert_eq!(req.text, b"a waterfall");
        let img = req.image.as_ref().expect("image frame");
        Reply::Tensor(req.tile.data().iter().zip(img.data()).map(|(a, b)| a + b).collect())
    });
    let mut h = header(shape);
    h.image_shape = Some(from_shape(shape));
    let tile = noise(shape.len(), 2);
    let img = noise(shape.len(), 3);
    let out = ch.exchange(&h, &tile, Some(&img)).unwrap();
    for i in 0..out.len() {
        assert_eq!(out[i], tile[i] + img[i]);
    }
}

#[test]
fn oracle_over_protocol_matches_in_process_run() {
    let cfg = RunConfig {
        width: 96,
        height: 40,
        frames: 8,
        channels: 4,
        steps: 10,
        workers: 3,
        loopable: true,
        window: WindowConfig {
            width: 32,
            height: 32,
            frames: 4,
        },
        ..RunConfig::default()
    };
    let target: Arc<dyn Target> = Arc::new(AnalyticTarget::new(cfg.frames));
    let local = DiracOracle::new(target.clone());
    let direct = Pipeline::<f32>::new(cfg.clone(), &local).unwrap().run().unwrap();

    let channels = (0..3)
        .map(|_| {
            let t = target.clone();
            channel(caps(32, 32, 4), move |req: &ServeRequest| dirac_handler(req, t.as_ref()))
        })
        .collect();
    let remote = PluginDenoiser::new(channels).unwrap();
    let via_plugin = Pipeline::<f32>::new(cfg, &remote).unwrap().run().unwrap();
    assert_eq!(direct.stats.denoiser_calls, via_plugin.stats.denoiser_calls);
    assert!(direct
        .latent
        .data()
        .iter()
        .zip(via_plugin.latent.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn short_reply_is_a_length_mismatch() {
    let shape = Shape::new(1, 1, 4, 4);
    let mut ch = channel(caps(8, 8, 1), |req: &ServeRequest| {
        Reply::Tensor(req.tile.data()[..req.tile.data().len() - 1].to_vec())
    });
    let err = ch.exchange(&header(shape), &noise(16, 4), None).unwrap_err();
    assert!(matches!(err, PluginError::PayloadLength { expected: 64, actual: 60, .. }), "{err}");
    assert!(err.to_string().contains("payload length mismatch at byte offset"));
}

#[test]
fn nan_reply_is_rejected_with_index() {
    let shape = Shape::new(1, 1, 4, 4);
    let mut ch = channel(caps(8, 8, 1), |req: &ServeRequest| {
        let mut v = req.tile.data().to_vec();
        v[5] = f32::NAN;
        Reply::Tensor(v)
    });
    let err = ch.exchange(&header(shape), &noise(16, 5), None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("non-finite value at index 5"), "{msg}");
    assert!(msg.contains("byte offset"));
}

#[test]
fn plugin_errors_surface_in_pipeline_with_step_and_window() {
    let cfg = RunConfig {
        width: 64,
        height: 32,
        frames: 2,
        channels: 1,
        steps: 6,
        window: WindowConfig {
            width: 32,
            height: 32,
            frames: 2,
        },
        ..RunConfig::default()
    };
    let mut n = 0;
    let ch = channel(caps(32, 32, 2), move |req: &ServeRequest| {
        n += 1;
        if req.header.step == 4 {
            Reply::Error(format!("model exploded on call {n}"))
        } else {
            echo_handler(req)
        }
    });
    let d = PluginDenoiser::new(vec![ch]).unwrap();
    let err = Pipeline::<f32>::new(cfg, &d).unwrap().run().err().unwrap();
    match &err {
        PipelineError::Denoise { step, window, .. } => assert_eq!((*step, *window), (4, 0)),
        other => panic!("unexpected {other}"),
    }
    let msg = err.to_string();
    assert!(msg.contains("step 4, window 0") && msg.contains("model exploded"), "{msg}");
}

#[test]
fn host_refuses_windows_beyond_capabilities() {
    let mut ch = channel(caps(8, 8, 2), echo_handler);
    let shape = Shape::new(4, 1, 8, 8);
    let err = ch.exchange(&header(shape), &noise(shape.len(), 6), None).unwrap_err();
    assert!(matches!(err, PluginError::Capability(_)), "{err}");
}

fn raw_session(caps: Capabilities) -> (UnixStream, FrameReader<UnixStream>, thread::JoinHandle<Result<usize, PluginError>>) {
    let (mut host, handle) = plugin_socket(caps, echo_handler);
    write_frame(&mut host, br#"{"proto":1}"#).unwrap();
    let mut frames = FrameReader::new(host.try_clone().unwrap());
    let c = frames.read_frame().unwrap().unwrap();
    let _: Capabilities = serde_json::from_slice(&c.payload).unwrap();
    (host, frames, handle)
}

fn read_header(frames: &mut FrameReader<UnixStream>) -> ResponseHeader {
    let f = frames.read_frame().unwrap().unwrap();
    serde_json::from_slice(&f.payload).unwrap()
}

#[test]
fn plugin_reports_capability_violation_and_continues() {
    let (mut host, mut frames, handle) = raw_session(caps(4, 4, 1));
    let big = Shape::new(1, 1, 8, 8);
    write_frame(&mut host, &serde_json::to_vec(&header(big)).unwrap()).unwrap();
    write_frame(&mut host, &vec![0u8; big.len() * 4]).unwrap();
    let r = read_header(&mut frames);
    assert_eq!(r.status, "error");
    assert!(r.message.unwrap().contains("capability violation"));

    let ok = Shape::new(1, 1, 4, 4);
    write_frame(&mut host, &serde_json::to_vec(&header(ok)).unwrap()).unwrap();
    write_frame(&mut host, &vec![0u8; ok.len() * 4]).unwrap();
    assert_eq!(read_header(&mut frames).status, "ok");
    assert_eq!(frames.read_frame().unwrap().unwrap().payload.len(), 64);
    drop(host);
    drop(frames);
    assert_eq!(handle.join().unwrap().unwrap(), 1);
}

#[test]
fn malformed_host_frame_ends_session_with_offset() {
    let (mut host, mut frames, handle) = raw_session(caps(4, 4, 1));
    write_frame(&mut host, b"{not json").unwrap();
    let r = read_header(&mut frames);
    assert_eq!(r.status, "error");
    // 4-byte prefix + 11-byte hello, then this frame's prefix
    assert!(r.message.unwrap().contains("byte offset 19"));
    let err = handle.join().unwrap().unwrap_err();
    assert!(matches!(err, PluginError::Json { offset: 19, .. }), "{err}");
}

#[test]
fn wrong_tensor_length_from_host_is_reported() {
    let (mut host, mut frames, handle) = raw_session(caps(4, 4, 1));
    let shape = Shape::new(1, 1, 4, 4);
    write_frame(&mut host, &serde_json::to_vec(&header(shape)).unwrap()).unwrap();
    write_frame(&mut host, &[0u8; 10]).unwrap();
    let msg = read_header(&mut frames).message.unwrap();
    assert!(msg.contains("payload length mismatch"), "{msg}");
    assert!(handle.join().unwrap().is_err());
}

#[test]
fn truncated_stream_is_detected() {
    let (host, plugin) = UnixStream::pair().unwrap();
    let mut p = plugin;
    thread::spawn(move || {
        let mut buf = [0u8; 15];
        p.read_exact(&mut buf).unwrap();
        // length prefix promises 100 bytes, 3 arrive
        p.write_all(&100u32.to_le_bytes()).unwrap();
        p.write_all(b"{\"p").unwrap();
    });
    let err = PluginChannel::connect(host.try_clone().unwrap(), host, TIMEOUT).err().unwrap();
    assert!(
        matches!(err, PluginError::Truncated { offset: 4, expected: 100, got: 3 }),
        "{err}"
    );
}

#[test]
fn silent_plugin_times_out() {
    let (host, plugin) = UnixStream::pair().unwrap();
    let keep = plugin.try_clone().unwrap();
    let err = PluginChannel::connect(host.try_clone().unwrap(), host, Duration::from_millis(200))
        .err()
        .unwrap();
    assert!(matches!(err, PluginError::Timeout(_)), "{err}");
    drop(keep);
}

#[test]
fn conformance_passes_for_echo_and_oracle() {
    let r = run_conformance(|| Ok(channel(caps(16, 16, 4), echo_handler)));
    assert!(r.passed(), "{}", r.to_text());
    assert!(r.to_text().ends_with("conformance: pass\n"));

    let target = AnalyticTarget::new(2);
    let r = run_conformance(move || Ok(channel(caps(16, 16, 4), move |q: &ServeRequest| dirac_handler(q, &target))));
    assert!(r.passed(), "{}", r.to_text());
    assert_eq!(r.checks.len(), 5);
}

#[test]
fn conformance_fails_for_bad_plugins() {
    let r = run_conformance(|| {
        Ok(channel(caps(16, 16, 4), |q: &ServeRequest| {
            let mut v = q.tile.data().to_vec();
            v[2] = f32::INFINITY;
            Reply::Tensor(v)
        }))
    });
    assert!(!r.passed());
    assert!(r.to_text().contains("non-finite value at index 2"), "{}", r.to_text());

    let mut calls = 0u32;
    let r = run_conformance(move || {
        Ok(channel(caps(16, 16, 4), move |q: &ServeRequest| {
            calls += 1;
            Reply::Tensor(q.tile.data().iter().map(|v| v + calls as f32).collect())
        }))
    });
    assert!(!r.passed());
    assert!(r.to_text().contains("FAIL determinism"), "{}", r.to_text());
}
