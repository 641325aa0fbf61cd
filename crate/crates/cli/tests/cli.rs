use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn panoshift() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_panoshift"));
    c.env_remove("PANOSHIFT_WORKERS");
    c
}

fn fixture(behaviour: &str) -> String {
    format!("{} {behaviour}", env!("CARGO_BIN_EXE_panoshift-fixture-plugin"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(out.status.success(), "stdout:\n{}\nstderr:\n{}", text(&out.stdout), text(&out.stderr));
    text(&out.stdout)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files_under(dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for e in fs::read_dir(dir.join(&rel)).unwrap() {
            let e = e.unwrap();
            let p = rel.join(e.file_name());
            if e.file_type().unwrap().is_dir() {
                stack.push(p);
            } else {
                out.insert(p.to_string_lossy().into_owned());
            }
        }
    }
    out
}

fn png_size(path: &Path) -> (u32, u32) {
    let d = png::Decoder::new(std::io::BufReader::new(fs::File::open(path).unwrap()));
    let r = d.read_info().unwrap();
    (r.info().width, r.info().height)
}

/// Small perspective run used by the reproducibility tests.
fn small(out: &Path) -> Command {
    let mut c = panoshift();
    c.args(["generate", "--size", "128x32x4", "--window", "32x32x4", "--steps", "10", "--seed", "5", "--no-png", "-o"])
        .arg(out);
    c
}

#[test]
fn perspective_generate_writes_complete_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    ok(panoshift()
        .args(["generate", "--oracle", "dirac", "--mode", "perspective", "--size", "512x128x16", "-o"])
        .arg(&dir));
    let m = manifest(&dir);
    let pngs = (0..16).filter(|f| dir.join(format!("frames/frame_{f:04}.png")).exists()).count();
    assert_eq!(pngs, 16);
    assert_eq!(png_size(&dir.join("frames/frame_0000.png")), (512, 128));
    assert!(dir.join("latent.pwlt").exists());

    let ratio = m["metrics"]["seam"]["ratio"].as_f64().unwrap();
    assert!(ratio < 1.2, "seam ratio {ratio}");
    let tone = &m["tone_map"];
    assert!(tone["min"].as_f64().unwrap() < tone["max"].as_f64().unwrap());
    assert_eq!(m["stats"]["steps"].as_u64().unwrap(), 50 + 30);
    assert!(m["stats"]["peak_window_bytes"].as_u64().unwrap() > 0);

    let listed: BTreeSet<String> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap().to_owned())
        .collect();
    let mut on_disk = files_under(&dir);
    on_disk.remove("manifest.json");
    assert_eq!(listed, on_disk);
}

#[test]
fn same_seed_gives_identical_dumps_across_invocations_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&mut small(&a));
    ok(&mut small(&b));
    ok(small(&c).env("PANOSHIFT_WORKERS", "3"));
    assert_eq!(manifest(&c)["config"]["run"]["workers"], 3);
    let dump = |d: &Path| fs::read(d.join("latent.pwlt")).unwrap();
    assert_eq!(dump(&a), dump(&b));
    assert_eq!(dump(&a), dump(&c));
    assert_eq!(&dump(&a)[..4], b"PWLT");
}

#[test]
fn rerun_removes_stale_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = |frames: &str| {
        ok(panoshift()
            .args(["generate", "--no-gmg", "--steps", "4", "--window", "16x16", "--size"])
            .arg(format!("32x16x{frames}"))
            .arg("-o")
            .arg(dir));
    };
    gen("4");
    assert!(dir.join("frames/frame_0003.png").exists());
    gen("2");
    assert!(!dir.join("frames/frame_0003.png").exists());
    assert_eq!(files_under(&dir.join("frames")).len(), 2);
}

#[test]
fn erp_generate_keeps_two_to_one_frames() {
    let tmp = tempfile::tempdir().unwrap();
    ok(panoshift()
        .args(["generate", "--mode", "erp360", "--size", "128x64x4", "--window", "16x16x4", "--steps", "8", "--loopable"])
        .arg("-o")
        .arg(tmp.path()));
    assert_eq!(png_size(&tmp.path().join("frames/frame_0003.png")), (128, 64));
    let m = manifest(tmp.path());
    assert_eq!(m["metrics"]["t_ring"], true);
    assert!(m["metrics"]["flicker"]["loop_ratio"].is_number());
}

#[test]
fn erp_aspect_is_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(panoshift()
        .args(["generate", "--mode", "erp360", "--size", "100x60", "--no-gmg", "-o"])
        .arg(tmp.path()));
    assert_eq!(code(&out), 2);
    assert!(text(&out.stderr).contains("ERP width must equal twice height"), "{}", text(&out.stderr));
    assert!(!tmp.path().join("manifest.json").exists());

    // 2:1, but not divisible by the default guidance scale
    let out = run(panoshift().args(["generate", "--mode", "erp360", "--size", "100x50", "-o"]).arg(tmp.path()));
    assert_eq!(code(&out), 2);
    assert!(text(&out.stderr).contains("non-integer scale"));
}

#[test]
fn config_file_is_applied_and_unknown_keys_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[run]\nwidth = 64\nheight = 32\nframes = 2\nsteps = 6\n[run.gmg]\nenabled = false\n[run.window]\nframes = 2\n").unwrap();
    let dir = tmp.path().join("o");
    ok(panoshift().args(["generate", "--seed", "9", "-c"]).arg(&cfg).arg("-o").arg(&dir));
    let m = manifest(&dir);
    assert_eq!(m["config"]["run"]["steps"], 6);
    assert_eq!(m["config"]["run"]["seed"], 9);
    assert!(m["guide"].is_null() && !dir.join("guide.pwlt").exists());

    fs::write(&cfg, "[run]\nwidht = 64\n").unwrap();
    let out = run(panoshift().args(["generate", "-c"]).arg(&cfg));
    assert_eq!(code(&out), 2);
    assert!(text(&out.stderr).contains("widht"), "{}", text(&out.stderr));
}

#[test]
fn bundled_example_config_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("panoshift.example.toml");
    ok(panoshift()
        .args(["generate", "--size", "64x32x2", "--steps", "6", "-c"])
        .arg(&example)
        .arg("-o")
        .arg(tmp.path()));
    assert!(tmp.path().join("guide.pwlt").exists());
}

#[test]
fn audit_default_config_is_clean() {
    let out = ok(panoshift().args(["audit-plan", "--no-diagram"]));
    assert!(out.contains("total: 0 violations"), "{out}");
    assert!(out.contains("low-resolution stage"));
}

#[test]
fn audit_toy_offsets() {
    let out = ok(panoshift().args([
        "audit-plan", "--size", "16x8x1", "--window", "8x8x1", "--steps", "4", "--shift-x", "2", "--no-gmg",
    ]));
    assert!(out.contains("column offsets: 0,2,4,6"), "{out}");
    assert!(out.contains("step 3 (exclusive): offset x=6"));
    assert!(out.contains("0 violations"));
}

#[test]
fn audit_temporal_plan_lists_five_clips() {
    let out = ok(panoshift().args([
        "audit-plan", "--size", "64x32x80", "--window", "32x32x16", "--steps", "8", "--draw-steps", "1", "--no-gmg",
    ]));
    assert!(out.contains("step 0: o_f=0, 5 clips"), "{out}");
    for start in [0, 16, 32, 48, 64] {
        assert!(out.contains(&format!("read frames {start}..{}", start + 16)));
    }
}

#[test]
fn audit_erp_draws_viewports() {
    let out = ok(panoshift().args(["audit-plan", "--mode", "erp360", "--size", "256x128", "--draw-steps", "2"]));
    assert!(out.contains("viewports 6x3"), "{out}");
    assert!(out.contains("step 1: offset lon=15.00°"));
    assert!(out.contains("total: 0 violations"));
}

#[test]
fn protocol_echo_test_reports_each_plugin() {
    for good in ["echo", "oracle"] {
        let out = ok(panoshift().args(["protocol-echo-test", &fixture(good)]));
        assert!(out.ends_with("conformance: pass\n"), "{out}");
    }
    for (bad, needle) in [
        ("short", "payload length mismatch"),
        ("nan", "non-finite value at index"),
        ("malformed", "malformed JSON frame at byte offset"),
    ] {
        let out = run(panoshift().args(["protocol-echo-test", &fixture(bad)]));
        assert_eq!(code(&out), 4, "{bad}");
        let stdout = text(&out.stdout);
        assert!(stdout.contains(needle) && stdout.contains("conformance: fail"), "{bad}: {stdout}");
    }
    let out = run(panoshift().args(["protocol-echo-test", "/nonexistent/plugin"]));
    assert_eq!(code(&out), 4);
}

#[test]
fn oracle_over_plugin_matches_in_process_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(small(&a).args(["--oracle", "dirac"]));
    ok(small(&b).args(["--plugin", &fixture("oracle"), "--workers", "2"]));
    assert_eq!(fs::read(a.join("latent.pwlt")).unwrap(), fs::read(b.join("latent.pwlt")).unwrap());
    assert_eq!(manifest(&b)["denoiser"], "fixture-oracle");
}

#[test]
fn plugin_failure_names_step_and_window() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(small(tmp.path()).args(["--plugin", &fixture("nan")]));
    assert_eq!(code(&out), 4);
    let err = text(&out.stderr);
    assert!(err.contains("step 0, window") && err.contains("non-finite value at index"), "{err}");

    let out = run(small(tmp.path()).args(["--plugin", "/nonexistent/plugin"]));
    assert_eq!(code(&out), 4);
}

#[test]
fn metrics_reads_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&mut small(tmp.path()));
    let dump = tmp.path().join("latent.pwlt");
    let out = ok(panoshift().arg("metrics").arg(&dump));
    assert!(out.contains("seam: boundary") && out.contains("ratio"), "{out}");
    let json: Value = serde_json::from_str(&ok(panoshift().arg("metrics").arg(&dump).arg("--json"))).unwrap();
    assert_eq!(json["shape"], serde_json::json!([4, 4, 32, 128]));
    assert_eq!(json, manifest(tmp.path())["metrics"]);

    fs::write(&dump, b"nope").unwrap();
    let out = run(panoshift().arg("metrics").arg(&dump));
    assert_eq!(code(&out), 2);
}
