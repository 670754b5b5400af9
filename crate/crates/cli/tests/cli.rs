use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn faceswap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faceswap")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = faceswap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

struct Clip {
    dir: tempfile::TempDir,
}

impl Clip {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// A short benchmark clip with its template and the replacement bank.
fn prepared_clip() -> Clip {
    let clip = Clip { dir: tempfile::tempdir().unwrap() };
    std::fs::write(clip.path("scene.txt"), "preset = benchmark\nduration = 30\n").unwrap();
    std::fs::write(clip.path("subject_b.txt"), "texture.seed = 99\ntexture.tint = 1 0.8 0.6\n").unwrap();
    ok(&["synth", "--script", p(&clip.path("scene.txt")), "--out", p(&clip.path("frames")),
        "--frontal", p(&clip.path("frontal_a.ppm"))]);
    ok(&["synth", "--script", p(&clip.path("subject_b.txt")), "--out", p(&clip.path("b_frames")),
        "--frontal", p(&clip.path("frontal_b.ppm"))]);
    ok(&["calibrate", "--frontal", p(&clip.path("frontal_a.ppm")), "--out", p(&clip.path("template.csv")),
        "--seed", "1"]);
    ok(&["build-bank", "--frontal", p(&clip.path("frontal_b.ppm")), "--out", p(&clip.path("bank")),
        "--step", "10"]);
    clip
}

#[test]
fn artifacts_chain_through_every_command() {
    let clip = prepared_clip();
    assert_eq!(faceswap::synth::list_frames(clip.path("frames")).unwrap().len(), 30);
    assert!(clip.path("frames/truth.csv").is_file());
    assert!(clip.path("bank/bank.meta").is_file());

    ok(&["track", "--frames", p(&clip.path("frames")), "--template", p(&clip.path("template.csv")),
        "--out", p(&clip.path("est.csv")), "--seed", "4"]);
    let est = std::fs::read_to_string(clip.path("est.csv")).unwrap();
    assert!(est.starts_with("frame,tx,ty,s,rx,ry,rz,alpha,status\n"));
    assert_eq!(est.lines().count(), 31);

    let out = ok(&["eval", "--estimated", p(&clip.path("est.csv")), "--truth", p(&clip.path("frames/truth.csv"))]);
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["frames"], 30);
    assert!(metrics["mae"]["rx"].as_f64().unwrap() < 9.0, "{metrics}");
    assert!(metrics["mae"]["ry"].as_f64().unwrap() < 9.0, "{metrics}");

    ok(&["swap", "--frames", p(&clip.path("frames")), "--template", p(&clip.path("template.csv")),
        "--bank", p(&clip.path("bank")), "--out", p(&clip.path("swapped")), "--seed", "4"]);
    assert_eq!(faceswap::synth::list_frames(clip.path("swapped")).unwrap().len(), 30);
    let latency: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(clip.path("swapped/latency.json")).unwrap()).unwrap();
    for key in ["mean_ms", "p50_ms", "p95_ms", "max_ms", "frames", "dropped"] {
        assert!(latency.get(key).is_some(), "{key} missing from {latency}");
    }
    // the tracker inside swap saw the same frames with the same seed
    let swap_poses = std::fs::read_to_string(clip.path("swapped/poses.csv")).unwrap();
    assert_eq!(swap_poses, est);
}

#[test]
fn seeded_swaps_are_byte_identical() {
    let clip = prepared_clip();
    let run = |name: &str| {
        ok(&["swap", "--frames", p(&clip.path("frames")), "--template", p(&clip.path("template.csv")),
            "--bank", p(&clip.path("bank")), "--out", p(&clip.path(name)), "--seed", "9", "--delay", "3"]);
        tree(&clip.path(name)).into_iter().filter(|(n, _)| n != Path::new("latency.json")).collect::<Vec<_>>()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.len(), 31);
    assert!(a == b);
}

#[test]
fn eval_of_identical_traces_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "frame,tx,ty,s,rx,ry,rz,alpha\n0,1,2,1,5,6,7,1\n1,1,2,1,-179,6,7,1\n").unwrap();
    let json = dir.path().join("m.json");
    ok(&["eval", "--estimated", p(&csv), "--truth", p(&csv), "--out", p(&json)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for part in ["mae", "rmse"] {
        for dim in ["tx", "ty", "s", "rx", "ry", "rz", "alpha"] {
            assert_eq!(m[part][dim].as_f64(), Some(0.0), "{part}.{dim}");
        }
    }
    assert_eq!(m["frames"], 2);
}

#[test]
fn usage_errors_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("x.csv");
    let r = faceswap(&["eval", "--estimated", "a.csv", "--truth", "b.csv", "--out", p(&out_csv), "--bogus"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--bogus"));
    assert!(!out_csv.exists());

    let r = faceswap(&["calibrate", "--out", p(&out_csv)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--frontal"));
    assert!(!out_csv.exists());

    let r = faceswap(&["track", "--frames", "f", "--template", "t", "--out", p(&out_csv), "--particles", "many"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--particles"));

    let r = faceswap(&["dance"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(faceswap(&["--help"]).status.code(), Some(0));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let r = faceswap(&["eval", "--estimated", p(&dir.path().join("missing.csv")), "--truth", "x.csv"]);
    assert_eq!(r.status.code(), Some(2));
    let r = faceswap(&["track", "--frames", p(dir.path()), "--template", "t.csv", "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "frame,tx,ty,s,rx,ry,rz,alpha\n0,0,0,1,5,0,0,1\n").unwrap();
    std::fs::write(&b, "frame,tx,ty,s,rx,ry,rz,alpha\n0,0,0,1,0,0,0,1\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    let from_cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!("estimated = {}\ntruth = {}\nout = {}\n", p(&a), p(&b), p(&from_cfg))).unwrap();
    ok(&["eval", "--config", p(&cfg)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&from_cfg).unwrap()).unwrap();
    assert_eq!(m["mae"]["rx"].as_f64(), Some(5.0));

    // a flag overrides the file
    let out = ok(&["eval", "--config", p(&cfg), "--truth", p(&a), "--out", p(&dir.path().join("flag.json"))]);
    assert!(out.stdout.is_empty());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("flag.json")).unwrap()).unwrap();
    assert_eq!(m["mae"]["rx"].as_f64(), Some(0.0));

    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(faceswap(&["eval", "--config", p(&cfg)]).status.code(), Some(1));
}

#[test]
fn bench_reports_latency_json() {
    let out = ok(&["bench", "--length", "20", "--fps", "0", "--particles", "200"]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["frames"], 20);
    assert!(r["mean_ms"].as_f64().unwrap() > 0.0);
}
