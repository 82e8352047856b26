use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use skillmatrix::formats::read_jsonl;
use skillmatrix::inference::TcpInferenceClient;
use skillmatrix_core::bench::{level_scene, Level};
use skillmatrix_core::data::{Clip, RelClip};
use skillmatrix_core::math::wrap_angle;
use skillmatrix_core::sim::{RobotState, RobotVariant, World};
use skillmatrix_core::skills::{InferenceClient, InferenceRequest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skillmatrix"))
}

fn run(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).current_dir(cwd).output().unwrap();
    (
        status.code().unwrap_or(-1),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

#[test]
fn task_succeeds_under_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(
        &["task", "Put the pink cube into the white box", "--scene", "level1", "--planner", "template"],
        dir.path(),
    );
    assert_eq!(code, 0, "{out}{err}");
    assert_eq!(out.lines().filter(|l| l.ends_with(": Succeeded")).count(), 5, "{out}");
}

#[test]
fn missing_object_interrupts_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(
        &["task", "Put the pink cube into the white box", "--scene", "level1", "--without", "pink cube"],
        dir.path(),
    );
    assert_eq!(code, 2);
    assert!(out.contains("Interrupted: pink cube not detected"), "{out}");
    assert!(!out.contains("Grasp"), "later subtasks must not run: {out}");
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["task", "Put the pink cube into the white box", "--planner", "oracle"][..],
        &["bench", "--trials", "0"],
        &["bench", "--levels", "VI", "--trials", "1"],
        &["longhorizon", "--suite", "4"],
        &["task", "Put the pink cube into the white box", "--scene", "nowhere.toml"],
        &["frobnicate"],
    ] {
        let (code, _, err) = run(args, dir.path());
        assert_eq!(code, 64, "{args:?}: {err}");
    }
}

#[test]
fn bench_is_reproducible_and_config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |path: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    for name in ["a.jsonl", "b.jsonl"] {
        let (code, out, err) = run(&["bench", "--levels", "I,III", "--trials", "4", "--seed", "9", "--out", name], dir.path());
        assert_eq!(code, 0, "{out}{err}");
    }
    let (a, b) = (strip(&dir.path().join("a.jsonl")), strip(&dir.path().join("b.jsonl")));
    assert_eq!(a, b);
    let trials = a.iter().filter(|r| r["record"] == "trial").count();
    assert_eq!(trials, 8);
    for level in a.iter().filter(|r| r["record"] == "level") {
        assert_eq!(level["trials"], level["successes"].as_u64().unwrap() + level["failures"].as_u64().unwrap());
    }

    std::fs::write(dir.path().join("bench.toml"), "trials = 2\nlevels = \"II\"\n").unwrap();
    let (code, _, err) = run(
        &["bench", "--levels", "I", "--trials", "5", "--config", "bench.toml", "--out", "c.jsonl"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let c = strip(&dir.path().join("c.jsonl"));
    let levels: Vec<&str> = c.iter().filter(|r| r["record"] == "trial").map(|r| r["level"].as_str().unwrap()).collect();
    assert_eq!(levels, vec!["II", "II"]);
}

#[test]
fn impassable_suite_fails_at_the_first_move() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["longhorizon", "--suite", "1", "--trials", "2", "--impassable"], dir.path());
    assert_eq!(code, 2, "{out}");
    let trials: Vec<&str> = out.lines().filter(|l| l.starts_with("trial")).collect();
    assert_eq!(trials.len(), 2);
    for t in trials {
        assert!(t.contains("Failed") && t.contains("at Move through <object>"), "{t}");
    }
}

#[test]
fn stats_on_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let (code, _, err) = run(&["data", "stats", "empty"], dir.path());
    assert_ne!(code, 0);
    assert!(err.contains("no episodes found"), "{err}");
}

fn tool(s: &RobotState) -> (f64, f64) {
    match s.variant {
        RobotVariant::Ep => (s.arm_u, s.arm_v),
        RobotVariant::S1 => (s.gimbal_yaw, s.gimbal_pitch),
    }
}

#[test]
fn data_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let (code, out, err) = run(args, d);
        assert_eq!(code, 0, "{args:?}\n{out}{err}");
        out
    };
    ok(&["data", "record", "--source", "all", "--runs", "1", "--out", "eps"]);
    let stats = ok(&["data", "stats", "eps"]);
    assert!(stats.contains("Move to <object>") && stats.contains("dyaw"), "{stats}");
    ok(&["data", "segment", "eps", "clips.jsonl"]);
    ok(&["data", "relabel", "--k", "10", "clips.jsonl", "rel.jsonl"]);

    // Every target is the pose change to the frame ten ahead (or the last),
    // computed here directly from the recorded states.
    let clips: Vec<Clip> = read_jsonl(&d.join("clips.jsonl")).unwrap();
    let rel: Vec<RelClip> = read_jsonl(&d.join("rel.jsonl")).unwrap();
    let long: Vec<&Clip> = clips.iter().filter(|c| c.frames.len() > 10).collect();
    assert_eq!(long.len(), rel.len());
    assert!(!rel.is_empty());
    for (c, r) in long.iter().zip(&rel) {
        let n = c.frames.len();
        assert_eq!(r.steps.len(), n);
        for (t, s) in r.steps.iter().enumerate() {
            let j = (t + 10).min(n - 1);
            let (a, b) = (&c.frames[t].state, &c.frames[j].state);
            let (dxw, dyw) = (b.x - a.x, b.y - a.y);
            let dx = a.yaw.cos() * dxw + a.yaw.sin() * dyw;
            let dy = -a.yaw.sin() * dxw + a.yaw.cos() * dyw;
            let ((ua, va), (ub, vb)) = (tool(a), tool(b));
            let du = if a.variant == RobotVariant::S1 { wrap_angle(ub - ua) } else { ub - ua };
            assert!((s.action.dx - dx).abs() < 1e-9);
            assert!((s.action.dy - dy).abs() < 1e-9);
            assert!(wrap_angle(s.action.dyaw - (b.yaw - a.yaw)).abs() < 1e-9);
            assert!((s.action.du - du).abs() < 1e-9);
            assert!((s.action.dv - (vb - va)).abs() < 1e-9);
            assert_eq!(s.action.stop, j == n - 1);
        }
    }

    ok(&["data", "augment", "--ratio", "0.1", "rel.jsonl", "aug.jsonl"]);
    let aug: Vec<RelClip> = read_jsonl(&d.join("aug.jsonl")).unwrap();
    for a in &aug {
        let stops = a.stop_count() as f64;
        assert!(stops / a.steps.len() as f64 >= 0.1 - 1e-12);
    }
    let out = ok(&["data", "tokenize", "aug.jsonl", "sft.jsonl", "--fit", "--codec-out", "codec.toml"]);
    assert!(out.contains("samples"));
    assert!(d.join("codec.toml").is_file());
    let (code, _, _) = run(&["data", "tokenize", "aug.jsonl", "sft2.jsonl"], d);
    assert_eq!(code, 2, "tokenizing without a codec is rejected");

    let out = ok(&["data", "split", "--root", "eps", "--episodes", "5", "--skills", "5", "--seed", "1", "--out", "mini.json"]);
    assert!(out.contains("5 episodes across 5 skills"), "{out}");
    let first = std::fs::read_to_string(d.join("mini.json")).unwrap();
    ok(&["data", "split", "--root", "eps", "--episodes", "5", "--skills", "5", "--seed", "1", "--out", "mini.json"]);
    assert_eq!(first, std::fs::read_to_string(d.join("mini.json")).unwrap());
    let (code, _, err) = run(&["data", "split", "--root", "eps", "--episodes", "200", "--skills", "5"], d);
    assert_eq!(code, 2, "too few episodes per skill: {err}");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(extra: &[&str], cwd: &Path) -> (Server, Vec<String>) {
    let mut child = bin()
        .args(["serve", "--bus", "127.0.0.1:0", "--bridge", "127.0.0.1:0", "--inference", "127.0.0.1:0"])
        .args(extra)
        .current_dir(cwd)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut r = BufReader::new(child.stdout.take().unwrap());
    let lines = (0..3)
        .map(|_| {
            let mut l = String::new();
            r.read_line(&mut l).unwrap();
            l.trim().to_string()
        })
        .collect();
    (Server(child), lines)
}

#[test]
fn serve_reports_three_endpoints_and_injects_latency() {
    let dir = tempfile::tempdir().unwrap();
    let (_srv, lines) = serve(&["--latency-ms", "100"], dir.path());
    let names: Vec<&str> = lines.iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, vec!["bridge", "bus", "inference"]);
    let inference = lines[2].split("tcp://").nth(1).unwrap().parse().unwrap();

    let scene = level_scene(Level::I, 1);
    let world = World::spawn(&scene.spec, 1).unwrap();
    let req = InferenceRequest {
        prompt: format!("Move to {}", scene.object),
        snapshot: world.camera_view(1).unwrap(),
        state: world.robot(1).unwrap().clone(),
    };
    let mut client = TcpInferenceClient::new(inference);
    for _ in 0..3 {
        let t = Instant::now();
        client.infer(&req).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(200), "{:?}", t.elapsed());
    }
}

#[test]
fn serve_fails_cleanly_on_a_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let out = bin()
        .args(["serve", "--bus", &addr, "--bridge", "127.0.0.1:0", "--inference", "127.0.0.1:0"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
}
