//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillmatrix::bench::{run_levels, run_suite};
use skillmatrix::bus::Bus;
use skillmatrix::latency::{DelayLine, Latency, LatencyModel};
use skillmatrix_core::bench::{
    level_scene, Level, Suite, TrialConfig, DISTRACTORS, SEEN_OBJECTS, UNSEEN_EASY_OBJECTS, UNSEEN_HARD_OBJECTS,
};
use skillmatrix_core::codec::{decode_action, encode_action, Action7, CodecConfig, TokenSeq};
use skillmatrix_core::control::{ControlSignal, GripperCommand, Hat, TeleopInput};
use skillmatrix_core::data::{
    augment_stop_frames, min_stop_frames, relabel_interval, split, to_relative, Clip, Frame, Segment, SplitSpec,
};
use skillmatrix_core::detect::{GroundTruthDetector, NoiseModel};
use skillmatrix_core::planner::{default_skill_list, Planner, TemplatePlanner};
use skillmatrix_core::scheduler::{check, run_task, Stack, SubtaskStatus};
use skillmatrix_core::sim::{
    HitReport, ImuReading, ObjectFlags, ObjectKind, Ramp, RobotState, RobotVariant, SceneObject, SceneSnapshot,
    SimParams, World,
};
use skillmatrix_core::skills::{
    climb, search, shoot, InferenceRequest, InferenceResponse, OraclePolicy, Robot, SimRobot, SkillConfig,
    SkillStatus,
};
use skillmatrix_core::wire::{encode_frame, BusMessage, Envelope, Message, Payload, RecordCommand};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

// ---------------------------------------------------------------- codec

fn codec_round_trip() -> Outcome {
    let cfg = CodecConfig::default();
    let ranges = cfg.ranges.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    let started = Instant::now();
    let n = 10_000;
    let mut worst = [0.0f64; 5];
    for _ in 0..n {
        let v: Vec<f64> = ranges.iter().map(|r| rng.random_range(r.lo..=r.hi)).collect();
        let a = Action7 {
            stop: rng.random(),
            dx: v[0],
            dy: v[1],
            dyaw: v[2],
            du: v[3],
            dv: v[4],
            gripper: rng.random(),
        };
        let back = decode_action(&encode_action(&a, &cfg).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
        ensure(back.stop == a.stop && back.gripper == a.gripper, || format!("boolean mismatch for {a:?}"))?;
        let got = [back.dx, back.dy, back.dyaw, back.du, back.dv];
        for i in 0..5 {
            let err = (got[i] - v[i]).abs();
            let bound = (ranges[i].hi - ranges[i].lo) / 512.0;
            ensure(err <= bound + 1e-15, || format!("dim {i}: error {err} > {bound} for {}", v[i]))?;
            worst[i] = worst[i].max(err / bound);
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    let w = worst.iter().copied().fold(0.0, f64::max);
    Ok(format!("{n} actions, worst error {w:.3} of bound, {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn token_vocabulary() -> Outcome {
    let cfg = CodecConfig::default();
    let ranges = cfg.ranges.as_array();
    let (lo, hi) = (cfg.base_vocab, cfg.base_vocab + 256);
    ensure(cfg.bins == 256, || format!("{} bins", cfg.bins))?;
    let mut seen: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); 7];
    for b in 0..256u32 {
        let mut v = [0.0; 5];
        for i in 0..5 {
            let r = ranges[i];
            v[i] = r.lo + (b as f64 + 0.5) * (r.hi - r.lo) / 256.0;
        }
        for (stop, gripper) in [(false, false), (true, true)] {
            let a = Action7 {
                stop,
                dx: v[0],
                dy: v[1],
                dyaw: v[2],
                du: v[3],
                dv: v[4],
                gripper,
            };
            let TokenSeq(t) = encode_action(&a, &cfg).map_err(|e| e.to_string())?;
            for (pos, id) in t.iter().enumerate() {
                ensure(*id >= lo && *id < hi, || format!("token {id} at {pos} outside [{lo}, {hi})"))?;
                seen[pos].insert(*id);
            }
            for i in 0..5 {
                ensure(t[i + 1] == lo + b, || format!("bin {b} of dim {i} encoded as {}", t[i + 1] - lo))?;
            }
        }
    }
    for (pos, s) in seen.iter().enumerate().skip(1).take(5) {
        ensure(s.len() == 256, || format!("dim {pos} produced {} distinct ids", s.len()))?;
    }
    Ok(format!("256 bins x 5 dims map one-to-one onto [{lo}, {hi}); no base ids emitted"))
}

// -------------------------------------------------------------- planner

fn planner_fidelity() -> Outcome {
    let skills = default_skill_list();
    let plan = TemplatePlanner
        .plan("Put the red cola can into the white box", &skills)
        .map_err(|e| e.to_string())?;
    let expected = [
        "Move to red cola can",
        "Grasp red cola can",
        "Move to white box",
        "Position red cola can over the white box",
        "Release red cola can",
    ];
    ensure(plan.texts() == expected, || format!("got {:?}", plan.texts()))?;

    let objects: Vec<&str> = SEEN_OBJECTS
        .iter()
        .chain(&UNSEEN_EASY_OBJECTS)
        .chain(&UNSEEN_HARD_OBJECTS)
        .chain(&DISTRACTORS)
        .map(|i| i.0)
        .collect();
    let containers = ["white box", "drawer", "blue basket", "red bin", "cardboard tray"];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let o = objects[rng.random_range(0..objects.len())];
        let c = containers[rng.random_range(0..containers.len())];
        let plan = TemplatePlanner
            .plan(&format!("Put the {o} into the {c}"), &skills)
            .map_err(|e| e.to_string())?;
        let want = [
            format!("Move to {o}"),
            format!("Grasp {o}"),
            format!("Move to {c}"),
            format!("Position {o} over the {c}"),
            format!("Release {o}"),
        ];
        ensure(plan.texts() == want, || format!("{o} / {c}: {:?}", plan.texts()))?;
        let objs: Vec<Option<&str>> = plan.steps.iter().map(|s| s.object.as_deref()).collect();
        ensure(objs == [Some(o), Some(o), Some(c), Some(o), Some(o)], || format!("objects {objs:?}"))?;
        ensure(plan.steps[3].container.as_deref() == Some(c), || "container not captured".into())?;
    }
    Ok("reference decomposition exact; 20 generated pairs substituted".into())
}

// -------------------------------------------------------------- checker

fn bare_world(variant: RobotVariant, x: f64, y: f64, yaw: f64) -> World {
    let mut w = World::new(SimParams::default());
    w.robots.push(RobotState::new(1, variant, x, y, yaw));
    w
}

#[allow(clippy::too_many_arguments)]
fn add_object(w: &mut World, name: &str, kind: ObjectKind, x: f64, y: f64, z: f64, radius: f64, height: f64) {
    let id = w.objects.len() as u32 + 1;
    w.objects.push(SceneObject {
        id,
        name: name.into(),
        kind,
        x,
        y,
        z,
        radius,
        height,
        facing: 0.0,
        flags: ObjectFlags::default(),
    });
}

fn in_view(p: &SimParams, rx: f64, ry: f64, ryaw: f64, ox: f64, oy: f64) -> bool {
    let (dx, dy) = (ox - rx, oy - ry);
    let range = dx.hypot(dy);
    range > 0.0 && range <= p.max_detection_range && wrap(dy.atan2(dx) - ryaw).abs() <= p.fov / 2.0
}

fn checker_gate() -> Outcome {
    let skills = default_skill_list();
    let p = SimParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut passes = 0;
    for i in 0..200 {
        let (rx, ry, ryaw) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-PI..PI));
        let item = SEEN_OBJECTS[rng.random_range(0..SEEN_OBJECTS.len())];
        let (ox, oy) = (rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0));
        let mut w = bare_world(RobotVariant::Ep, rx, ry, ryaw);
        add_object(&mut w, item.0, item.1, ox, oy, 0.0, item.2, item.3);
        let d = DISTRACTORS[i % DISTRACTORS.len()];
        add_object(&mut w, d.0, d.1, rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0), 0.0, d.2, d.3);
        let skill = ["Move to <object>", "Grasp <object>", "Release <object>"][i % 3];
        let sub = skills.instantiate(skill, Some(item.0), None).map_err(|e| e.to_string())?;
        let verdict = check(&sub, &skills, &w.camera_view(1).map_err(|e| e.to_string())?, &mut GroundTruthDetector)
            .map_err(|e| e.to_string())?;
        let want = in_view(&p, rx, ry, ryaw, ox, oy);
        ensure(verdict.is_pass() == want, || format!("scene {i}: checker {verdict:?}, predicate {want}"))?;
        passes += usize::from(want);
    }

    let mut halted = 0;
    for seed in 0..50u64 {
        let level = Level::ALL[seed as usize % 5];
        let scene = level_scene(level, seed);
        let mut spec = scene.spec.clone();
        spec.objects.retain(|o| o.name != scene.object);
        let world = Rc::new(RefCell::new(World::spawn(&spec, seed).map_err(|e| e.to_string())?));
        let mut robot = SimRobot::new(world.clone(), 1).map_err(|e| e.to_string())?;
        let mut oracle = OraclePolicy::new(world.clone(), skills.clone(), CodecConfig::default());
        let stack = Stack {
            robot: &mut robot,
            client: &mut oracle,
            detector: &mut GroundTruthDetector,
            codec: &CodecConfig::default(),
            config: &SkillConfig::default(),
        };
        let (_, report) = run_task(&scene.task, &mut TemplatePlanner, &skills, stack, &mut ()).map_err(|e| e.to_string())?;
        let first = &report.subtasks[0];
        ensure(report.subtasks.len() == 1, || format!("seed {seed}: {} subtasks ran", report.subtasks.len()))?;
        ensure(
            first.status == SubtaskStatus::Interrupted(format!("{} not detected", scene.object)) && first.steps == 0,
            || format!("seed {seed}: {first:?}"),
        )?;
        ensure(world.borrow().tick == 0, || format!("seed {seed}: world advanced"))?;
        halted += 1;
    }
    Ok(format!("200 scenes ({passes} visible), 0 mismatches; {halted}/50 absent-object tasks halted before motion"))
}

// ----------------------------------------------------------- hybrid skills

/// Records the ground-truth view at the moment of firing and the total
/// chassis rotation.
struct Probe<R> {
    inner: R,
    target: String,
    fire_error: Option<(f64, f64)>,
    turned: f64,
}

impl<R: Robot> Probe<R> {
    fn new(inner: R, target: &str) -> Self {
        Probe {
            inner,
            target: target.into(),
            fire_error: None,
            turned: 0.0,
        }
    }
}

impl<R: Robot> Robot for Probe<R> {
    fn params(&self) -> SimParams {
        self.inner.params()
    }
    fn state(&self) -> RobotState {
        self.inner.state()
    }
    fn observe(&self) -> SceneSnapshot {
        self.inner.observe()
    }
    fn imu(&self) -> ImuReading {
        self.inner.imu()
    }
    fn distance(&self) -> f64 {
        self.inner.distance()
    }
    fn apply(&mut self, s: &ControlSignal) -> Option<HitReport> {
        if s.fire {
            let p = self.inner.params();
            let view = self.inner.observe();
            self.fire_error = view.detections.iter().find(|d| d.name == self.target).map(|d| {
                let (u, v) = ((d.bbox.x0 + d.bbox.x1) / 2.0, (d.bbox.y0 + d.bbox.y1) / 2.0);
                (u - p.image_width / 2.0, v - p.image_height / 2.0)
            });
        }
        let before = self.inner.state().yaw;
        let r = self.inner.apply(s);
        self.turned += wrap(self.inner.state().yaw - before).abs();
        r
    }
    fn tick(&self) -> u64 {
        self.inner.tick()
    }
}

fn range_world(d: f64, gimbal_yaw: f64, gimbal_pitch: f64) -> World {
    let mut w = bare_world(RobotVariant::S1, 0.0, 0.0, 0.0);
    w.robots[0].gimbal_yaw = gimbal_yaw;
    w.robots[0].gimbal_pitch = gimbal_pitch;
    let z = w.params.gimbal_height - 0.1;
    add_object(&mut w, "target", ObjectKind::TargetBoard, d, 0.0, z, 0.05, 0.2);
    w
}

fn shoot_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst_px = 0.0f64;
    let mut worst_ticks = 0;
    for i in 0..50 {
        let mag = deg(rng.random_range(0.0..=30.0));
        let dir = rng.random_range(0.0..2.0 * PI);
        let d = rng.random_range(1.5..3.0);
        let shared = Rc::new(RefCell::new(range_world(d, mag * dir.cos(), mag * dir.sin())));
        let mut r = Probe::new(SimRobot::new(shared.clone(), 1).map_err(|e| e.to_string())?, "target");
        let out = shoot("target", &mut r, &mut GroundTruthDetector, &SkillConfig::default());
        ensure(out.succeeded(), || format!("offset {i} ({:.1} deg at {d:.2} m): {out:?}", mag.to_degrees()))?;
        ensure(out.steps <= 200, || format!("offset {i}: {} ticks", out.steps))?;
        let (eu, ev) = r.fire_error.ok_or_else(|| format!("offset {i}: target not in view when firing"))?;
        ensure(eu.abs() < 8.0 && ev.abs() < 8.0, || format!("offset {i}: bbox error ({eu:.2}, {ev:.2}) px"))?;
        ensure(shared.borrow().objects[0].flags.knocked_down, || format!("offset {i}: target standing"))?;
        worst_px = worst_px.max(eu.abs()).max(ev.abs());
        worst_ticks = worst_ticks.max(out.steps);
    }

    let p = SimParams::default();
    let t = 3.0 / p.projectile_speed;
    let drop = 0.5 * p.gravity * t * t;
    ensure((drop - 0.065).abs() < 0.001 && drop > 0.05, || format!("drop {drop}"))?;
    let mut cfg = SkillConfig::default();
    cfg.shoot.compensate = false;
    let shared = Rc::new(RefCell::new(range_world(3.0, deg(5.0), 0.0)));
    let mut r = SimRobot::new(shared.clone(), 1).map_err(|e| e.to_string())?;
    let out = shoot("target", &mut r, &mut GroundTruthDetector, &cfg);
    ensure(out.status == SkillStatus::Failed("missed".into()), || format!("uncompensated: {out:?}"))?;
    let report = shared.borrow_mut().fire_blaster(1).map_err(|e| e.to_string())?;
    ensure(report.hit.is_none(), || "second uncompensated shot hit".into())?;
    ensure((report.vertical_error + drop).abs() < 3e-3, || format!("vertical error {}", report.vertical_error))?;
    Ok(format!(
        "50/50 hits, worst bbox error {worst_px:.2} px, worst {worst_ticks} ticks; uncompensated 3 m shot lands {:.3} m low",
        -report.vertical_error
    ))
}

fn climb_termination() -> Outcome {
    let p = SimParams::default();
    let mut max_pitch = 0.0f64;
    for i in 0..20 {
        let angle = 5.0 + 15.0 * i as f64 / 19.0;
        let mut w = bare_world(RobotVariant::Ep, 0.0, 0.0, 0.0);
        w.ramp = Some(Ramp {
            x: 0.4,
            y: 0.0,
            heading: 0.0,
            length: 1.0,
            width: 1.2,
            angle: deg(angle),
            platform_length: 2.0,
        });
        let shared = Rc::new(RefCell::new(w));
        let mut r = SimRobot::new(shared.clone(), 1).map_err(|e| e.to_string())?;
        let out = climb(&mut r, &SkillConfig::default());
        ensure(out.succeeded(), || format!("{angle:.2} deg: {out:?}"))?;
        let w = shared.borrow();
        let s = w.robot(1).map_err(|e| e.to_string())?;
        ensure(s.pitch.abs() < deg(0.5), || format!("{angle:.2} deg: final pitch {}", s.pitch.to_degrees()))?;
        // Chassis center on the platform, checked against the ramp geometry.
        let ramp = w.ramp.unwrap();
        let (ax, ay) = (s.x - ramp.x, s.y - ramp.y);
        let along = ax * ramp.heading.cos() + ay * ramp.heading.sin();
        let across = -ax * ramp.heading.sin() + ay * ramp.heading.cos();
        let on = along >= ramp.length && along <= ramp.length + ramp.platform_length && across.abs() <= ramp.width / 2.0;
        ensure(on, || format!("{angle:.2} deg: chassis at ({along:.3}, {across:.3}) not on platform"))?;
        max_pitch = max_pitch.max(s.pitch.abs().to_degrees());
    }
    let cfg = SkillConfig {
        timeout_s: 3.0,
        ..SkillConfig::default()
    };
    let mut r = SimRobot::new(Rc::new(RefCell::new(bare_world(RobotVariant::Ep, 0.0, 0.0, 0.0))), 1)
        .map_err(|e| e.to_string())?;
    let out = climb(&mut r, &cfg);
    let limit = (cfg.timeout_s / p.dt).round() as u64;
    ensure(
        out.status == SkillStatus::Failed("no ramp engaged".into()) && out.steps == limit,
        || format!("flat ground: {out:?}"),
    )?;
    Ok(format!("20 gradients 5-20 deg on platform, max final pitch {max_pitch:.3} deg; flat ground fails at {limit} ticks"))
}

fn search_bound() -> Outcome {
    let bound = 2.0 * PI * 1.1;
    let mut worst = 0.0f64;
    for k in 0..36 {
        let b = deg(10.0 * k as f64);
        let mut w = bare_world(RobotVariant::Ep, 0.0, 0.0, 0.0);
        add_object(&mut w, "red can", ObjectKind::Can, 2.0 * b.cos(), 2.0 * b.sin(), 0.0, 0.033, 0.12);
        let mut r = Probe::new(SimRobot::new(Rc::new(RefCell::new(w)), 1).map_err(|e| e.to_string())?, "red can");
        let out = search("red can", &mut r, &mut GroundTruthDetector, &SkillConfig::default());
        ensure(out.succeeded(), || format!("bearing {} deg: {out:?}", 10 * k))?;
        ensure(r.turned < bound, || format!("bearing {} deg: turned {}", 10 * k, r.turned))?;
        worst = worst.max(r.turned);
    }
    let mut r = Probe::new(
        SimRobot::new(Rc::new(RefCell::new(bare_world(RobotVariant::Ep, 0.0, 0.0, 0.7))), 1).map_err(|e| e.to_string())?,
        "red can",
    );
    let out = search("red can", &mut r, &mut GroundTruthDetector, &SkillConfig::default());
    ensure(out.status == SkillStatus::Failed("not found".into()), || format!("absent: {out:?}"))?;
    ensure((r.turned - bound).abs() < 1e-9, || format!("absent target swept {} rad, expected {bound}", r.turned))?;
    Ok(format!("36 bearings found, max rotation {:.3} of {:.3} rad; absent target fails after {:.4} rad", worst, bound, r.turned))
}

// ------------------------------------------------------------ benchmark

fn benchmark() -> Outcome {
    let started = Instant::now();
    let clean = run_levels(&Level::ALL, 100, 2024, &TrialConfig::default());
    let noisy_cfg = TrialConfig {
        noise: NoiseModel {
            miss_probability: 0.3,
            jitter_px: 0.0,
        },
        ..TrialConfig::default()
    };
    let noisy = run_levels(&Level::ALL, 100, 2024, &noisy_cfg);
    let elapsed = started.elapsed();
    let mut line = Vec::new();
    for (c, n) in clean.report.levels.iter().zip(&noisy.report.levels) {
        ensure(c.trials == 100 && c.trials == c.successes + c.failures, || format!("level {} totals", c.level))?;
        let need = if c.level == "I" { 100 } else { 95 };
        ensure(c.successes >= need, || format!("level {}: {}/100 ({:?})", c.level, c.successes, c.failures_by_subtask))?;
        ensure(n.successes < c.successes, || format!("level {}: miss 0.3 gives {} vs {}", c.level, n.successes, c.successes))?;
        line.push(format!("{} {}->{}", c.level, c.successes, n.successes));
    }
    let again = run_levels(&[Level::III], 100, 2024, &TrialConfig::default());
    ensure(again.trials[0] == clean.trials[2], || "rerun with the same seed differs".into())?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{} (clean->miss 0.3), {:.1} s", line.join(", "), elapsed.as_secs_f64()))
}

fn contained_in(w: &World, object: &str, container: &str) -> bool {
    let ids: Vec<u32> = w.objects.iter().filter(|o| o.name == container).map(|o| o.id).collect();
    w.objects
        .iter()
        .filter(|o| o.name == object)
        .any(|o| o.flags.held_by.is_none() && o.flags.contained_in.is_some_and(|c| ids.contains(&c)))
}

fn long_horizon() -> Outcome {
    let mut lines = Vec::new();
    for suite in Suite::ALL {
        let (run, trials) = run_suite(suite, 20, 7, true, &TrialConfig::default());
        for t in &trials {
            let r = &t.result;
            ensure(r.success, || format!("suite {} trial {}: {r:?}", suite.number(), r.index))?;
            ensure(r.subtasks_run >= 5, || format!("suite {} ran {} subtasks", suite.number(), r.subtasks_run))?;
        }
        ensure(run.report.levels[0].successes == 20, || "report disagrees with trials".into())?;
        lines.push(format!("suite {}: 20/20 ({} subtasks)", suite.number(), trials[0].result.subtasks_run));
    }
    // World-state predicates, checked from object flags and the event log.
    for seed in 0..5u32 {
        let (r, w) = skillmatrix_core::bench::run_suite_trial(Suite::Ramp, 7, seed, true, &TrialConfig::default());
        ensure(r.success && contained_in(&w, "green can", "drawer"), || format!("suite 2 seed {seed}: can not in drawer"))?;
        let (r, w) = skillmatrix_core::bench::run_suite_trial(Suite::Drawer, 7, seed, true, &TrialConfig::default());
        let states: Vec<&str> = w
            .events
            .iter()
            .filter_map(|e| match e.kind {
                skillmatrix_core::sim::WorldEventKind::DrawerOpened { .. } => Some("open"),
                skillmatrix_core::sim::WorldEventKind::DrawerClosed { .. } => Some("closed"),
                _ => None,
            })
            .collect();
        let drawer = w.objects.iter().find(|o| o.name == "drawer").ok_or("no drawer")?;
        ensure(
            r.success
                && states == ["open", "closed"]
                && drawer.flags.extension <= w.params.drawer_closed_extension
                && contained_in(&w, "purple cube", "drawer"),
            || format!("suite 3 seed {seed}: states {states:?}, extension {}", drawer.flags.extension),
        )?;
    }
    let (_, trials) = run_suite(Suite::Obstacles, 20, 7, false, &TrialConfig::default());
    for t in &trials {
        let r = &t.result;
        let at_move = matches!(&r.failed_at, Some((skill, SubtaskStatus::Failed(_) | SubtaskStatus::Timeout)) if skill == "Move through <object>");
        ensure(!r.success && at_move && r.subtasks_run == 1, || format!("impassable trial {}: {r:?}", r.index))?;
    }
    lines.push("impassable suite 1 fails at the first Move in 20/20".into());
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- data

fn state(variant: RobotVariant, x: f64, y: f64, yaw: f64, u: f64, v: f64) -> RobotState {
    let mut s = RobotState::new(1, variant, x, y, yaw);
    match variant {
        RobotVariant::Ep => {
            s.arm_u = u;
            s.arm_v = v;
        }
        RobotVariant::S1 => {
            s.gimbal_yaw = u;
            s.gimbal_pitch = v;
        }
    }
    s
}

fn synthetic_clip(rng: &mut ChaCha8Rng, i: usize) -> Clip {
    let variant = if i % 2 == 0 { RobotVariant::Ep } else { RobotVariant::S1 };
    let n = rng.random_range(11..80);
    let (mut x, mut y, mut yaw) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-PI..PI));
    let (mut u, mut v) = (0.2, 0.1);
    let mut frames = Vec::new();
    for t in 0..n {
        frames.push(Frame {
            tick: 1 + t as u64,
            state: state(variant, x, y, wrap(yaw), u, v),
            snapshot: SceneSnapshot::empty(t as f64 / 30.0),
            action: None,
        });
        x += rng.random_range(-0.02..0.02);
        y += rng.random_range(-0.02..0.02);
        yaw += rng.random_range(-0.1..0.1);
        u = wrap(u + rng.random_range(-0.05..0.05));
        v += rng.random_range(-0.01..0.01);
    }
    Clip {
        episode: format!("synthetic-{i}"),
        variant,
        segment: Segment::new(1, n as u64, "Move to <object>", Some("red can")),
        frames,
    }
}

fn data_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let k = 10;
    let mut targets = 0;
    for i in 0..100 {
        let clip = synthetic_clip(&mut rng, i);
        let rel = relabel_interval(&to_relative(&clip).map_err(|e| e.to_string())?, k).map_err(|e| e.to_string())?;
        let n = clip.frames.len();
        ensure(rel.steps.len() == n, || format!("clip {i}: {} targets for {n} frames", rel.steps.len()))?;
        for (t, s) in rel.steps.iter().enumerate() {
            // Brute force: the pose change straight from frame t to frame t+k.
            let j = (t + k).min(n - 1);
            let (a, b) = (&clip.frames[t].state, &clip.frames[j].state);
            let (wx, wy) = (b.x - a.x, b.y - a.y);
            let dx = a.yaw.cos() * wx + a.yaw.sin() * wy;
            let dy = -a.yaw.sin() * wx + a.yaw.cos() * wy;
            let (du, dv) = match a.variant {
                RobotVariant::Ep => (b.arm_u - a.arm_u, b.arm_v - a.arm_v),
                RobotVariant::S1 => (wrap(b.gimbal_yaw - a.gimbal_yaw), b.gimbal_pitch - a.gimbal_pitch),
            };
            let got = &s.action;
            let errs = [got.dx - dx, got.dy - dy, wrap(got.dyaw - (b.yaw - a.yaw)), wrap(got.du - du), got.dv - dv];
            ensure(errs.iter().all(|e| e.abs() < 1e-9), || format!("clip {i} step {t}: errors {errs:?}"))?;
            ensure(got.stop == (j == n - 1), || format!("clip {i} step {t}: stop flag"))?;
            targets += 1;
        }
    }

    for case in 0..100 {
        let non_stop = rng.random_range(1..300usize);
        let have = rng.random_range(1..4usize);
        let ratio = rng.random_range(0.01..0.6);
        let brute = (have..).find(|s| *s as f64 / (non_stop + s) as f64 >= ratio).unwrap();
        let got = min_stop_frames(non_stop, have, ratio);
        ensure(got == brute, || format!("case {case}: {got} stop frames, minimum is {brute}"))?;
        // Same answer through the clip-level transform.
        let mut steps = Vec::new();
        for t in 0..non_stop + have {
            steps.push(skillmatrix_core::data::Step {
                tick: t as u64,
                action: Action7 {
                    stop: t >= non_stop,
                    dx: 0.01,
                    ..Action7::zero()
                },
            });
        }
        let rel = skillmatrix_core::data::RelClip {
            episode: "aug".into(),
            variant: RobotVariant::Ep,
            segment: Segment::new(0, (non_stop + have) as u64, "Move to <object>", Some("x")),
            steps,
        };
        let aug = augment_stop_frames(&rel, ratio).map_err(|e| e.to_string())?;
        ensure(aug.stop_count() == brute && aug.steps.len() == non_stop + brute, || {
            format!("case {case}: augmented to {} stops", aug.stop_count())
        })?;
    }

    let skill_names = ["move", "grasp", "position", "release", "open", "close", "climb", "search"];
    let mut episodes = Vec::new();
    for i in 0..1000 {
        let skill = skill_names[(i * 7 + i / 13) % skill_names.len()];
        episodes.push((format!("ep-{i:04}"), skill.to_string()));
    }
    let spec = SplitSpec {
        episodes: 200,
        skills: 5,
        seed: 1,
        names: Vec::new(),
    };
    let a = split(&episodes, &spec).map_err(|e| e.to_string())?;
    let b = split(&episodes, &spec).map_err(|e| e.to_string())?;
    ensure(a == b, || "same seed gave different splits".into())?;
    let unique: BTreeSet<&String> = a.mini.iter().collect();
    ensure(a.mini.len() == 200 && unique.len() == 200, || format!("{} episodes, {} unique", a.mini.len(), unique.len()))?;
    let owner: BTreeMap<&str, &str> = episodes.iter().map(|(i, s)| (i.as_str(), s.as_str())).collect();
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for id in &a.mini {
        *per.entry(owner[id.as_str()]).or_default() += 1;
    }
    ensure(per.len() == 5 && per.values().all(|n| *n == 40), || format!("per skill {per:?}"))?;
    let other = split(&episodes, &SplitSpec { seed: 2, ..spec }).map_err(|e| e.to_string())?;
    ensure(other.mini != a.mini, || "seed has no effect".into())?;
    Ok(format!("{targets} relabeled targets match; 100 augmentation cases minimal; mini split 200 = 5 x 40, deterministic"))
}

// ----------------------------------------------------------- bus & wire

fn bus_fifo() -> Outcome {
    let bus = Bus::new();
    let sub = bus.subscribe("/fifo").map_err(|e| e.to_string())?;
    let (publishers, per) = (8usize, 10_000u64);
    let handles: Vec<_> = (0..publishers)
        .map(|p| {
            let mut pb = bus.publisher(&format!("pub{p}")).unwrap();
            thread::spawn(move || {
                for i in 0..per {
                    pb.publish("/fifo", Payload::Bytes(i.to_le_bytes().to_vec())).unwrap();
                }
            })
        })
        .collect();
    let mut next: BTreeMap<String, u64> = BTreeMap::new();
    let mut last_seq: BTreeMap<String, u64> = BTreeMap::new();
    let total = publishers as u64 * per;
    for _ in 0..total {
        let m = sub.recv_timeout(Duration::from_secs(10)).ok_or("subscriber starved")?;
        let Payload::Bytes(b) = &m.payload else { return Err("wrong payload".into()) };
        let i = u64::from_le_bytes(b[..8].try_into().unwrap());
        let want = next.entry(m.publisher.clone()).or_default();
        ensure(i == *want, || format!("{}: got message {i}, expected {want}", m.publisher))?;
        *want += 1;
        let ls = last_seq.entry(m.publisher.clone()).or_default();
        ensure(m.seq > *ls, || format!("{}: seq {} after {}", m.publisher, m.seq, ls))?;
        *ls = m.seq;
    }
    for h in handles {
        h.join().map_err(|_| "publisher panicked")?;
    }
    ensure(next.len() == publishers && next.values().all(|n| *n == per), || format!("{next:?}"))?;
    Ok(format!("{publishers} publishers x {per} messages, zero reordering"))
}

fn random_message(rng: &mut ChaCha8Rng, world: &World) -> Message {
    let s = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(0..24);
        (0..n).map(|_| char::from_u32(rng.random_range(0x20..0x2FF)).unwrap_or('?')).collect()
    };
    let f = |rng: &mut ChaCha8Rng| -> f64 {
        loop {
            let v = f64::from_bits(rng.random());
            if v.is_finite() {
                return v;
            }
        }
    };
    match rng.random_range(0..11) {
        0 => Message::InferenceRequest(InferenceRequest {
            prompt: s(rng),
            snapshot: world.camera_view(1).unwrap(),
            state: world.robot(1).unwrap().clone(),
        }),
        1 => Message::InferenceResponse(InferenceResponse {
            tokens: (0..rng.random_range(0..8)).map(|_| rng.random()).collect(),
            diagnostic: rng.random::<bool>().then(|| s(rng)),
        }),
        2 => Message::Subscribe { topic: s(rng) },
        3 => Message::Unsubscribe { topic: s(rng) },
        4 => Message::TaskSubmit {
            robot: rng.random(),
            text: s(rng),
        },
        5 => Message::Teleop {
            robot: rng.random(),
            input: TeleopInput {
                timestamp: f(rng),
                stick: [f(rng), f(rng)],
                rotate_left: rng.random(),
                rotate_right: rng.random(),
                hat: [Hat::Center, Hat::Up, Hat::Down, Hat::Left, Hat::Right][rng.random_range(0..5)],
                primary: rng.random(),
            },
        },
        6 => Message::Record(match rng.random_range(0..3) {
            0 => RecordCommand::Start { robot: rng.random() },
            1 => RecordCommand::Stop,
            _ => RecordCommand::Mark {
                start_tick: rng.random(),
                end_tick: rng.random(),
                skill: s(rng),
                object: s(rng),
                valid: rng.random(),
            },
        }),
        7 => Message::Ack,
        8 => Message::Error { message: s(rng) },
        _ => {
            let payload = match rng.random_range(0..6) {
                0 => Payload::State(world.robot(1).unwrap().clone()),
                1 => Payload::Snapshot(world.camera_view(1).unwrap()),
                2 => Payload::Control(ControlSignal {
                    vx: f(rng),
                    vy: f(rng),
                    wz: f(rng),
                    arm_du: f(rng),
                    arm_dv: f(rng),
                    gimbal_dyaw: f(rng),
                    gimbal_dpitch: f(rng),
                    gripper: [GripperCommand::None, GripperCommand::Open, GripperCommand::Close][rng.random_range(0..3)],
                    fire: rng.random(),
                }),
                3 => Payload::Teleop(TeleopInput::default()),
                4 => Payload::Text(s(rng)),
                _ => Payload::Bytes((0..rng.random_range(0..64)).map(|_| rng.random()).collect()),
            };
            Message::Publish(BusMessage {
                topic: s(rng),
                publisher: s(rng),
                seq: rng.random(),
                timestamp: f(rng),
                payload,
            })
        }
    }
}

fn wire_format() -> Outcome {
    let empty = encode_frame(&[], usize::MAX).map_err(|e| e.to_string())?;
    let golden = [0x52, 0x4D, 0x54, 0x58, 0x01, 0x00, 0x00, 0x00, 0x00];
    ensure(empty == golden, || format!("empty frame {empty:02X?}"))?;

    let scene = level_scene(Level::IV, 5);
    let world = World::spawn(&scene.spec, 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut bytes = 0;
    for i in 0..1000 {
        let env = Envelope::new(rng.random(), random_message(&mut rng, &world));
        let frame = env.to_frame().map_err(|e| e.to_string())?;
        let body_len = u32::from_le_bytes(frame[5..9].try_into().unwrap()) as usize;
        ensure(&frame[..5] == b"RMTX\x01" && body_len == frame.len() - 9, || format!("case {i}: bad header"))?;
        let (back, used) = Envelope::from_frame(&frame).map_err(|e| format!("case {i}: {e}"))?;
        ensure(used == frame.len() && back == env, || format!("case {i}: decoded {back:?}"))?;
        ensure(back.to_frame().map_err(|e| e.to_string())? == frame, || format!("case {i}: re-encoding differs"))?;
        bytes += frame.len();
    }
    Ok(format!("golden empty frame matches; 1000 random envelopes ({bytes} bytes) round-trip bit-exact"))
}

fn latency_config() -> Outcome {
    let n = 1000;
    let samples = Arc::new(Mutex::new(Vec::with_capacity(n)));
    let sink = samples.clone();
    let mut line = DelayLine::new(Latency::new(LatencyModel::Constant { ms: 100.0 }, 3), move |sent: Instant| {
        sink.lock().unwrap().push(sent.elapsed().as_secs_f64() * 1000.0);
    });
    for _ in 0..n {
        line.send(Instant::now());
        thread::sleep(Duration::from_micros(500));
    }
    let deadline = Instant::now() + Duration::from_secs(10);
    while samples.lock().unwrap().len() < n && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(10));
    }
    drop(line);
    let s = samples.lock().unwrap();
    ensure(s.len() == n, || format!("{} of {n} delivered", s.len()))?;
    let mean = s.iter().sum::<f64>() / n as f64;
    ensure((mean - 100.0).abs() <= 10.0, || format!("mean {mean:.2} ms"))?;
    Ok(format!("{n} messages, mean delay {mean:.2} ms (100 ms configured)"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("codec round trip", codec_round_trip),
        ("token vocabulary", token_vocabulary),
        ("planner fidelity", planner_fidelity),
        ("checker gate", checker_gate),
        ("shoot convergence", shoot_convergence),
        ("climb termination", climb_termination),
        ("search bound", search_bound),
        ("oracle benchmark", benchmark),
        ("long-horizon suites", long_horizon),
        ("data pipeline", data_pipeline),
        ("bus fifo", bus_fifo),
        ("wire format", wire_format),
    ];
    let mut failed = 0;
    let mut run = |name: &str, f: fn() -> Outcome| {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2} s]");
            }
        }
    };
    for (name, f) in criteria {
        run(name, f);
    }
    run("latency injection", latency_config);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
