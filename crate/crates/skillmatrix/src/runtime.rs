//! The live stack behind `skillmatrix serve`: a simulation driver thread,
//! the bus with its socket endpoints, a latency-injected inference server
//! running the oracle policy, a task runner and the recorder.
//!
//! The driver owns stepping. While no task runs it advances the world at
//! the configured pace with the latest teleop command; while a task runs
//! it steps only on the executor's requests and teleop input is refused.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use serde::{Deserialize, Serialize};
use serde_json::json;
use skillmatrix_core::codec::CodecConfig;
use skillmatrix_core::control::{ControlSignal, TeleopConfig, TeleopInput, TeleopMapper};
use skillmatrix_core::data::{Quality, Segment};
use skillmatrix_core::detect::GroundTruthDetector;
use skillmatrix_core::planner::{default_skill_list, SkillList, SubtaskPlan, TemplatePlanner};
use skillmatrix_core::scheduler::{run_task, QueueEvent, QueueObserver, Stack};
use skillmatrix_core::sim::{HitReport, ImuReading, RobotId, RobotState, SceneSnapshot, SceneSpec, SimParams, World};
use skillmatrix_core::skills::{OraclePolicy, Robot, SkillConfig};
use skillmatrix_core::wire::{Payload, RecordCommand};

use crate::bus::{topics, Bus, Publisher};
use crate::episode::{BusRecorder, EpisodeWriter};
use crate::gateway::{serve_bridge, serve_bus, CommandHandler, Endpoint};
use crate::inference::{serve_inference, Policy, TcpInferenceClient};
use crate::latency::{Latency, LatencyModel};
use crate::remote::RemotePlanner;
use crate::stage::{SharedWorld, StageObserver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PlannerChoice {
    #[default]
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub bus_addr: String,
    pub bridge_addr: String,
    pub inference_addr: String,
    pub latency: LatencyModel,
    /// Simulated seconds per wall second; 0 runs unpaced.
    pub speed: f64,
    pub seed: u64,
    pub record_root: PathBuf,
    pub planner: PlannerChoice,
    pub codec: CodecConfig,
    pub skills: SkillConfig,
    pub teleop: TeleopConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            bus_addr: "127.0.0.1:7400".into(),
            bridge_addr: "127.0.0.1:7401".into(),
            inference_addr: "127.0.0.1:7402".into(),
            latency: LatencyModel::Constant { ms: 0.0 },
            speed: 1.0,
            seed: 1,
            record_root: PathBuf::from("episodes"),
            planner: PlannerChoice::Template,
            codec: CodecConfig::default(),
            skills: SkillConfig::default(),
            teleop: TeleopConfig::default(),
        }
    }
}

type StepRequest = (RobotId, ControlSignal, Sender<Option<HitReport>>);

/// A robot whose ticks are executed by the driver thread.
#[derive(Clone)]
pub struct DriverRobot {
    world: SharedWorld,
    id: RobotId,
    steps: Sender<StepRequest>,
}

impl Robot for DriverRobot {
    fn params(&self) -> SimParams {
        self.world.lock().params
    }
    fn state(&self) -> RobotState {
        self.world.lock().robot(self.id).cloned().expect("robot exists")
    }
    fn observe(&self) -> SceneSnapshot {
        self.world.lock().camera_view(self.id).expect("robot exists")
    }
    fn imu(&self) -> ImuReading {
        self.world.lock().read_imu(self.id).expect("robot exists")
    }
    fn distance(&self) -> f64 {
        self.world.lock().read_distance(self.id).expect("robot exists")
    }
    fn apply(&mut self, signal: &ControlSignal) -> Option<HitReport> {
        let (tx, rx) = bounded(1);
        if self.steps.send((self.id, *signal, tx)).is_err() {
            return None;
        }
        rx.recv().ok().flatten()
    }
    fn tick(&self) -> u64 {
        self.world.lock().tick
    }
}

/// Publishes queue events as JSON text and derives one segment mark per
/// executed subtask.
pub struct TaskEvents {
    publisher: Option<Publisher>,
    task_id: u64,
    plan: Option<SubtaskPlan>,
    pub marks: Vec<Segment>,
    epoch: Instant,
}

impl TaskEvents {
    pub fn new(publisher: Option<Publisher>, task_id: u64) -> Self {
        TaskEvents {
            publisher,
            task_id,
            plan: None,
            marks: Vec::new(),
            epoch: Instant::now(),
        }
    }

    pub fn emit(&mut self, value: serde_json::Value) {
        if let Some(p) = &mut self.publisher {
            let _ = p.publish(topics::TASK_EVENTS, Payload::Text(value.to_string()));
        }
    }
}

impl QueueObserver for TaskEvents {
    fn on_event(&mut self, event: &QueueEvent<'_>) {
        let id = self.task_id;
        let v = match event {
            QueueEvent::Planned(plan) => {
                self.plan = Some((*plan).clone());
                json!({"task": id, "event": "planned", "steps": plan.texts()})
            }
            QueueEvent::Started { index, subtask } => {
                json!({"task": id, "event": "started", "index": index, "text": subtask.text})
            }
            QueueEvent::Checked { index, verdict } => json!({
                "task": id, "event": "checked", "index": index,
                "pass": verdict.is_pass(), "reason": verdict.reason(),
            }),
            QueueEvent::Finished(r) => {
                if r.steps > 0 {
                    let sub = self.plan.as_ref().and_then(|p| p.steps.get(r.index));
                    let start = self.marks.last().map_or(r.start_tick, |m| r.start_tick.max(m.end_tick + 1));
                    if r.end_tick > start {
                        self.marks.push(Segment {
                            start_tick: start,
                            end_tick: r.end_tick,
                            skill: r.skill.clone(),
                            object: sub.and_then(|s| s.object.clone()),
                            container: sub.and_then(|s| s.container.clone()),
                            quality: Quality::Valid,
                            trim_head: 0,
                            trim_tail: 0,
                        });
                    }
                }
                json!({"task": id, "event": "finished", "report": r})
            }
        };
        self.emit(v);
    }

    fn now_ms(&mut self) -> Option<f64> {
        Some(self.epoch.elapsed().as_secs_f64() * 1000.0)
    }
}

struct Recording {
    recorder: BusRecorder,
    marks: Vec<Segment>,
    id: String,
}

struct Shared {
    world: SharedWorld,
    bus: Bus,
    autonomous: AtomicBool,
    teleop: Mutex<(TeleopMapper, TeleopInput, Instant)>,
    tasks: Sender<(u32, String)>,
    recording: Mutex<Option<Recording>>,
    record_root: PathBuf,
    codec: CodecConfig,
}

impl Shared {
    fn status(&self, value: serde_json::Value) {
        if let Ok(mut p) = self.bus.publisher("recorder") {
            let _ = p.publish(topics::RECORD_STATUS, Payload::Text(value.to_string()));
        }
    }
}

struct Handler(Arc<Shared>);

impl CommandHandler for Handler {
    fn submit_task(&self, robot: u32, text: &str) -> Result<(), String> {
        if self.0.world.lock().robot(robot).is_err() {
            return Err(format!("unknown robot {robot}"));
        }
        if self.0.autonomous.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err() {
            return Err("a task is already running".into());
        }
        self.0.tasks.send((robot, text.into())).map_err(|_| {
            self.0.autonomous.store(false, Ordering::SeqCst);
            "task runner stopped".to_string()
        })
    }

    fn teleop(&self, robot: u32, input: TeleopInput) -> Result<(), String> {
        if self.0.autonomous.load(Ordering::SeqCst) {
            return Err("robot is under autonomous control".into());
        }
        if self.0.world.lock().robot(robot).is_err() {
            return Err(format!("unknown robot {robot}"));
        }
        let mut t = self.0.teleop.lock().expect("teleop lock poisoned");
        t.1 = input.clamped();
        t.2 = Instant::now();
        Ok(())
    }

    fn record(&self, cmd: RecordCommand) -> Result<(), String> {
        let s = &self.0;
        let mut rec = s.recording.lock().expect("recording lock poisoned");
        match cmd {
            RecordCommand::Start { robot } => {
                if rec.is_some() {
                    return Err("a recording is already active".into());
                }
                let (variant, dt) = {
                    let w = s.world.lock();
                    let r = w.robot(robot).map_err(|e| e.to_string())?;
                    (r.variant, w.params.dt)
                };
                let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
                let id = format!("ep-{ms}");
                let writer = EpisodeWriter::create(&s.record_root, &id, variant, robot, dt, Some(s.codec))
                    .map_err(|e| e.to_string())?;
                let recorder = BusRecorder::start(&s.bus, robot, writer).map_err(|e| e.to_string())?;
                s.status(json!({"event": "started", "episode": id}));
                *rec = Some(Recording {
                    recorder,
                    marks: Vec::new(),
                    id,
                });
                Ok(())
            }
            RecordCommand::Stop => {
                let r = rec.take().ok_or("no active recording")?;
                let m = r.recorder.stop(r.marks).map_err(|e| e.to_string())?;
                s.status(json!({"event": "stopped", "episode": r.id, "frames": m.frames, "valid": m.valid}));
                Ok(())
            }
            RecordCommand::Mark {
                start_tick,
                end_tick,
                skill,
                object,
                valid,
            } => {
                let r = rec.as_mut().ok_or("no active recording")?;
                let mut m = Segment::new(start_tick, end_tick, &skill, (!object.is_empty()).then_some(object.as_str()));
                if !valid {
                    m.quality = Quality::Discarded;
                }
                if start_tick > end_tick {
                    return Err("mark ends before it starts".into());
                }
                if let Some(o) = r
                    .marks
                    .iter()
                    .find(|o| o.start_tick <= m.end_tick && m.start_tick <= o.end_tick)
                {
                    return Err(format!(
                        "mark [{start_tick}, {end_tick}] overlaps {} [{}, {}]",
                        o.skill, o.start_tick, o.end_tick
                    ));
                }
                r.marks.push(m);
                Ok(())
            }
        }
    }
}

/// The oracle policy behind an inference endpoint.
pub struct OracleHost(pub OraclePolicy<SharedWorld>);

impl Policy for OracleHost {
    fn respond(&mut self, request: &skillmatrix_core::skills::InferenceRequest) -> skillmatrix_core::skills::InferenceResponse {
        self.0.respond(request)
    }
}

pub struct Runtime {
    shared: Arc<Shared>,
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    bus_endpoint: Endpoint,
    bridge_endpoint: Endpoint,
    inference_endpoint: Endpoint,
    task_tx: Option<Sender<(u32, String)>>,
    reports: Receiver<serde_json::Value>,
}

impl Runtime {
    pub fn start(scene: &SceneSpec, cfg: &RuntimeConfig, skills: SkillList) -> Result<Self> {
        let world = SharedWorld::new(World::spawn(scene, cfg.seed).context("spawning scene")?);
        let bus = Bus::new();
        let params = world.lock().params;
        let (task_tx, task_rx) = unbounded::<(u32, String)>();
        let shared = Arc::new(Shared {
            world: world.clone(),
            bus: bus.clone(),
            autonomous: AtomicBool::new(false),
            teleop: Mutex::new((TeleopMapper::new(params, cfg.teleop), TeleopInput::default(), Instant::now())),
            tasks: task_tx.clone(),
            recording: Mutex::new(None),
            record_root: cfg.record_root.clone(),
            codec: cfg.codec,
        });
        let handler: Arc<dyn CommandHandler> = Arc::new(Handler(shared.clone()));
        let policy = OracleHost(OraclePolicy::new(world.clone(), skills.clone(), cfg.codec));
        let inference_endpoint = serve_inference(
            cfg.inference_addr.as_str(),
            Arc::new(Mutex::new(policy)),
            Latency::new(cfg.latency, cfg.seed),
        )
        .with_context(|| format!("binding inference endpoint {}", cfg.inference_addr))?;
        let bus_endpoint =
            serve_bus(cfg.bus_addr.as_str(), bus.clone(), handler.clone()).with_context(|| format!("binding bus endpoint {}", cfg.bus_addr))?;
        let bridge_endpoint = serve_bridge(cfg.bridge_addr.as_str(), bus.clone(), handler)
            .with_context(|| format!("binding bridge endpoint {}", cfg.bridge_addr))?;

        let shutdown = Arc::new(AtomicBool::new(false));
        let (step_tx, step_rx) = unbounded::<StepRequest>();
        let mut threads = Vec::new();
        {
            let shared = shared.clone();
            let shutdown = shutdown.clone();
            let speed = cfg.speed;
            let publisher = bus.publisher("stage")?;
            threads.push(thread::spawn(move || drive(shared, step_rx, publisher, speed, shutdown)));
        }
        let (report_tx, reports) = unbounded();
        {
            let shared = shared.clone();
            let cfg = cfg.clone();
            let addr = inference_endpoint.addr();
            let shutdown = shutdown.clone();
            threads.push(thread::spawn(move || {
                run_tasks(shared, task_rx, step_tx, addr, skills, cfg, report_tx, shutdown)
            }));
        }
        Ok(Runtime {
            shared,
            shutdown,
            threads,
            bus_endpoint,
            bridge_endpoint,
            inference_endpoint,
            task_tx: Some(task_tx),
            reports,
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.shared.bus
    }

    pub fn world(&self) -> &SharedWorld {
        &self.shared.world
    }

    pub fn bus_addr(&self) -> SocketAddr {
        self.bus_endpoint.addr()
    }

    pub fn bridge_addr(&self) -> SocketAddr {
        self.bridge_endpoint.addr()
    }

    pub fn inference_addr(&self) -> SocketAddr {
        self.inference_endpoint.addr()
    }

    pub fn is_autonomous(&self) -> bool {
        self.shared.autonomous.load(Ordering::SeqCst)
    }

    pub fn handler(&self) -> impl CommandHandler {
        Handler(self.shared.clone())
    }

    /// Waits for the next finished task's summary.
    pub fn next_report(&self, timeout: Duration) -> Option<serde_json::Value> {
        self.reports.recv_timeout(timeout).ok()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.task_tx.take();
        if let Ok(mut rec) = self.shared.recording.lock() {
            if let Some(r) = rec.take() {
                let _ = r.recorder.stop(r.marks);
            }
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.bus_endpoint.shutdown();
        self.bridge_endpoint.shutdown();
        self.inference_endpoint.shutdown();
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Teleop input older than this is treated as released.
const TELEOP_HOLD: Duration = Duration::from_millis(500);

fn drive(shared: Arc<Shared>, steps: Receiver<StepRequest>, publisher: Publisher, speed: f64, shutdown: Arc<AtomicBool>) {
    let mut observer = StageObserver::new(publisher);
    let mut cmd = match shared.bus.publisher("controller") {
        Ok(p) => p,
        Err(_) => return,
    };
    let dt = shared.world.lock().params.dt;
    let period = (speed > 0.0).then(|| Duration::from_secs_f64(dt / speed));
    let mut next = Instant::now();
    while !shutdown.load(Ordering::SeqCst) {
        let autonomous = shared.autonomous.load(Ordering::SeqCst);
        let request = if autonomous {
            match steps.recv_timeout(Duration::from_millis(20)) {
                Ok(r) => Some(r),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return,
            }
        } else {
            steps.try_recv().ok()
        };
        if let Some(p) = period {
            let now = Instant::now();
            if next > now {
                thread::sleep(next - now);
            }
            next = next.max(now) + p;
        }
        let (id, signal, reply) = match request {
            Some((id, s, reply)) => (id, s, Some(reply)),
            None => {
                let mut t = shared.teleop.lock().expect("teleop lock poisoned");
                let input = if t.2.elapsed() > TELEOP_HOLD {
                    TeleopInput::default()
                } else {
                    t.1
                };
                // Edge-triggered buttons fire once per input.
                t.1.primary = false;
                let w = shared.world.lock();
                let Some(r) = w.robots.first() else { continue };
                let (id, variant) = (r.id, r.variant);
                drop(w);
                (id, t.0.map(&input, variant), None)
            }
        };
        let (hit, world) = {
            let mut w = shared.world.lock();
            let hit = w.step(&[(id, signal)], dt).into_iter().find(|(r, _)| *r == id).map(|(_, h)| h);
            (hit, w.clone())
        };
        let _ = observer.observe(&world);
        if !signal.is_idle() {
            let _ = cmd.publish_at(&topics::cmd(id), Payload::Control(signal), world.time());
        }
        if let Some(reply) = reply {
            let _ = reply.send(hit);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_tasks(
    shared: Arc<Shared>,
    tasks: Receiver<(u32, String)>,
    steps: Sender<StepRequest>,
    inference: SocketAddr,
    skills: SkillList,
    cfg: RuntimeConfig,
    reports: Sender<serde_json::Value>,
    shutdown: Arc<AtomicBool>,
) {
    let mut next_id = 1u64;
    while !shutdown.load(Ordering::SeqCst) {
        let (robot, text) = match tasks.recv_timeout(Duration::from_millis(50)) {
            Ok(t) => t,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return,
        };
        let id = next_id;
        next_id += 1;
        let mut events = TaskEvents::new(shared.bus.publisher("scheduler").ok(), id);
        let mut robot = DriverRobot {
            world: shared.world.clone(),
            id: robot,
            steps: steps.clone(),
        };
        let mut client = TcpInferenceClient::new(inference);
        let stack = Stack {
            robot: &mut robot,
            client: &mut client,
            detector: &mut GroundTruthDetector,
            codec: &cfg.codec,
            config: &cfg.skills,
        };
        let result = match cfg.planner {
            PlannerChoice::Template => run_task(&text, &mut TemplatePlanner, &skills, stack, &mut events),
            PlannerChoice::Remote => match RemotePlanner::from_env() {
                Ok(mut p) => run_task(&text, &mut p, &skills, stack, &mut events),
                Err(e) => Err(e.into()),
            },
        };
        let summary = match result {
            Ok((_, report)) => json!({
                "task": id, "event": "done", "succeeded": report.succeeded(), "report": report,
            }),
            Err(e) => json!({"task": id, "event": "error", "message": e.to_string()}),
        };
        events.emit(summary.clone());
        shared.autonomous.store(false, Ordering::SeqCst);
        let _ = reports.send(summary);
    }
}

/// Runs with the built-in skill list.
pub fn start_default(scene: &SceneSpec, cfg: &RuntimeConfig) -> Result<Runtime> {
    Runtime::start(scene, cfg, default_skill_list())
}
