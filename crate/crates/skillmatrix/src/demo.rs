//! Headless demonstration recording. The oracle drives a staged world
//! whose telemetry goes over the bus, and every executed subtask is
//! captured as its own single-skill episode.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use skillmatrix_core::bench::{level_scene, suite_scene, trial_seed, Level, Suite};
use skillmatrix_core::codec::CodecConfig;
use skillmatrix_core::control::ControlSignal;
use skillmatrix_core::data::Segment;
use skillmatrix_core::detect::GroundTruthDetector;
use skillmatrix_core::planner::{default_skill_list, SubtaskPlan, TemplatePlanner};
use skillmatrix_core::scheduler::{run_task, QueueEvent, QueueObserver, Stack, TaskReport};
use skillmatrix_core::sim::{HitReport, ImuReading, RobotState, SceneSnapshot, SceneSpec, SimParams, World};
use skillmatrix_core::skills::{OraclePolicy, Robot, SimRobot, SkillConfig};

use crate::bus::Bus;
use crate::episode::{load_episode, save_marks, BusRecorder, EpisodeWriter};
use crate::stage::{SharedWorld, StageObserver};

/// A simulated robot that publishes world telemetry after every tick.
pub struct StagedRobot {
    inner: SimRobot<SharedWorld>,
    observer: StageObserver,
}

impl StagedRobot {
    pub fn new(world: SharedWorld, id: u32, bus: &Bus) -> Result<Self> {
        let mut observer = StageObserver::new(bus.publisher("stage")?);
        observer.observe(&world.lock())?;
        Ok(StagedRobot {
            inner: SimRobot::new(world, id)?,
            observer,
        })
    }
}

impl Robot for StagedRobot {
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
    fn apply(&mut self, signal: &ControlSignal) -> Option<HitReport> {
        let hit = self.inner.apply(signal);
        let _ = self.observer.observe(&self.inner.world().lock());
        hit
    }
    fn tick(&self) -> u64 {
        self.inner.tick()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoSource {
    Level(Level),
    Suite(Suite),
}

impl DemoSource {
    pub fn scene(self, seed: u64) -> (SceneSpec, String) {
        match self {
            DemoSource::Level(l) => {
                let s = level_scene(l, seed);
                (s.spec, s.task)
            }
            DemoSource::Suite(s) => (suite_scene(s, seed, true), s.task().into()),
        }
    }

    fn stream(self) -> u64 {
        match self {
            DemoSource::Level(l) => 100 + l as u64,
            DemoSource::Suite(s) => 200 + s as u64,
        }
    }
}

struct Splitter<'a> {
    bus: &'a Bus,
    world: SharedWorld,
    root: &'a Path,
    prefix: String,
    codec: CodecConfig,
    active: Option<BusRecorder>,
    plan: Option<SubtaskPlan>,
    saved: Vec<PathBuf>,
    error: Option<anyhow::Error>,
}

impl Splitter<'_> {
    fn begin(&mut self, index: usize) -> Result<()> {
        let (variant, dt) = {
            let w = self.world.lock();
            (w.robot(1)?.variant, w.params.dt)
        };
        let id = format!("{}-{index}", self.prefix);
        let writer = EpisodeWriter::create(self.root, &id, variant, 1, dt, Some(self.codec))?;
        self.active = Some(BusRecorder::start(self.bus, 1, writer)?);
        Ok(())
    }

    fn end(&mut self, index: usize, succeeded: bool) -> Result<()> {
        let Some(rec) = self.active.take() else { return Ok(()) };
        let manifest = rec.stop(Vec::new())?;
        let dir = self.root.join(&manifest.id);
        if !succeeded || manifest.frames < 2 {
            std::fs::remove_dir_all(&dir)?;
            return Ok(());
        }
        let (_, ep) = load_episode(&dir)?;
        let sub = self
            .plan
            .as_ref()
            .and_then(|p| p.steps.get(index))
            .ok_or_else(|| anyhow!("subtask {index} missing from plan"))?;
        let (first, last) = (ep.frames[0].tick, ep.frames[ep.frames.len() - 1].tick);
        let mut mark = Segment::new(first, last, &sub.skill, sub.object.as_deref());
        mark.container = sub.container.clone();
        save_marks(&dir, vec![mark])?;
        self.saved.push(dir);
        Ok(())
    }
}

impl QueueObserver for Splitter<'_> {
    fn on_event(&mut self, event: &QueueEvent<'_>) {
        let r = match event {
            QueueEvent::Planned(p) => {
                self.plan = Some((*p).clone());
                Ok(())
            }
            QueueEvent::Checked { index, verdict } if verdict.is_pass() => self.begin(*index),
            QueueEvent::Finished(rep) => self.end(rep.index, rep.status == skillmatrix_core::scheduler::SubtaskStatus::Succeeded),
            _ => Ok(()),
        };
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }
}

/// Runs one oracle demonstration and writes one episode per succeeded
/// subtask under `root`. Returns the task report and the episode dirs.
pub fn record_demo(
    source: DemoSource,
    base_seed: u64,
    index: u32,
    root: &Path,
    codec: &CodecConfig,
    config: &SkillConfig,
) -> Result<(TaskReport, Vec<PathBuf>)> {
    let seed = trial_seed(base_seed, source.stream(), index as u64);
    let (spec, task) = source.scene(seed);
    let world = SharedWorld::new(World::spawn(&spec, seed)?);
    let bus = Bus::new();
    let skills = default_skill_list();
    let mut robot = StagedRobot::new(world.clone(), 1, &bus)?;
    let mut oracle = OraclePolicy::new(world.clone(), skills.clone(), *codec);
    let mut splitter = Splitter {
        bus: &bus,
        world: world.clone(),
        root,
        prefix: format!("demo-{}-{seed:016x}", source.stream()),
        codec: *codec,
        active: None,
        plan: None,
        saved: Vec::new(),
        error: None,
    };
    let stack = Stack {
        robot: &mut robot,
        client: &mut oracle,
        detector: &mut GroundTruthDetector,
        codec,
        config,
    };
    let (_, report) = run_task(&task, &mut TemplatePlanner, &skills, stack, &mut splitter)?;
    if let Some(e) = splitter.error {
        return Err(e);
    }
    Ok((report, splitter.saved))
}
