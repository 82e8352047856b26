//! Skill layer: VLA-protocol executors, the scripted oracle policy that
//! stands in for a trained model, and the hybrid PD/sensor routines.

mod hybrid;
mod oracle;
mod vla;

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecConfig;
use crate::control::ControlSignal;
use crate::detect::Detector;
use crate::planner::{ExecutorKind, HybridRoutine, SkillPromptEntry, Subtask};
use crate::sim::{HitReport, ImuReading, RobotId, RobotState, SceneSnapshot, SimError, SimParams, World};

pub use hybrid::{climb, search, shoot, ClimbConfig, PdGains, SearchConfig, ShootConfig};
pub use oracle::{satisfied, OraclePolicy, GOAL_STANDOFF, MOVE_TO_FACING, MOVE_TO_REACH};
pub use vla::execute_vla_skill;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum SkillStatus {
    Succeeded,
    Failed(String),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub status: SkillStatus,
    /// Control ticks applied to the robot.
    pub steps: u64,
    /// Robot tick at which the stop signal (or terminal predicate) was seen.
    pub stop_tick: Option<u64>,
}

impl SkillOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == SkillStatus::Succeeded
    }

    fn failed(reason: impl Into<String>, steps: u64) -> Self {
        SkillOutcome {
            status: SkillStatus::Failed(reason.into()),
            steps,
            stop_tick: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    /// Instantiated skill prompt, e.g. "Move to red can".
    pub prompt: String,
    pub snapshot: SceneSnapshot,
    pub state: RobotState,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub tokens: Vec<u32>,
    /// Set when the policy cannot act on the request (unknown target, ...).
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("transient transport failure: {0}")]
    Retriable(String),
    #[error("inference endpoint unreachable: {0}")]
    Permanent(String),
}

pub trait InferenceClient {
    fn infer(&mut self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError>;
}

impl<C: InferenceClient + ?Sized> InferenceClient for &mut C {
    fn infer(&mut self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
        (**self).infer(request)
    }
}

/// What a skill executor may see and command on one robot.
pub trait Robot {
    fn params(&self) -> SimParams;
    fn state(&self) -> RobotState;
    fn observe(&self) -> SceneSnapshot;
    fn imu(&self) -> ImuReading;
    /// Range sensor along the camera or gimbal axis.
    fn distance(&self) -> f64;
    /// Applies one control tick and advances time by one step.
    fn apply(&mut self, signal: &ControlSignal) -> Option<HitReport>;
    fn tick(&self) -> u64;
}

impl<R: Robot + ?Sized> Robot for &mut R {
    fn params(&self) -> SimParams {
        (**self).params()
    }
    fn state(&self) -> RobotState {
        (**self).state()
    }
    fn observe(&self) -> SceneSnapshot {
        (**self).observe()
    }
    fn imu(&self) -> ImuReading {
        (**self).imu()
    }
    fn distance(&self) -> f64 {
        (**self).distance()
    }
    fn apply(&mut self, signal: &ControlSignal) -> Option<HitReport> {
        (**self).apply(signal)
    }
    fn tick(&self) -> u64 {
        (**self).tick()
    }
}

/// Shared handle to a world, used by robots that step it and by the
/// oracle that reads its ground truth.
pub trait WorldAccess {
    fn read<T>(&self, f: impl FnOnce(&World) -> T) -> T;
    fn write<T>(&self, f: impl FnOnce(&mut World) -> T) -> T;
}

impl WorldAccess for Rc<RefCell<World>> {
    fn read<T>(&self, f: impl FnOnce(&World) -> T) -> T {
        f(&self.borrow())
    }

    fn write<T>(&self, f: impl FnOnce(&mut World) -> T) -> T {
        f(&mut self.borrow_mut())
    }
}

/// A simulated robot stepping a shared world on its own.
#[derive(Debug, Clone)]
pub struct SimRobot<W> {
    world: W,
    id: RobotId,
}

impl<W: WorldAccess> SimRobot<W> {
    pub fn new(world: W, id: RobotId) -> Result<Self, SimError> {
        world.read(|w| w.robot(id).map(|_| ()))?;
        Ok(SimRobot { world, id })
    }

    pub fn id(&self) -> RobotId {
        self.id
    }

    pub fn world(&self) -> &W {
        &self.world
    }
}

impl<W: WorldAccess> Robot for SimRobot<W> {
    fn params(&self) -> SimParams {
        self.world.read(|w| w.params)
    }

    fn state(&self) -> RobotState {
        self.world.read(|w| w.robot(self.id).cloned().expect("robot checked at construction"))
    }

    fn observe(&self) -> SceneSnapshot {
        self.world
            .read(|w| w.camera_view(self.id).expect("robot checked at construction"))
    }

    fn imu(&self) -> ImuReading {
        self.world
            .read(|w| w.read_imu(self.id).expect("robot checked at construction"))
    }

    fn distance(&self) -> f64 {
        self.world
            .read(|w| w.read_distance(self.id).expect("robot checked at construction"))
    }

    fn apply(&mut self, signal: &ControlSignal) -> Option<HitReport> {
        let id = self.id;
        self.world.write(|w| {
            let dt = w.params.dt;
            w.step(&[(id, *signal)], dt)
                .into_iter()
                .find(|(rid, _)| *rid == id)
                .map(|(_, h)| h)
        })
    }

    fn tick(&self) -> u64 {
        self.world.read(|w| w.tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkillConfig {
    /// Per-skill timeout in simulated seconds.
    pub timeout_s: f64,
    /// Consecutive flagged policy responses tolerated before giving up.
    pub diagnostic_patience: u32,
    pub search: SearchConfig,
    pub shoot: ShootConfig,
    pub climb: ClimbConfig,
}

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig {
            timeout_s: 60.0,
            diagnostic_patience: 30,
            search: SearchConfig::default(),
            shoot: ShootConfig::default(),
            climb: ClimbConfig::default(),
        }
    }
}

impl SkillConfig {
    pub fn max_ticks(&self, dt: f64) -> u64 {
        libm::ceil(self.timeout_s / dt) as u64
    }
}

/// Runs one subtask with the executor its skill entry names.
pub fn execute<R, C, D>(
    entry: &SkillPromptEntry,
    subtask: &Subtask,
    robot: &mut R,
    client: &mut C,
    detector: &mut D,
    codec: &CodecConfig,
    config: &SkillConfig,
) -> SkillOutcome
where
    R: Robot + ?Sized,
    C: InferenceClient + ?Sized,
    D: Detector + ?Sized,
{
    let object = subtask.object.as_deref().unwrap_or("");
    match (entry.kind, entry.routine) {
        (ExecutorKind::Vla, _) => execute_vla_skill(&subtask.text, robot, client, codec, config),
        (ExecutorKind::Hybrid, Some(HybridRoutine::Search)) => search(object, robot, detector, config),
        (ExecutorKind::Hybrid, Some(HybridRoutine::Shoot)) => shoot(object, robot, detector, config),
        (ExecutorKind::Hybrid, Some(HybridRoutine::Climb)) => climb(robot, config),
        (ExecutorKind::Hybrid, None) => SkillOutcome::failed("hybrid skill without a routine", 0),
    }
}
