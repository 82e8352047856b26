//! Execution checker and subtask queue.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecConfig;
use crate::detect::{Detector, DetectorError};
use crate::planner::{PlanError, Planner, SkillList, Subtask, SubtaskPlan};
use crate::sim::SceneSnapshot;
use crate::skills::{self, InferenceClient, Robot, SkillConfig, SkillStatus};

/// Detector calls attempted per check before a transport failure is final.
pub const CHECK_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CheckVerdict {
    Pass,
    Interrupt { object: String, timestamp: f64 },
}

impl CheckVerdict {
    pub fn is_pass(&self) -> bool {
        *self == CheckVerdict::Pass
    }

    pub fn reason(&self) -> Option<String> {
        match self {
            CheckVerdict::Pass => None,
            CheckVerdict::Interrupt { object, .. } => Some(format!("{object} not detected")),
        }
    }
}

/// Gates a subtask on its object being visible. Objectless subtasks and
/// skills marked ungated always pass.
pub fn check<D: Detector + ?Sized>(
    subtask: &Subtask,
    skills: &SkillList,
    snapshot: &SceneSnapshot,
    detector: &mut D,
) -> Result<CheckVerdict, DetectorError> {
    let gated = skills.entry_for(subtask).is_none_or(|e| e.gated);
    let object = match &subtask.object {
        Some(o) if gated && !o.is_empty() => o,
        _ => return Ok(CheckVerdict::Pass),
    };
    Ok(match detector.detect(object, snapshot)? {
        Some(_) => CheckVerdict::Pass,
        None => CheckVerdict::Interrupt {
            object: object.clone(),
            timestamp: snapshot.timestamp,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum SubtaskStatus {
    Succeeded,
    Interrupted(String),
    Failed(String),
    Timeout,
}

impl From<SkillStatus> for SubtaskStatus {
    fn from(s: SkillStatus) -> Self {
        match s {
            SkillStatus::Succeeded => SubtaskStatus::Succeeded,
            SkillStatus::Failed(r) => SubtaskStatus::Failed(r),
            SkillStatus::Timeout => SubtaskStatus::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub index: usize,
    pub text: String,
    pub skill: String,
    pub status: SubtaskStatus,
    /// The checker let the subtask through.
    pub passed_check: bool,
    pub steps: u64,
    pub start_tick: u64,
    pub end_tick: u64,
    pub stop_tick: Option<u64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub planned: usize,
    /// One entry per subtask that was started, in queue order.
    pub subtasks: Vec<SubtaskReport>,
    pub wall_ms: Option<f64>,
}

impl TaskReport {
    pub fn succeeded(&self) -> bool {
        self.subtasks.len() == self.planned && self.subtasks.iter().all(|s| s.status == SubtaskStatus::Succeeded)
    }

    pub fn executed(&self) -> usize {
        self.subtasks.iter().filter(|s| s.passed_check).count()
    }

    pub fn ticks(&self) -> u64 {
        self.subtasks.iter().map(|s| s.end_tick - s.start_tick).sum()
    }

    /// The first subtask that did not succeed.
    pub fn failure(&self) -> Option<&SubtaskReport> {
        self.subtasks.iter().find(|s| s.status != SubtaskStatus::Succeeded)
    }
}

#[derive(Debug)]
pub enum QueueEvent<'a> {
    Planned(&'a SubtaskPlan),
    Started { index: usize, subtask: &'a Subtask },
    Checked { index: usize, verdict: &'a CheckVerdict },
    Finished(&'a SubtaskReport),
}

/// Hooks for telemetry; `now_ms` lets hosts with a clock fill wall times.
pub trait QueueObserver {
    fn on_event(&mut self, _event: &QueueEvent<'_>) {}
    fn now_ms(&mut self) -> Option<f64> {
        None
    }
}

impl QueueObserver for () {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("plan rejected: {0}")]
    Config(#[from] PlanError),
    #[error("execution checker: {0}")]
    Detector(#[from] DetectorError),
}

/// Everything a queue run talks to, bundled to keep signatures short.
pub struct Stack<'a, R: ?Sized, C: ?Sized, D: ?Sized> {
    pub robot: &'a mut R,
    pub client: &'a mut C,
    pub detector: &'a mut D,
    pub codec: &'a CodecConfig,
    pub config: &'a SkillConfig,
}

fn elapsed(start: Option<f64>, end: Option<f64>) -> Option<f64> {
    Some(end? - start?)
}

/// Drives a plan in order, halting on the first interruption, failure or
/// timeout. The plan is validated against `skills` before anything runs.
pub fn run_queue<R, C, D, O>(
    task: &str,
    plan: &SubtaskPlan,
    skills: &SkillList,
    stack: Stack<'_, R, C, D>,
    observer: &mut O,
) -> Result<TaskReport, QueueError>
where
    R: Robot + ?Sized,
    C: InferenceClient + ?Sized,
    D: Detector + ?Sized,
    O: QueueObserver + ?Sized,
{
    plan.validate(skills)?;
    let Stack {
        robot,
        client,
        detector,
        codec,
        config,
    } = stack;
    let t0 = observer.now_ms();
    let mut report = TaskReport {
        task: task.into(),
        planned: plan.len(),
        subtasks: Vec::new(),
        wall_ms: None,
    };
    observer.on_event(&QueueEvent::Planned(plan));
    for (index, subtask) in plan.steps.iter().enumerate() {
        let entry = skills
            .entry_for(subtask)
            .ok_or_else(|| PlanError::Missing(subtask.skill.clone()))?;
        observer.on_event(&QueueEvent::Started { index, subtask });
        let start_ms = observer.now_ms();
        let start_tick = robot.tick();
        let snapshot = robot.observe();
        let mut attempt = 0;
        let verdict = loop {
            match check(subtask, skills, &snapshot, detector) {
                Ok(v) => break v,
                Err(e) => {
                    attempt += 1;
                    if attempt >= CHECK_ATTEMPTS {
                        return Err(e.into());
                    }
                }
            }
        };
        observer.on_event(&QueueEvent::Checked {
            index,
            verdict: &verdict,
        });
        let mut sub = SubtaskReport {
            index,
            text: subtask.text.clone(),
            skill: subtask.skill.clone(),
            status: SubtaskStatus::Succeeded,
            passed_check: verdict.is_pass(),
            steps: 0,
            start_tick,
            end_tick: start_tick,
            stop_tick: None,
            wall_ms: None,
        };
        if let Some(reason) = verdict.reason() {
            sub.status = SubtaskStatus::Interrupted(reason);
        } else {
            let outcome = skills::execute(entry, subtask, robot, client, detector, codec, config);
            sub.status = outcome.status.into();
            sub.steps = outcome.steps;
            sub.stop_tick = outcome.stop_tick;
            sub.end_tick = robot.tick();
        }
        sub.wall_ms = elapsed(start_ms, observer.now_ms());
        observer.on_event(&QueueEvent::Finished(&sub));
        let halt = sub.status != SubtaskStatus::Succeeded;
        report.subtasks.push(sub);
        if halt {
            break;
        }
    }
    report.wall_ms = elapsed(t0, observer.now_ms());
    Ok(report)
}

/// Plans `task` and runs the resulting queue.
pub fn run_task<P, R, C, D, O>(
    task: &str,
    planner: &mut P,
    skills: &SkillList,
    stack: Stack<'_, R, C, D>,
    observer: &mut O,
) -> Result<(SubtaskPlan, TaskReport), QueueError>
where
    P: Planner + ?Sized,
    R: Robot + ?Sized,
    C: InferenceClient + ?Sized,
    D: Detector + ?Sized,
    O: QueueObserver + ?Sized,
{
    let plan = planner.plan(task, skills)?;
    let report = run_queue(task, &plan, skills, stack, observer)?;
    Ok((plan, report))
}
