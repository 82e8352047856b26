//! Generalization levels, long-horizon suites and single-trial runners.
//!
//! Levels cross an object pool with a scene type:
//!
//! | level | objects      | scene          |
//! |-------|--------------|----------------|
//! | I     | seen         | clean          |
//! | II    | unseen, easy | clean          |
//! | III   | seen         | distractors    |
//! | IV    | unseen, easy | distractors    |
//! | V     | unseen, hard | unseen layout  |

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::str::FromStr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::detect::{NoiseModel, NoisyDetector};
use crate::math;
use crate::planner::{default_skill_list, TemplatePlanner};
use crate::scheduler::{run_task, Stack, SubtaskStatus, TaskReport};
use crate::sim::{
    ObjectKind, ObjectSpec, Placement, RampSpec, RobotSpawn, RobotVariant, SceneSpec, World,
    WorldEventKind,
};
use crate::skills::{OraclePolicy, SimRobot, SkillConfig};

pub const BENCH_SCHEMA: &str = "skillmatrix.bench/1";
pub const BASE_CONTAINER: &str = "white box";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    I,
    II,
    III,
    IV,
    V,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::I, Level::II, Level::III, Level::IV, Level::V];

    pub fn pool(self) -> ObjectPool {
        match self {
            Level::I | Level::III => ObjectPool::Seen,
            Level::II | Level::IV => ObjectPool::UnseenEasy,
            Level::V => ObjectPool::UnseenHard,
        }
    }

    pub fn scene(self) -> SceneKind {
        match self {
            Level::I | Level::II => SceneKind::Clean,
            Level::III | Level::IV => SceneKind::Distractors,
            Level::V => SceneKind::UnseenLayout,
        }
    }

    fn index(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::I => "I",
            Level::II => "II",
            Level::III => "III",
            Level::IV => "IV",
            Level::V => "V",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().trim_start_matches("LEVEL") {
            "I" | "1" => Ok(Level::I),
            "II" | "2" => Ok(Level::II),
            "III" | "3" => Ok(Level::III),
            "IV" | "4" => Ok(Level::IV),
            "V" | "5" => Ok(Level::V),
            _ => Err(format!("unknown level {s:?} (expected I-V or 1-5)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectPool {
    Seen,
    UnseenEasy,
    UnseenHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Clean,
    Distractors,
    UnseenLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkLevelSpec {
    pub level: Level,
    pub pool: ObjectPool,
    pub scene: SceneKind,
    pub trials: u32,
    pub seed: u64,
}

impl BenchmarkLevelSpec {
    pub fn new(level: Level, trials: u32, seed: u64) -> Self {
        BenchmarkLevelSpec {
            level,
            pool: level.pool(),
            scene: level.scene(),
            trials,
            seed,
        }
    }
}

/// (name, kind, radius, height)
type Item = (&'static str, ObjectKind, f64, f64);

pub const SEEN_OBJECTS: [Item; 4] = [
    ("red cola can", ObjectKind::Can, 0.033, 0.12),
    ("pink cube", ObjectKind::Cube, 0.025, 0.05),
    ("green can", ObjectKind::Can, 0.033, 0.12),
    ("purple cube", ObjectKind::Cube, 0.025, 0.05),
];

pub const UNSEEN_EASY_OBJECTS: [Item; 4] = [
    ("orange juice can", ObjectKind::Can, 0.033, 0.12),
    ("blue cube", ObjectKind::Cube, 0.025, 0.05),
    ("yellow can", ObjectKind::Can, 0.03, 0.1),
    ("white cube", ObjectKind::Cube, 0.03, 0.06),
];

pub const UNSEEN_HARD_OBJECTS: [Item; 4] = [
    ("tennis ball", ObjectKind::Distractor, 0.033, 0.066),
    ("toy banana", ObjectKind::Distractor, 0.04, 0.04),
    ("glue stick", ObjectKind::Distractor, 0.012, 0.09),
    ("rubber duck", ObjectKind::Distractor, 0.04, 0.07),
];

pub const DISTRACTORS: [Item; 6] = [
    ("blue cup", ObjectKind::Distractor, 0.04, 0.09),
    ("toy car", ObjectKind::Distractor, 0.05, 0.04),
    ("black marker", ObjectKind::Distractor, 0.01, 0.13),
    ("yellow sponge", ObjectKind::Distractor, 0.045, 0.03),
    ("apple", ObjectKind::Distractor, 0.04, 0.08),
    ("stapler", ObjectKind::Distractor, 0.05, 0.05),
];

pub fn pool_items(pool: ObjectPool) -> &'static [Item] {
    match pool {
        ObjectPool::Seen => &SEEN_OBJECTS,
        ObjectPool::UnseenEasy => &UNSEEN_EASY_OBJECTS,
        ObjectPool::UnseenHard => &UNSEEN_HARD_OBJECTS,
    }
}

/// Well-mixed seed for one trial of one stream.
pub fn trial_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn region(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Placement {
    Placement::Region {
        x_min,
        x_max,
        y_min,
        y_max,
        yaw_min: 0.0,
        yaw_max: 0.0,
    }
}

fn fixed(x: f64, y: f64) -> Placement {
    Placement::Fixed { x, y, yaw: 0.0 }
}

fn robot(variant: RobotVariant, pose: Placement) -> RobotSpawn {
    RobotSpawn { id: 1, variant, pose }
}

fn item_spec(item: &Item, placement: Placement) -> ObjectSpec {
    ObjectSpec::new(item.0, item.1, placement, item.2, item.3)
}

fn white_box(placement: Placement) -> ObjectSpec {
    ObjectSpec::new(BASE_CONTAINER, ObjectKind::Box, placement, 0.15, 0.1)
}

/// The base task of a level: one target object into the white box.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScene {
    pub spec: SceneSpec,
    pub object: String,
    pub task: String,
}

pub fn level_scene(level: Level, seed: u64) -> LevelScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = pool_items(level.pool());
    let target = items[rng.random_range(0..items.len())];
    let mut spec = SceneSpec::new(&format!("level-{level}"));
    match level.scene() {
        SceneKind::Clean | SceneKind::Distractors => {
            spec.robots.push(robot(RobotVariant::Ep, fixed(0.0, 0.0)));
            spec.objects.push(item_spec(&target, region(1.0, 1.6, -0.4, 0.4)));
            spec.objects.push(white_box(region(2.2, 2.8, -0.5, 0.5)));
        }
        SceneKind::UnseenLayout => {
            // Start heading, target and box all sampled relative to one another.
            let yaw = rng.random_range(-0.6..0.6);
            let x0 = rng.random_range(-0.5..0.5);
            let y0 = rng.random_range(-0.5..0.5);
            spec.robots.push(robot(
                RobotVariant::Ep,
                Placement::Fixed { x: x0, y: y0, yaw },
            ));
            let d = rng.random_range(0.9..1.5);
            let b = yaw + rng.random_range(-0.5..0.5);
            let (tx, ty) = (x0 + d * math::cos(b), y0 + d * math::sin(b));
            spec.objects.push(item_spec(&target, fixed(tx, ty)));
            let e = rng.random_range(0.9..1.3);
            let c = b + rng.random_range(-0.35..0.35);
            spec.objects.push(white_box(fixed(tx + e * math::cos(c), ty + e * math::sin(c))));
        }
    }
    if level.scene() != SceneKind::Clean {
        let n = rng.random_range(3..=5);
        let mut pool: Vec<&Item> = DISTRACTORS.iter().collect();
        for _ in 0..n {
            let it = pool.remove(rng.random_range(0..pool.len()));
            spec.objects.push(item_spec(it, region(0.3, 3.0, -1.4, 1.4)));
        }
    }
    LevelScene {
        spec,
        object: target.0.into(),
        task: format!("Put the {} into the {}", target.0, BASE_CONTAINER),
    }
}

/// The object named `object` ended up inside the container named `container`.
pub fn contained(world: &World, object: &str, container: &str) -> bool {
    let cids: Vec<u32> = world.objects_named(container).map(|c| c.id).collect();
    world
        .objects_named(object)
        .any(|o| o.flags.contained_in.is_some_and(|c| cids.contains(&c)) && o.flags.held_by.is_none())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: u32,
    pub seed: u64,
    pub success: bool,
    /// Skill name and status of the first subtask that did not succeed.
    pub failed_at: Option<(String, SubtaskStatus)>,
    pub subtasks_run: usize,
    pub ticks: u64,
    pub error: Option<String>,
}

/// Fixed stack used by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialConfig {
    pub noise: NoiseModel,
    pub codec: CodecConfig,
    pub skills: SkillConfig,
}

fn run_in_world(
    world: World,
    task: &str,
    seed: u64,
    cfg: &TrialConfig,
) -> (Rc<RefCell<World>>, Result<TaskReport, String>) {
    let shared = Rc::new(RefCell::new(world));
    let skills = default_skill_list();
    let result = (|| {
        let mut robot = SimRobot::new(shared.clone(), 1).map_err(|e| format!("{e}"))?;
        let mut oracle = OraclePolicy::new(shared.clone(), skills.clone(), cfg.codec);
        let mut detector = NoisyDetector::new(cfg.noise, seed ^ 0xD37E_C70B);
        let stack = Stack {
            robot: &mut robot,
            client: &mut oracle,
            detector: &mut detector,
            codec: &cfg.codec,
            config: &cfg.skills,
        };
        run_task(task, &mut TemplatePlanner, &skills, stack, &mut ())
            .map(|(_, report)| report)
            .map_err(|e| format!("{e}"))
    })();
    (shared, result)
}

fn trial_result(
    index: u32,
    seed: u64,
    report: Result<TaskReport, String>,
    goal: impl FnOnce() -> bool,
) -> TrialResult {
    match report {
        Ok(r) => TrialResult {
            index,
            seed,
            success: r.succeeded() && goal(),
            failed_at: r.failure().map(|f| (f.skill.clone(), f.status.clone())),
            subtasks_run: r.subtasks.len(),
            ticks: r.ticks(),
            error: None,
        },
        Err(e) => TrialResult {
            index,
            seed,
            success: false,
            failed_at: None,
            subtasks_run: 0,
            ticks: 0,
            error: Some(e),
        },
    }
}

pub fn run_level_trial(level: Level, base_seed: u64, index: u32, cfg: &TrialConfig) -> TrialResult {
    let seed = trial_seed(base_seed, level.index(), index as u64);
    let scene = level_scene(level, seed);
    let world = match World::spawn(&scene.spec, seed) {
        Ok(w) => w,
        Err(e) => return trial_result(index, seed, Err(format!("{e}")), || false),
    };
    let (world, report) = run_in_world(world, &scene.task, seed, cfg);
    trial_result(index, seed, report, || {
        contained(&world.borrow(), &scene.object, BASE_CONTAINER)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    /// Cross an obstacle row, then put the red can into the white box.
    Obstacles = 1,
    /// Climb a ramp, then put the green can into an open drawer.
    Ramp = 2,
    /// Open a drawer, put the purple cube in, close it.
    Drawer = 3,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Obstacles, Suite::Ramp, Suite::Drawer];

    pub fn from_number(n: u32) -> Option<Suite> {
        match n {
            1 => Some(Suite::Obstacles),
            2 => Some(Suite::Ramp),
            3 => Some(Suite::Drawer),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        self as u32
    }

    pub fn task(self) -> &'static str {
        match self {
            Suite::Obstacles => "Cross the obstacles at the front and put the red can into the white box.",
            Suite::Ramp => "Climb the ramp and put the green can into the drawer.",
            Suite::Drawer => "Open the drawer and put the purple cube into the drawer, then close the drawer.",
        }
    }
}

const OBSTACLE_RADIUS: f64 = 0.12;

/// Scene for a long-horizon suite. `passable = false` closes every gap in
/// the obstacle row (suite 1 only).
pub fn suite_scene(suite: Suite, seed: u64, passable: bool) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = SceneSpec::new(&format!("suite-{}", suite.number()));
    spec.robots.push(robot(RobotVariant::Ep, fixed(0.0, 0.0)));
    match suite {
        Suite::Obstacles => {
            let gap_center = rng.random_range(-0.3..0.3);
            let row_x = 1.0;
            let mut ys: Vec<f64> = Vec::new();
            if passable {
                let half = rng.random_range(0.4..0.45);
                for k in 0..3 {
                    ys.push(gap_center + half + k as f64 * 0.35);
                    ys.push(gap_center - half - k as f64 * 0.35);
                }
            } else {
                for k in -4..=4 {
                    ys.push(gap_center + k as f64 * 0.3);
                }
            }
            for y in ys {
                let mut o = ObjectSpec::new("obstacles", ObjectKind::Obstacle, fixed(row_x, y), OBSTACLE_RADIUS, 0.3);
                o.facing = Some(0.0);
                spec.objects.push(o);
            }
            spec.objects.push(item_spec(&RED_CAN, region(2.0, 2.4, -0.4, 0.4)));
            spec.objects.push(white_box(region(2.9, 3.3, -0.5, 0.5)));
        }
        Suite::Ramp => {
            let angle = rng.random_range(8.0..15.0);
            spec.ramp = Some(RampSpec {
                x: 1.0,
                y: 0.0,
                heading: 0.0,
                length: 1.0,
                width: 1.4,
                angle_deg: angle,
                platform_length: 2.6,
            });
            spec.objects.push(ObjectSpec::new("ramp", ObjectKind::Ramp, fixed(1.0, 0.0), 0.3, 0.05));
            spec.objects.push(item_spec(&SEEN_OBJECTS[2], region(2.6, 3.0, -0.3, 0.3)));
            let mut d = ObjectSpec::new("drawer", ObjectKind::Drawer, region(3.6, 3.7, -0.2, 0.2), 0.15, 0.2);
            d.facing = Some(core::f64::consts::PI);
            d.extension = 0.2;
            spec.objects.push(d);
        }
        Suite::Drawer => {
            let mut d = ObjectSpec::new("drawer", ObjectKind::Drawer, region(1.5, 1.7, -0.2, 0.2), 0.15, 0.2);
            d.facing = Some(core::f64::consts::PI);
            spec.objects.push(d);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let y = side * rng.random_range(0.7..0.9);
            spec.objects.push(item_spec(&SEEN_OBJECTS[3], region(0.8, 1.1, y, y)));
        }
    }
    spec
}

const RED_CAN: Item = ("red can", ObjectKind::Can, 0.033, 0.12);

/// The world-state goal of a suite, independent of skill outcomes.
pub fn suite_goal(suite: Suite, world: &World) -> bool {
    match suite {
        Suite::Obstacles => contained(world, "red can", BASE_CONTAINER),
        Suite::Ramp => contained(world, "green can", "drawer"),
        Suite::Drawer => {
            contained(world, "purple cube", "drawer")
                && world.objects_named("drawer").all(|d| d.is_closed(&world.params) && d.flags.held_by.is_none())
        }
    }
}

/// Drawer open/closed transitions recorded in the world log.
pub fn drawer_transitions(world: &World) -> Vec<&'static str> {
    world
        .events
        .iter()
        .filter_map(|e| match e.kind {
            WorldEventKind::DrawerOpened { .. } => Some("open"),
            WorldEventKind::DrawerClosed { .. } => Some("closed"),
            _ => None,
        })
        .collect()
}

pub fn run_suite_trial(suite: Suite, base_seed: u64, index: u32, passable: bool, cfg: &TrialConfig) -> (TrialResult, World) {
    let seed = trial_seed(base_seed, 100 + suite.number() as u64, index as u64);
    let spec = suite_scene(suite, seed, passable);
    let world = match World::spawn(&spec, seed) {
        Ok(w) => w,
        Err(e) => {
            let w = World::new(spec.params);
            return (trial_result(index, seed, Err(format!("{e}")), || false), w);
        }
    };
    let (world, report) = run_in_world(world, suite.task(), seed, cfg);
    let result = trial_result(index, seed, report, || suite_goal(suite, &world.borrow()));
    let w = world.borrow().clone();
    (result, w)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub trials: u32,
    pub successes: u32,
    pub failures: u32,
    /// Failures keyed by the skill at which the queue stopped.
    pub failures_by_subtask: BTreeMap<String, u32>,
    pub seeds: Vec<u64>,
}

impl LevelReport {
    pub fn from_trials(level: &str, trials: &[TrialResult]) -> Self {
        let mut r = LevelReport {
            level: level.into(),
            ..LevelReport::default()
        };
        for t in trials {
            r.trials += 1;
            r.seeds.push(t.seed);
            if t.success {
                r.successes += 1;
            } else {
                r.failures += 1;
                let key = match (&t.failed_at, &t.error) {
                    (Some((skill, _)), _) => skill.clone(),
                    (None, Some(_)) => String::from("<setup>"),
                    (None, None) => String::from("<goal>"),
                };
                *r.failures_by_subtask.entry(key).or_default() += 1;
            }
        }
        r
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub seed: u64,
    pub miss_probability: f64,
    pub levels: Vec<LevelReport>,
    pub wall_ms: Option<f64>,
}

impl BenchReport {
    pub fn reconciles(&self) -> bool {
        self.levels.iter().all(|l| l.trials == l.successes + l.failures)
    }
}
