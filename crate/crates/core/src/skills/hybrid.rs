//! Classical skills: rotate-to-find, PD gimbal servo with ballistic
//! compensation, and pitch-scheduled ramp climbing.

use alloc::format;
use serde::{Deserialize, Serialize};

use super::{Robot, SkillConfig, SkillOutcome, SkillStatus};
use crate::control::ControlSignal;
use crate::detect::Detector;
use crate::math;
use crate::sim::{ballistic_drop, RobotVariant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Chassis rotation rate while searching, rad/s.
    pub angular_speed: f64,
    /// Extra sweep beyond a full turn, as a fraction of 2π.
    pub margin: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            angular_speed: 0.5,
            margin: 0.1,
        }
    }
}

impl SearchConfig {
    pub fn sweep_limit(&self) -> f64 {
        math::TAU * (1.0 + self.margin)
    }
}

/// Gimbal rates per pixel of error (kp) and per pixel/s of error rate (kd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdGains {
    pub kp_yaw: f64,
    pub kd_yaw: f64,
    pub kp_pitch: f64,
    pub kd_pitch: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains {
            kp_yaw: 0.002,
            kd_yaw: 0.0005,
            kp_pitch: 0.002,
            kd_pitch: 0.0005,
        }
    }
}

impl PdGains {
    pub fn is_valid(&self) -> bool {
        self.kp_yaw > 0.0 && self.kp_pitch > 0.0 && self.kd_yaw >= 0.0 && self.kd_pitch >= 0.0
    }

    /// Gimbal (yaw, pitch) rates for a pixel error and its derivative.
    pub fn rates(&self, e: (f64, f64), de: (f64, f64)) -> (f64, f64) {
        (
            -self.kp_yaw * e.0 - self.kd_yaw * de.0,
            -self.kp_pitch * e.1 - self.kd_pitch * de.1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootConfig {
    pub gains: PdGains,
    pub tolerance_px: f64,
    pub lock_ticks: u32,
    /// Raise the aim by the projectile drop before firing.
    pub compensate: bool,
    pub lost_timeout_s: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            gains: PdGains::default(),
            tolerance_px: 8.0,
            lock_ticks: 3,
            compensate: true,
            lost_timeout_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimbConfig {
    pub base_speed: f64,
    pub pitch_gain: f64,
    /// Pitch that counts as being on the incline, radians.
    pub engage_pitch: f64,
    /// Pitch below which the robot counts as level again, radians.
    pub level_pitch: f64,
}

impl Default for ClimbConfig {
    fn default() -> Self {
        ClimbConfig {
            base_speed: 0.2,
            pitch_gain: 0.3,
            engage_pitch: math::deg(2.0),
            level_pitch: math::deg(0.5),
        }
    }
}

impl ClimbConfig {
    pub fn speed(&self, pitch: f64) -> f64 {
        self.base_speed + self.pitch_gain * math::sin(pitch)
    }
}

fn done<R: Robot + ?Sized>(robot: &R, steps: u64) -> SkillOutcome {
    SkillOutcome {
        status: SkillStatus::Succeeded,
        steps,
        stop_tick: Some(robot.tick()),
    }
}

/// Rotates in place until the detector reports `target`.
///
/// The final step is shortened so the total sweep never exceeds the limit.
pub fn search<R, D>(target: &str, robot: &mut R, detector: &mut D, config: &SkillConfig) -> SkillOutcome
where
    R: Robot + ?Sized,
    D: Detector + ?Sized,
{
    let params = robot.params();
    let dt = params.dt;
    let rate = config.search.angular_speed.min(params.max_angular_speed);
    let limit = config.search.sweep_limit();
    let max_ticks = config.max_ticks(dt);
    let mut rotated = 0.0;
    let mut steps = 0;
    loop {
        match detector.detect(target, &robot.observe()) {
            Err(e) => return SkillOutcome::failed(format!("{e}"), steps),
            Ok(Some(_)) => return done(robot, steps),
            Ok(None) => {}
        }
        if rotated >= limit - 1e-9 {
            return SkillOutcome::failed("not found", steps);
        }
        if steps >= max_ticks {
            return SkillOutcome {
                status: SkillStatus::Timeout,
                steps,
                stop_tick: None,
            };
        }
        let wz = rate.min((limit - rotated) / dt);
        robot.apply(&ControlSignal {
            wz,
            ..ControlSignal::default()
        });
        rotated += wz * dt;
        steps += 1;
    }
}

/// Centers `target` with a PD loop on the gimbal, then fires once.
///
/// After the lock criterion holds, the firing tick removes the remaining
/// pixel error through the pinhole model and, when enabled, raises the
/// aim by the ballistic drop over the measured range.
pub fn shoot<R, D>(target: &str, robot: &mut R, detector: &mut D, config: &SkillConfig) -> SkillOutcome
where
    R: Robot + ?Sized,
    D: Detector + ?Sized,
{
    if robot.state().variant != RobotVariant::S1 {
        return SkillOutcome::failed("no blaster", 0);
    }
    let cfg = config.shoot;
    let params = robot.params();
    let dt = params.dt;
    let f = params.focal_px();
    let (cx, cy) = (params.image_width / 2.0, params.image_height / 2.0);
    let max_ticks = config.max_ticks(dt);
    let mut prev: Option<(f64, f64)> = None;
    let mut lock = 0;
    let mut lost = 0u64;
    let mut steps = 0;
    while steps < max_ticks {
        let det = match detector.detect(target, &robot.observe()) {
            Ok(d) => d,
            Err(e) => return SkillOutcome::failed(format!("{e}"), steps),
        };
        let Some(det) = det else {
            lost += 1;
            if lost as f64 * dt > cfg.lost_timeout_s {
                return SkillOutcome::failed("target lost", steps);
            }
            prev = None;
            lock = 0;
            robot.apply(&ControlSignal::default());
            steps += 1;
            continue;
        };
        lost = 0;
        let (u, v) = det.bbox.center();
        let e = (u - cx, v - cy);
        if e.0.abs() < cfg.tolerance_px && e.1.abs() < cfg.tolerance_px {
            lock += 1;
        } else {
            lock = 0;
        }
        if lock >= cfg.lock_ticks {
            let mut range = robot.distance();
            if range >= params.distance_sensor_max {
                range = det.distance;
            }
            let raise = if cfg.compensate && range > 0.0 {
                math::atan(ballistic_drop(range, params.projectile_speed, params.gravity) / range)
            } else {
                0.0
            };
            let report = robot.apply(&ControlSignal {
                gimbal_dyaw: math::atan(-e.0 / f),
                gimbal_dpitch: math::atan(-e.1 / f) + raise,
                fire: true,
                ..ControlSignal::default()
            });
            steps += 1;
            return match report.and_then(|r| r.hit) {
                Some(_) => done(robot, steps),
                None => SkillOutcome::failed("missed", steps),
            };
        }
        let de = prev.map_or((0.0, 0.0), |p| ((e.0 - p.0) / dt, (e.1 - p.1) / dt));
        prev = Some(e);
        let (wy, wp) = cfg.gains.rates(e, de);
        robot.apply(&ControlSignal {
            gimbal_dyaw: wy * dt,
            gimbal_dpitch: wp * dt,
            ..ControlSignal::default()
        });
        steps += 1;
    }
    SkillOutcome {
        status: SkillStatus::Timeout,
        steps,
        stop_tick: None,
    }
}

/// Drives forward with a pitch-scheduled speed until the robot has been
/// on the incline and is level again.
pub fn climb<R: Robot + ?Sized>(robot: &mut R, config: &SkillConfig) -> SkillOutcome {
    let cfg = config.climb;
    let max_ticks = config.max_ticks(robot.params().dt);
    let mut engaged = false;
    let mut steps = 0;
    while steps < max_ticks {
        let pitch = robot.imu().pitch;
        if pitch.abs() > cfg.engage_pitch {
            engaged = true;
        }
        if engaged && pitch.abs() < cfg.level_pitch {
            return done(robot, steps);
        }
        robot.apply(&ControlSignal {
            vx: cfg.speed(pitch),
            ..ControlSignal::default()
        });
        steps += 1;
    }
    if engaged {
        SkillOutcome {
            status: SkillStatus::Timeout,
            steps,
            stop_tick: None,
        }
    } else {
        SkillOutcome::failed("no ramp engaged", steps)
    }
}
