//! Hardware-layer mappings: decoded actions and teleoperation input to
//! actuator commands.

use serde::{Deserialize, Serialize};

use crate::codec::Action7;
use crate::math;
use crate::sim::{RobotVariant, SimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperCommand {
    #[default]
    None,
    Open,
    Close,
}

/// Actuator command for one tick.
///
/// Chassis terms are velocities in the chassis frame; arm and gimbal terms
/// are per-tick displacements.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSignal {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub arm_du: f64,
    pub arm_dv: f64,
    pub gimbal_dyaw: f64,
    pub gimbal_dpitch: f64,
    pub gripper: GripperCommand,
    pub fire: bool,
}

impl ControlSignal {
    /// Clamps every term to the actuator limits for a tick of length `dt`.
    pub fn clamped(&self, p: &SimParams, dt: f64) -> ControlSignal {
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        let g = p.max_gimbal_rate * dt;
        ControlSignal {
            vx: math::clamp_abs(finite(self.vx), p.max_linear_speed),
            vy: math::clamp_abs(finite(self.vy), p.max_linear_speed),
            wz: math::clamp_abs(finite(self.wz), p.max_angular_speed),
            arm_du: math::clamp_abs(finite(self.arm_du), p.max_arm_step),
            arm_dv: math::clamp_abs(finite(self.arm_dv), p.max_arm_step),
            gimbal_dyaw: math::clamp_abs(finite(self.gimbal_dyaw), g),
            gimbal_dpitch: math::clamp_abs(finite(self.gimbal_dpitch), g),
            gripper: self.gripper,
            fire: self.fire,
        }
    }

    pub fn is_idle(&self) -> bool {
        *self == ControlSignal::default()
    }
}

/// Converts decoded actions into control signals. The only state kept is
/// the last gripper value, so that open/close commands fire on transitions.
#[derive(Debug, Clone)]
pub struct Controller {
    params: SimParams,
    last_gripper: Option<bool>,
}

impl Controller {
    pub fn new(params: SimParams) -> Self {
        Controller {
            params,
            last_gripper: None,
        }
    }

    /// Starts edge detection from a known gripper state.
    pub fn with_gripper(params: SimParams, closed: bool) -> Self {
        Controller {
            params,
            last_gripper: Some(closed),
        }
    }

    pub fn map(&mut self, a: &Action7, variant: RobotVariant) -> ControlSignal {
        let dt = self.params.dt;
        let mut s = ControlSignal {
            vx: a.dx / dt,
            vy: a.dy / dt,
            wz: a.dyaw / dt,
            ..ControlSignal::default()
        };
        match variant {
            RobotVariant::Ep => {
                s.arm_du = a.du;
                s.arm_dv = a.dv;
                if self.last_gripper != Some(a.gripper) {
                    s.gripper = if a.gripper {
                        GripperCommand::Close
                    } else {
                        GripperCommand::Open
                    };
                }
                self.last_gripper = Some(a.gripper);
            }
            RobotVariant::S1 => {
                s.gimbal_dyaw = a.du;
                s.gimbal_dpitch = a.dv;
            }
        }
        s.clamped(&self.params, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hat {
    #[default]
    Center,
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TeleopInput {
    pub timestamp: f64,
    /// Left stick: forward, left. Each in `[-1, 1]`.
    pub stick: [f64; 2],
    pub rotate_left: bool,
    pub rotate_right: bool,
    pub hat: Hat,
    pub primary: bool,
}

impl TeleopInput {
    pub fn clamped(&self) -> TeleopInput {
        let c = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        TeleopInput {
            stick: [c(self.stick[0]), c(self.stick[1])],
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleopConfig {
    pub angular_speed: f64,
    pub arm_step: f64,
    pub gimbal_step: f64,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        TeleopConfig {
            angular_speed: 1.0,
            arm_step: 0.005,
            gimbal_step: 0.02,
        }
    }
}

/// Joystick/keyboard mapping with edge detection on the primary button.
#[derive(Debug, Clone)]
pub struct TeleopMapper {
    params: SimParams,
    cfg: TeleopConfig,
    prev_primary: bool,
    gripper_closed: bool,
}

impl TeleopMapper {
    pub fn new(params: SimParams, cfg: TeleopConfig) -> Self {
        TeleopMapper {
            params,
            cfg,
            prev_primary: false,
            gripper_closed: false,
        }
    }

    pub fn gripper_closed(&self) -> bool {
        self.gripper_closed
    }

    pub fn map(&mut self, input: &TeleopInput, variant: RobotVariant) -> ControlSignal {
        let input = input.clamped();
        let vmax = self.params.max_linear_speed;
        let (mut vx, mut vy) = (input.stick[0] * vmax, input.stick[1] * vmax);
        let norm = math::hypot(vx, vy);
        if norm > vmax {
            vx *= vmax / norm;
            vy *= vmax / norm;
        }
        let mut s = ControlSignal {
            vx,
            vy,
            ..ControlSignal::default()
        };
        if input.rotate_left {
            s.wz += self.cfg.angular_speed;
        }
        if input.rotate_right {
            s.wz -= self.cfg.angular_speed;
        }
        let pressed = input.primary && !self.prev_primary;
        self.prev_primary = input.primary;
        match variant {
            RobotVariant::Ep => {
                let st = self.cfg.arm_step;
                match input.hat {
                    Hat::Up => s.arm_dv = st,
                    Hat::Down => s.arm_dv = -st,
                    Hat::Right => s.arm_du = st,
                    Hat::Left => s.arm_du = -st,
                    Hat::Center => {}
                }
                if pressed {
                    self.gripper_closed = !self.gripper_closed;
                    s.gripper = if self.gripper_closed {
                        GripperCommand::Close
                    } else {
                        GripperCommand::Open
                    };
                }
            }
            RobotVariant::S1 => {
                let st = self.cfg.gimbal_step;
                match input.hat {
                    Hat::Up => s.gimbal_dpitch = st,
                    Hat::Down => s.gimbal_dpitch = -st,
                    Hat::Left => s.gimbal_dyaw = st,
                    Hat::Right => s.gimbal_dyaw = -st,
                    Hat::Center => {}
                }
                s.fire = pressed;
            }
        }
        s.clamped(&self.params, self.params.dt)
    }
}
