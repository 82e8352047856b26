//! Scripted stand-in for a trained VLA policy.
//!
//! Each skill has a closed-loop law over simulator ground truth that
//! emits the displacement toward the skill's goal, capped at ten times
//! the per-tick actuator limit, and the stop flag once the skill's success
//! predicate holds. Every commanded dimension is closed-loop, so the
//! half-bin bias of midpoint decoding dithers instead of accumulating.

use alloc::format;
use alloc::string::String;

use super::{InferenceClient, InferenceRequest, InferenceResponse, TransportError, WorldAccess};
use crate::codec::{encode_action, Action7, CodecConfig};
use crate::math;
use crate::planner::{SkillList, Subtask};
use crate::sim::{ObjectKind, RobotState, RobotVariant, SceneObject, World};

/// Move-to success: distance to the object's surface (a drawer's handle).
pub const MOVE_TO_REACH: f64 = 0.3;
/// Move-to success: bearing of the object from the chassis heading.
pub const MOVE_TO_FACING: f64 = 20.0 * core::f64::consts::PI / 180.0;
/// Surface distance the move-to law steers toward.
pub const GOAL_STANDOFF: f64 = 0.25;

const LOOKAHEAD: f64 = 10.0;
const CARRY_HEIGHT: f64 = 0.22;
const REST_HEIGHT: f64 = 0.12;
const REST_REACH: f64 = 0.2;
const DRAWER_OPEN_TARGET: f64 = 0.185;
const RAMP_RUNUP: f64 = 0.35;
const GAP_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default)]
struct Intent {
    dx: f64,
    dy: f64,
    dyaw: f64,
    du: f64,
    dv: f64,
    gripper: bool,
}

enum Law {
    Act(Intent),
    Stop,
    Diag(String),
}

fn diag(msg: impl Into<String>) -> Law {
    Law::Diag(msg.into())
}

fn to_chassis(r: &RobotState, x: f64, y: f64) -> (f64, f64) {
    math::rotate(x - r.x, y - r.y, -r.yaw)
}

fn bearing(r: &RobotState, x: f64, y: f64) -> f64 {
    math::wrap_angle(math::atan2(y - r.y, x - r.x) - r.yaw)
}

fn dist3(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (dx, dy, dz) = (a.0 - b.0, a.1 - b.1, a.2 - b.2);
    math::sqrt(dx * dx + dy * dy + dz * dz)
}

fn nearest<'a>(w: &'a World, r: &RobotState, name: &str) -> Option<&'a SceneObject> {
    w.objects_named(name)
        .min_by(|a, b| math::hypot(a.x - r.x, a.y - r.y).total_cmp(&math::hypot(b.x - r.x, b.y - r.y)))
}

/// Puts the end effector at `p`, using the chassis for whatever the arm
/// workspace cannot cover. Lateral error is split between strafe and yaw.
fn reach(w: &World, r: &RobotState, p: (f64, f64, f64), gripper: bool) -> Intent {
    let pr = &w.params;
    let (fx, fy) = to_chassis(r, p.0, p.1);
    let u = fx.clamp(pr.arm_u_min + 0.01, pr.arm_u_max - 0.01);
    let v = (p.2 - w.chassis_height(r)).clamp(pr.arm_v_min, pr.arm_v_max);
    let b = if fx > 0.05 { math::atan2(fy, fx) } else { 0.0 };
    Intent {
        dx: fx - u,
        dy: 0.5 * fy,
        dyaw: 0.5 * b,
        du: u - r.arm_u,
        dv: v - r.arm_v,
        gripper,
    }
}

/// Drives the chassis toward a pose while parking the arm.
fn drive(r: &RobotState, goal: (f64, f64), face: f64) -> Intent {
    let (gx, gy) = to_chassis(r, goal.0, goal.1);
    let carry = if r.held_object.is_some() { CARRY_HEIGHT } else { REST_HEIGHT };
    Intent {
        dx: gx,
        dy: gy,
        dyaw: math::wrap_angle(face - r.yaw),
        du: REST_REACH - r.arm_u,
        dv: carry - r.arm_v,
        gripper: r.gripper_closed,
    }
}

/// Grips a point: open if closed on nothing, approach, close when near.
fn grip(w: &World, r: &RobotState, p: (f64, f64, f64)) -> Intent {
    if r.gripper_closed {
        return Intent {
            gripper: false,
            ..reach(w, r, p, false)
        };
    }
    let close = dist3(w.end_effector(r), p) <= 0.5 * w.params.grasp_radius;
    reach(w, r, p, close)
}

fn move_to(w: &World, r: &RobotState, o: &SceneObject) -> Law {
    if o.kind == ObjectKind::Ramp {
        if let Some(ramp) = w.ramp {
            let (hx, hy) = (math::cos(ramp.heading), math::sin(ramp.heading));
            let goal = (ramp.x - hx * RAMP_RUNUP, ramp.y - hy * RAMP_RUNUP);
            let off = math::hypot(goal.0 - r.x, goal.1 - r.y);
            let heading_err = math::wrap_angle(ramp.heading - r.yaw).abs();
            if off <= 0.03 && heading_err <= math::deg(2.0) {
                return Law::Stop;
            }
            return Law::Act(drive(r, goal, ramp.heading));
        }
    }
    if o.kind == ObjectKind::Drawer {
        let (hx, hy, _) = o.handle();
        let (nx, ny) = (math::cos(o.facing), math::sin(o.facing));
        let lateral = ((r.x - hx) * -ny + (r.y - hy) * nx).abs();
        let face = math::wrap_angle(o.facing + core::f64::consts::PI);
        if math::hypot(hx - r.x, hy - r.y) <= MOVE_TO_REACH
            && lateral <= 0.05
            && math::wrap_angle(face - r.yaw).abs() <= math::deg(10.0)
        {
            return Law::Stop;
        }
        return Law::Act(drive(r, (hx + nx * GOAL_STANDOFF, hy + ny * GOAL_STANDOFF), face));
    }
    let d = math::hypot(o.x - r.x, o.y - r.y);
    if d - o.radius <= MOVE_TO_REACH && bearing(r, o.x, o.y).abs() <= MOVE_TO_FACING {
        return Law::Stop;
    }
    let standoff = o.radius + GOAL_STANDOFF;
    let goal = if d > 1e-9 {
        (o.x + (r.x - o.x) / d * standoff, o.y + (r.y - o.y) / d * standoff)
    } else {
        (r.x, r.y)
    };
    Law::Act(drive(r, goal, math::atan2(o.y - r.y, o.x - r.x)))
}

fn grasp(w: &World, r: &RobotState, o: &SceneObject) -> Law {
    if r.held_object == Some(o.id) {
        return Law::Stop;
    }
    if r.held_object.is_some() {
        return diag("already holding another object");
    }
    if !o.kind.graspable() {
        return diag(format!("{} is not graspable", o.name));
    }
    Law::Act(grip(w, r, (o.x, o.y, o.center_z())))
}

fn position_over(w: &World, r: &RobotState, o: &SceneObject, c: &SceneObject) -> Law {
    if r.held_object != Some(o.id) {
        return diag(format!("{} is not held", o.name));
    }
    if !c.kind.container() {
        return diag(format!("{} is not a container", c.name));
    }
    let (cx, cy) = c.compartment_center();
    let top = c.z + c.height;
    let allowed = (c.radius - o.radius).max(0.01);
    let ee = w.end_effector(r);
    if math::hypot(ee.0 - cx, ee.1 - cy) <= allowed && o.z >= top {
        return Law::Stop;
    }
    Law::Act(reach(w, r, (cx, cy, top + o.height / 2.0 + 0.03), true))
}

fn release(r: &RobotState, o: &SceneObject) -> Law {
    if r.held_object == Some(o.id) {
        return Law::Act(Intent::default());
    }
    if o.flags.contained_in.is_some() && o.flags.held_by.is_none() {
        return Law::Stop;
    }
    diag(format!("{} is neither held nor contained", o.name))
}

fn place(w: &World, r: &RobotState, o: &SceneObject) -> Law {
    if r.held_object != Some(o.id) {
        return if o.flags.held_by.is_none() { Law::Stop } else { diag(format!("{} is held elsewhere", o.name)) };
    }
    let ee = w.end_effector(r);
    let rest = w.ground_height(ee.0, ee.1) + o.height / 2.0 + 0.005;
    if (ee.2 - rest).abs() <= 0.01 {
        return Law::Act(Intent {
            gripper: false,
            ..reach(w, r, (ee.0, ee.1, rest), true)
        });
    }
    Law::Act(reach(w, r, (ee.0, ee.1, rest), true))
}

/// Opens (`target` above the open threshold) or closes a drawer by its handle.
fn slide_drawer(w: &World, r: &RobotState, d: &SceneObject, opening: bool) -> Law {
    if d.kind != ObjectKind::Drawer {
        return diag(format!("{} is not a drawer", d.name));
    }
    let holding = r.held_object == Some(d.id);
    let reached = if opening { d.is_open(&w.params) } else { d.is_closed(&w.params) };
    if reached {
        return if holding { Law::Act(Intent::default()) } else { Law::Stop };
    }
    if !holding {
        if r.held_object.is_some() {
            return diag("already holding another object");
        }
        return Law::Act(grip(w, r, d.handle()));
    }
    let target = if opening { DRAWER_OPEN_TARGET } else { -0.005 };
    let shift = target - d.flags.extension;
    let ee = w.end_effector(r);
    let (nx, ny) = (math::cos(d.facing), math::sin(d.facing));
    Law::Act(reach(w, r, (ee.0 + nx * shift, ee.1 + ny * shift, d.center_z()), true))
}

fn move_through(w: &World, r: &RobotState, name: &str) -> Law {
    let group: alloc::vec::Vec<&SceneObject> = w.objects_named(name).collect();
    let Some(first) = group.first() else {
        return diag(format!("{name} not found"));
    };
    let (nx, ny) = (math::cos(first.facing), math::sin(first.facing));
    let (lx, ly) = (-ny, nx);
    let offset = group.iter().map(|o| o.x * nx + o.y * ny).sum::<f64>() / group.len() as f64;
    let s_robot = r.x * nx + r.y * ny - offset;
    if s_robot >= 0.5 {
        return Law::Stop;
    }
    let mut along: alloc::vec::Vec<(f64, f64)> = group.iter().map(|o| (o.x * lx + o.y * ly, o.radius)).collect();
    along.sort_by(|a, b| a.0.total_cmp(&b.0));
    let need = 2.0 * (w.params.chassis_radius + GAP_CLEARANCE);
    let gap = along
        .windows(2)
        .map(|p| ((p[0].0 + p[0].1 + p[1].0 - p[1].1) / 2.0, p[1].0 - p[0].0 - p[0].1 - p[1].1))
        .filter(|(_, width)| *width >= need)
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let Some((mid, width)) = gap else {
        return diag(format!("no passable gap through {name}"));
    };
    let t = r.x * lx + r.y * ly - mid;
    let gx = lx * mid + nx * offset;
    let gy = ly * mid + ny * offset;
    let safe = width / 2.0 - w.params.chassis_radius - 0.02;
    let face = math::atan2(ny, nx);
    let goal = if (s_robot < -0.2 && t.abs() > 0.03) || (s_robot >= -0.2 && t.abs() > safe) {
        (gx - nx * 0.4, gy - ny * 0.4)
    } else {
        (gx + nx * 0.6, gy + ny * 0.6)
    };
    Law::Act(drive(r, goal, face))
}

fn law(w: &World, r: &RobotState, st: &Subtask) -> Law {
    let skill = st.skill.as_str();
    if skill == "Move through <object>" {
        return match &st.object {
            Some(name) => move_through(w, r, name),
            None => diag("missing object"),
        };
    }
    let Some(name) = &st.object else {
        return diag(format!("no scripted law for {skill:?}"));
    };
    let Some(o) = nearest(w, r, name) else {
        return diag(format!("{name} not found"));
    };
    match skill {
        "Move to <object>" => move_to(w, r, o),
        "Grasp <object>" => grasp(w, r, o),
        "Release <object>" => release(r, o),
        "Place <object>" => place(w, r, o),
        "Open <object>" => slide_drawer(w, r, o, true),
        "Close <object>" => slide_drawer(w, r, o, false),
        "Position <object> over the <container>" => {
            let Some(cname) = &st.container else {
                return diag("missing container");
            };
            match nearest(w, r, cname) {
                Some(c) => position_over(w, r, o, c),
                None => diag(format!("{cname} not found")),
            }
        }
        _ => diag(format!("no scripted law for {skill:?}")),
    }
}

/// Whether the success predicate of `subtask` holds for `robot` in `world`.
pub fn satisfied(world: &World, robot: &RobotState, subtask: &Subtask) -> bool {
    matches!(law(world, robot, subtask), Law::Stop)
}

pub struct OraclePolicy<W> {
    world: W,
    skills: SkillList,
    codec: CodecConfig,
}

impl<W: WorldAccess> OraclePolicy<W> {
    pub fn new(world: W, skills: SkillList, codec: CodecConfig) -> Self {
        OraclePolicy { world, skills, codec }
    }

    pub fn skills(&self) -> &SkillList {
        &self.skills
    }

    /// The continuous action for a request, before tokenization.
    pub fn decide(&self, request: &InferenceRequest) -> (Action7, Option<String>) {
        let Some(subtask) = self.skills.match_text(&request.prompt) else {
            let mut a = Action7::zero();
            a.gripper = request.state.gripper_closed;
            return (a, Some(format!("unrecognized skill prompt {:?}", request.prompt)));
        };
        self.world.read(|w| {
            let Ok(r) = w.robot(request.state.id) else {
                let mut a = Action7::zero();
                a.gripper = request.state.gripper_closed;
                return (a, Some(format!("robot {} not in world", request.state.id)));
            };
            let mut a = Action7::zero();
            a.gripper = r.gripper_closed;
            match law(w, r, &subtask) {
                Law::Stop => {
                    a.stop = true;
                    (a, None)
                }
                Law::Diag(d) => (a, Some(d)),
                Law::Act(i) => (finish(w, r, i), None),
            }
        })
    }

    pub fn respond(&self, request: &InferenceRequest) -> InferenceResponse {
        let (action, diagnostic) = self.decide(request);
        let tokens = encode_action(&action, &self.codec)
            .or_else(|_| encode_action(&Action7::zero(), &self.codec))
            .map(|t| t.as_slice().to_vec())
            .unwrap_or_default();
        InferenceResponse { tokens, diagnostic }
    }
}

/// Applies the lookahead cap and maps arm terms to the gimbal on S1.
fn finish(w: &World, r: &RobotState, mut i: Intent) -> Action7 {
    let p = &w.params;
    let lin = LOOKAHEAD * p.max_linear_speed * p.dt;
    let ang = LOOKAHEAD * p.max_angular_speed * p.dt;
    let arm = LOOKAHEAD * p.max_arm_step;
    if r.variant == RobotVariant::S1 {
        i.du = -r.gimbal_yaw;
        i.dv = -r.gimbal_pitch;
        i.gripper = false;
    }
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    Action7 {
        stop: false,
        dx: math::clamp_abs(finite(i.dx), lin),
        dy: math::clamp_abs(finite(i.dy), lin),
        dyaw: math::clamp_abs(finite(i.dyaw), ang),
        du: math::clamp_abs(finite(i.du), arm),
        dv: math::clamp_abs(finite(i.dv), arm),
        gripper: i.gripper,
    }
}

impl<W: WorldAccess> InferenceClient for OraclePolicy<W> {
    fn infer(&mut self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
        Ok(self.respond(request))
    }
}
