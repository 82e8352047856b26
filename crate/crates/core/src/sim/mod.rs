//! Deterministic 2.5-D world: omnidirectional chassis kinematics, a
//! horizontal-gripper arm (EP) or gimbal with blaster (S1), attach/release
//! grasping, drawers, a ramp, and symbolic camera/IMU/range sensors.

mod ballistics;
mod camera;
mod params;
mod scene;
mod terrain;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlSignal, GripperCommand};
use crate::math;

pub use ballistics::{ballistic_drop, HitReport};
pub use camera::{BBox, Detection, SceneSnapshot};
pub use params::SimParams;
pub use scene::{ObjectSpec, Placement, RampSpec, RobotSpawn, SceneError, SceneSpec, SCENE_SCHEMA};
pub use terrain::Ramp;

pub type ObjectId = u32;
pub type RobotId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("robot {0} does not exist")]
    NoSuchRobot(RobotId),
    #[error("robot {0} has no blaster")]
    NoBlaster(RobotId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotVariant {
    /// Arm and gripper.
    Ep,
    /// Gimbal and blaster.
    S1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub variant: RobotVariant,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub pitch: f64,
    /// End-effector forward offset in the chassis frame.
    pub arm_u: f64,
    /// End-effector height above the chassis ground point.
    pub arm_v: f64,
    pub gripper_closed: bool,
    pub gimbal_yaw: f64,
    pub gimbal_pitch: f64,
    pub held_object: Option<ObjectId>,
}

impl RobotState {
    pub fn new(id: RobotId, variant: RobotVariant, x: f64, y: f64, yaw: f64) -> Self {
        RobotState {
            id,
            variant,
            x,
            y,
            yaw: math::wrap_angle(yaw),
            pitch: 0.0,
            arm_u: 0.2,
            arm_v: 0.12,
            gripper_closed: false,
            gimbal_yaw: 0.0,
            gimbal_pitch: 0.0,
            held_object: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Can,
    Cube,
    Box,
    Drawer,
    TargetBoard,
    Obstacle,
    Ramp,
    Distractor,
}

impl ObjectKind {
    pub fn graspable(self) -> bool {
        matches!(self, ObjectKind::Can | ObjectKind::Cube | ObjectKind::Distractor)
    }

    pub fn container(self) -> bool {
        matches!(self, ObjectKind::Box | ObjectKind::Drawer)
    }

    pub fn blocks_motion(self) -> bool {
        matches!(self, ObjectKind::Obstacle)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectFlags {
    /// Drawer slide-out distance.
    pub extension: f64,
    pub knocked_down: bool,
    pub contained_in: Option<ObjectId>,
    pub held_by: Option<RobotId>,
    /// Drawer handle grip reference: extension minus the gripping
    /// end-effector's projection on the drawer normal at grab time.
    pub grip_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub name: String,
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    /// Height of the object's base.
    pub z: f64,
    pub radius: f64,
    pub height: f64,
    /// Outward normal of a drawer front or target board face.
    pub facing: f64,
    pub flags: ObjectFlags,
}

impl SceneObject {
    pub fn center_z(&self) -> f64 {
        self.z + self.height / 2.0
    }

    pub fn is_open(&self, p: &SimParams) -> bool {
        self.kind == ObjectKind::Drawer && self.flags.extension >= p.drawer_open_extension
    }

    pub fn is_closed(&self, p: &SimParams) -> bool {
        self.kind == ObjectKind::Drawer && self.flags.extension <= p.drawer_closed_extension
    }

    fn normal(&self) -> (f64, f64) {
        (math::cos(self.facing), math::sin(self.facing))
    }

    /// Center of the receiving footprint: a drawer's tray slides with it.
    pub fn compartment_center(&self) -> (f64, f64) {
        if self.kind == ObjectKind::Drawer {
            let (nx, ny) = self.normal();
            (
                self.x + nx * self.flags.extension,
                self.y + ny * self.flags.extension,
            )
        } else {
            (self.x, self.y)
        }
    }

    /// Drawer handle position.
    pub fn handle(&self) -> (f64, f64, f64) {
        let (nx, ny) = self.normal();
        let reach = self.radius + self.flags.extension;
        (self.x + nx * reach, self.y + ny * reach, self.center_z())
    }

    pub fn accepts_contents(&self, p: &SimParams) -> bool {
        match self.kind {
            ObjectKind::Box => true,
            ObjectKind::Drawer => self.is_open(p),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldEventKind {
    Grasped { object: ObjectId },
    GrabbedHandle { drawer: ObjectId },
    Released { object: ObjectId, into: Option<ObjectId> },
    DrawerOpened { drawer: ObjectId },
    DrawerClosed { drawer: ObjectId },
    Fired { hit: Option<ObjectId> },
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub tick: u64,
    pub robot: RobotId,
    pub kind: WorldEventKind,
}

/// Ground-truth pose as reported by the IMU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub tick: u64,
    pub params: SimParams,
    pub robots: Vec<RobotState>,
    pub objects: Vec<SceneObject>,
    pub ramp: Option<Ramp>,
    pub events: Vec<WorldEvent>,
}

impl World {
    pub fn new(params: SimParams) -> Self {
        World {
            tick: 0,
            params,
            robots: Vec::new(),
            objects: Vec::new(),
            ramp: None,
            events: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.params.dt
    }

    pub fn robot(&self, id: RobotId) -> Result<&RobotState, SimError> {
        self.robots
            .iter()
            .find(|r| r.id == id)
            .ok_or(SimError::NoSuchRobot(id))
    }

    fn robot_index(&self, id: RobotId) -> Result<usize, SimError> {
        self.robots
            .iter()
            .position(|r| r.id == id)
            .ok_or(SimError::NoSuchRobot(id))
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_index(&self, id: ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// Objects whose normalized name equals `name`.
    pub fn objects_named(&self, name: &str) -> impl Iterator<Item = &SceneObject> + '_ {
        let want = crate::detect::normalize_name(name);
        self.objects
            .iter()
            .filter(move |o| crate::detect::normalize_name(&o.name) == want)
    }

    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        self.ramp.map_or(0.0, |r| r.height_at(x, y))
    }

    /// Rear and front wheel contact points of a chassis pose.
    pub fn contact_points(&self, x: f64, y: f64, yaw: f64) -> ((f64, f64), (f64, f64)) {
        let h = self.params.wheelbase / 2.0;
        let (c, s) = (math::cos(yaw), math::sin(yaw));
        ((x - c * h, y - s * h), (x + c * h, y + s * h))
    }

    /// Chassis pitch and ground height at the chassis center.
    fn attitude(&self, x: f64, y: f64, yaw: f64) -> (f64, f64) {
        let (rear, front) = self.contact_points(x, y, yaw);
        let zr = self.ground_height(rear.0, rear.1);
        let zf = self.ground_height(front.0, front.1);
        (math::atan2(zf - zr, self.params.wheelbase), 0.5 * (zr + zf))
    }

    pub fn chassis_height(&self, r: &RobotState) -> f64 {
        self.attitude(r.x, r.y, r.yaw).1
    }

    /// Whether the chassis contact segment crosses the ramp incline.
    pub fn chassis_overlaps_ramp(&self, r: &RobotState) -> bool {
        let Some(ramp) = self.ramp else { return false };
        let (rear, front) = self.contact_points(r.x, r.y, r.yaw);
        ramp.segment_overlaps_incline(rear, front)
    }

    /// The chassis center of mass is supported by the platform.
    pub fn on_platform(&self, r: &RobotState) -> bool {
        self.ramp.is_some_and(|ramp| ramp.on_platform(r.x, r.y))
    }

    /// End-effector position in the world frame.
    pub fn end_effector(&self, r: &RobotState) -> (f64, f64, f64) {
        let (c, s) = (math::cos(r.yaw), math::sin(r.yaw));
        (
            r.x + c * r.arm_u,
            r.y + s * r.arm_u,
            self.chassis_height(r) + r.arm_v,
        )
    }

    pub fn read_imu(&self, robot: RobotId) -> Result<ImuReading, SimError> {
        let r = self.robot(robot)?;
        Ok(ImuReading {
            x: r.x,
            y: r.y,
            yaw: r.yaw,
            pitch: r.pitch,
        })
    }

    fn collides(&self, x: f64, y: f64) -> bool {
        let rad = self.params.chassis_radius;
        self.objects
            .iter()
            .filter(|o| o.kind.blocks_motion())
            .any(|o| math::hypot(o.x - x, o.y - y) < rad + o.radius)
    }

    /// Advances the world by one tick of length `dt`.
    ///
    /// `signals` pairs robot ids with commands; robots without a command
    /// hold still. Out-of-limit commands are clamped.
    pub fn step(&mut self, signals: &[(RobotId, ControlSignal)], dt: f64) -> Vec<(RobotId, HitReport)> {
        let mut hits = Vec::new();
        let ids: Vec<RobotId> = self.robots.iter().map(|r| r.id).collect();
        for id in ids {
            let sig = signals
                .iter()
                .find(|(rid, _)| *rid == id)
                .map(|(_, s)| s.clamped(&self.params, dt))
                .unwrap_or_default();
            if let Some(report) = self.step_robot(id, &sig, dt) {
                hits.push((id, report));
            }
        }
        self.settle_objects();
        self.tick += 1;
        hits
    }

    fn step_robot(&mut self, id: RobotId, sig: &ControlSignal, dt: f64) -> Option<HitReport> {
        let idx = self.robot_index(id).ok()?;
        let p = self.params;
        let r = self.robots[idx].clone();

        // Chassis: body-frame velocity rotated into the world frame.
        let (mut wx, mut wy) = math::rotate(sig.vx * math::cos(r.pitch), sig.vy, r.yaw);
        if let Some(ramp) = self.ramp {
            if self.chassis_overlaps_ramp(&r) && r.pitch.abs() > p.static_friction_slope {
                let slip = p.slip_coefficient * math::sin(r.pitch.abs());
                wx -= slip * math::cos(ramp.heading);
                wy -= slip * math::sin(ramp.heading);
            }
        }
        let (mut nx, mut ny) = (r.x + wx * dt, r.y + wy * dt);
        if (nx != r.x || ny != r.y) && self.collides(nx, ny) {
            self.events.push(WorldEvent {
                tick: self.tick,
                robot: id,
                kind: WorldEventKind::Blocked,
            });
            nx = r.x;
            ny = r.y;
        }
        let yaw = math::wrap_angle(r.yaw + sig.wz * dt);
        let (pitch, _) = self.attitude(nx, ny, yaw);
        {
            let rob = &mut self.robots[idx];
            rob.x = nx;
            rob.y = ny;
            rob.yaw = yaw;
            rob.pitch = pitch;
            match rob.variant {
                RobotVariant::Ep => {
                    rob.arm_u = (rob.arm_u + sig.arm_du).clamp(p.arm_u_min, p.arm_u_max);
                    rob.arm_v = (rob.arm_v + sig.arm_dv).clamp(p.arm_v_min, p.arm_v_max);
                }
                RobotVariant::S1 => {
                    rob.gimbal_yaw = math::wrap_angle(rob.gimbal_yaw + sig.gimbal_dyaw);
                    rob.gimbal_pitch = (rob.gimbal_pitch + sig.gimbal_dpitch)
                        .clamp(p.gimbal_pitch_min, p.gimbal_pitch_max);
                }
            }
        }
        self.carry_held(idx);

        if self.robots[idx].variant == RobotVariant::Ep {
            match sig.gripper {
                GripperCommand::Close => self.close_gripper(idx),
                GripperCommand::Open => self.open_gripper(idx),
                GripperCommand::None => {}
            }
        }
        if sig.fire {
            return self.fire_blaster(id).ok();
        }
        None
    }

    fn close_gripper(&mut self, idx: usize) {
        let r = self.robots[idx].clone();
        if r.gripper_closed {
            return;
        }
        self.robots[idx].gripper_closed = true;
        let ee = self.end_effector(&r);
        let d3 = |a: (f64, f64, f64), b: (f64, f64, f64)| {
            let (dx, dy, dz) = (a.0 - b.0, a.1 - b.1, a.2 - b.2);
            math::sqrt(dx * dx + dy * dy + dz * dz)
        };
        let reach = self.params.grasp_radius;
        let mut best: Option<(f64, usize)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if o.flags.held_by.is_some() {
                continue;
            }
            let d = if o.kind.graspable() {
                d3(ee, (o.x, o.y, o.center_z()))
            } else if o.kind == ObjectKind::Drawer {
                d3(ee, o.handle())
            } else {
                continue;
            };
            if d <= reach && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let Some((_, oi)) = best else { return };
        let id = self.robots[idx].id;
        let obj_id = self.objects[oi].id;
        self.robots[idx].held_object = Some(obj_id);
        let o = &mut self.objects[oi];
        o.flags.held_by = Some(id);
        let kind = if o.kind == ObjectKind::Drawer {
            let (nx, ny) = (math::cos(o.facing), math::sin(o.facing));
            o.flags.grip_ref = Some(o.flags.extension - (ee.0 * nx + ee.1 * ny));
            WorldEventKind::GrabbedHandle { drawer: obj_id }
        } else {
            o.flags.contained_in = None;
            WorldEventKind::Grasped { object: obj_id }
        };
        self.events.push(WorldEvent {
            tick: self.tick,
            robot: id,
            kind,
        });
        self.carry_held(idx);
    }

    fn open_gripper(&mut self, idx: usize) {
        let r = self.robots[idx].clone();
        self.robots[idx].gripper_closed = false;
        let Some(obj_id) = r.held_object else { return };
        self.robots[idx].held_object = None;
        let Some(oi) = self.object_index(obj_id) else { return };
        self.objects[oi].flags.held_by = None;
        if self.objects[oi].kind == ObjectKind::Drawer {
            self.objects[oi].flags.grip_ref = None;
            return;
        }
        let (ex, ey, _) = self.end_effector(&r);
        let params = self.params;
        let into = self
            .objects
            .iter()
            .filter(|c| c.id != obj_id && c.kind.container() && c.accepts_contents(&params))
            .find(|c| {
                let (cx, cy) = c.compartment_center();
                math::hypot(ex - cx, ey - cy) <= c.radius
            })
            .map(|c| (c.id, c.compartment_center(), c.z));
        let ground = self.ground_height(ex, ey);
        let o = &mut self.objects[oi];
        match into {
            Some((cid, (cx, cy), cz)) => {
                o.flags.contained_in = Some(cid);
                o.x = cx;
                o.y = cy;
                o.z = cz;
            }
            None => {
                o.x = ex;
                o.y = ey;
                o.z = ground;
            }
        }
        self.events.push(WorldEvent {
            tick: self.tick,
            robot: r.id,
            kind: WorldEventKind::Released {
                object: obj_id,
                into: into.map(|c| c.0),
            },
        });
    }

    /// Moves the held object (or drawer slide) with the end effector.
    fn carry_held(&mut self, idx: usize) {
        let r = self.robots[idx].clone();
        let Some(obj_id) = r.held_object else { return };
        let ee = self.end_effector(&r);
        let params = self.params;
        let tick = self.tick;
        let Some(oi) = self.object_index(obj_id) else { return };
        let o = &mut self.objects[oi];
        if o.kind == ObjectKind::Drawer {
            let (nx, ny) = (math::cos(o.facing), math::sin(o.facing));
            let Some(grip) = o.flags.grip_ref else { return };
            let was_open = o.is_open(&params);
            let was_closed = o.is_closed(&params);
            o.flags.extension = (ee.0 * nx + ee.1 * ny + grip).clamp(0.0, params.drawer_max_extension);
            let (open, closed) = (o.is_open(&params), o.is_closed(&params));
            let drawer = o.id;
            if open && !was_open {
                self.events.push(WorldEvent {
                    tick,
                    robot: r.id,
                    kind: WorldEventKind::DrawerOpened { drawer },
                });
            }
            if closed && !was_closed {
                self.events.push(WorldEvent {
                    tick,
                    robot: r.id,
                    kind: WorldEventKind::DrawerClosed { drawer },
                });
            }
        } else {
            o.x = ee.0;
            o.y = ee.1;
            o.z = ee.2 - o.height / 2.0;
        }
    }

    /// Contained objects follow their container.
    fn settle_objects(&mut self) {
        for i in 0..self.objects.len() {
            let Some(cid) = self.objects[i].flags.contained_in else { continue };
            if let Some(c) = self.object(cid) {
                let (cx, cy) = c.compartment_center();
                let cz = c.z;
                let o = &mut self.objects[i];
                o.x = cx;
                o.y = cy;
                o.z = cz;
            }
        }
    }

    /// Distance along the camera (EP) or gimbal (S1) axis to the first
    /// object whose footprint the ray passes through, or the sensor's
    /// max-range value.
    pub fn read_distance(&self, robot: RobotId) -> Result<f64, SimError> {
        let r = self.robot(robot)?;
        let heading = camera::axis_yaw(r);
        let (ux, uy) = (math::cos(heading), math::sin(heading));
        let max = self.params.distance_sensor_max;
        let mut best = max;
        for o in &self.objects {
            if o.flags.held_by.is_some() || o.kind == ObjectKind::Ramp {
                continue;
            }
            let (rx, ry) = (o.x - r.x, o.y - r.y);
            let along = rx * ux + ry * uy;
            let lateral = (-rx * uy + ry * ux).abs();
            if along > 0.0 && lateral <= o.radius && along < best {
                best = along;
            }
        }
        Ok(best)
    }

    pub fn camera_view(&self, robot: RobotId) -> Result<SceneSnapshot, SimError> {
        let r = self.robot(robot)?;
        Ok(camera::view(self, r))
    }

    /// Whether an object satisfies the camera's field-of-view and range predicates.
    pub fn in_view(&self, robot: &RobotState, object: &SceneObject) -> bool {
        camera::visible(self, robot, object)
    }

    pub fn fire_blaster(&mut self, robot: RobotId) -> Result<HitReport, SimError> {
        let r = self.robot(robot)?.clone();
        if r.variant != RobotVariant::S1 {
            return Err(SimError::NoBlaster(robot));
        }
        let report = ballistics::fire(self, &r);
        if let Some(hit) = report.hit {
            if let Some(i) = self.object_index(hit) {
                self.objects[i].flags.knocked_down = true;
            }
        }
        self.events.push(WorldEvent {
            tick: self.tick,
            robot,
            kind: WorldEventKind::Fired { hit: report.hit },
        });
        Ok(report)
    }

    pub fn spawn(spec: &SceneSpec, seed: u64) -> Result<World, SceneError> {
        scene::spawn(spec, seed)
    }
}
