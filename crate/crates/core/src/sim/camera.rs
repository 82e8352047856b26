//! Symbolic pinhole camera producing detector-style observations.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{ObjectId, RobotState, RobotVariant, SceneObject, World};
use crate::math;

/// Pixel rectangle in the virtual image, `x0 <= x1`, `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn within(&self, w: f64, h: f64) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= w && self.y1 <= h && self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: ObjectId,
    pub name: String,
    pub bbox: BBox,
    /// Ground-truth horizontal distance from the camera.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub timestamp: f64,
    pub robot_id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub detections: Vec<Detection>,
}

impl SceneSnapshot {
    pub fn empty(timestamp: f64) -> Self {
        SceneSnapshot {
            timestamp,
            robot_id: 0,
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            pitch: 0.0,
            detections: Vec::new(),
        }
    }
}

/// Heading of the optical axis: chassis yaw on EP, chassis plus gimbal yaw on S1.
pub(crate) fn axis_yaw(r: &RobotState) -> f64 {
    match r.variant {
        RobotVariant::Ep => r.yaw,
        RobotVariant::S1 => math::wrap_angle(r.yaw + r.gimbal_yaw),
    }
}

fn axis_pitch(r: &RobotState) -> f64 {
    match r.variant {
        RobotVariant::Ep => r.pitch,
        RobotVariant::S1 => r.gimbal_pitch,
    }
}

pub(crate) fn camera_position(world: &World, r: &RobotState) -> (f64, f64, f64) {
    let mount = match r.variant {
        RobotVariant::Ep => world.params.camera_height,
        RobotVariant::S1 => world.params.gimbal_height,
    };
    (r.x, r.y, world.chassis_height(r) + mount)
}

/// Bearing of an object relative to the optical axis and its horizontal range.
fn bearing_and_range(world: &World, r: &RobotState, o: &SceneObject) -> (f64, f64) {
    let (cx, cy, _) = camera_position(world, r);
    let (dx, dy) = (o.x - cx, o.y - cy);
    let bearing = math::wrap_angle(math::atan2(dy, dx) - axis_yaw(r));
    (bearing, math::hypot(dx, dy))
}

pub(crate) fn visible(world: &World, r: &RobotState, o: &SceneObject) -> bool {
    let (bearing, range) = bearing_and_range(world, r, o);
    bearing.abs() <= world.params.fov / 2.0 && range > 0.0 && range <= world.params.max_detection_range
}

pub(crate) fn view(world: &World, r: &RobotState) -> SceneSnapshot {
    let p = &world.params;
    let f = p.focal_px();
    let (w, h) = (p.image_width, p.image_height);
    let (cx, cy, cz) = camera_position(world, r);
    let yaw = axis_yaw(r);
    let pitch = axis_pitch(r);
    let (sy, cyaw) = (math::sin(yaw), math::cos(yaw));
    let (sp, cp) = (math::sin(pitch), math::cos(pitch));
    let mut detections = Vec::new();
    for o in &world.objects {
        if !visible(world, r, o) {
            continue;
        }
        let (rx, ry, rz) = (o.x - cx, o.y - cy, o.center_z() - cz);
        let fwd = rx * cyaw + ry * sy;
        let left = -rx * sy + ry * cyaw;
        let depth = (fwd * cp + rz * sp).max(1e-3);
        let up = -fwd * sp + rz * cp;
        let u = w / 2.0 - f * left / depth;
        let v = h / 2.0 - f * up / depth;
        let hw = f * o.radius / depth;
        let hh = f * (o.height / 2.0) / depth;
        let bbox = BBox {
            x0: (u - hw).clamp(0.0, w),
            x1: (u + hw).clamp(0.0, w),
            y0: (v - hh).clamp(0.0, h),
            y1: (v + hh).clamp(0.0, h),
        };
        detections.push(Detection {
            object_id: o.id,
            name: o.name.clone(),
            bbox,
            distance: math::hypot(rx, ry),
        });
    }
    SceneSnapshot {
        timestamp: world.time(),
        robot_id: r.id,
        x: r.x,
        y: r.y,
        yaw: r.yaw,
        pitch: r.pitch,
        detections,
    }
}
