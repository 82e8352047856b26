//! Blaster projectile model: straight launch along the gimbal axis with
//! constant gravity and no drag.

use serde::{Deserialize, Serialize};

use super::{camera, ObjectId, ObjectKind, RobotState, World};
use crate::math;

/// Vertical drop of a projectile after covering horizontal `distance`.
pub fn ballistic_drop(distance: f64, speed: f64, gravity: f64) -> f64 {
    let t = distance / speed;
    0.5 * gravity * t * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub hit: Option<ObjectId>,
    /// Nearest target considered, if any.
    pub target: Option<ObjectId>,
    /// Distance from the projectile to that target's center at its plane.
    pub miss_distance: f64,
    /// Projectile height minus target center height at the target plane.
    pub vertical_error: f64,
}

pub(crate) fn fire(world: &World, r: &RobotState) -> HitReport {
    let p = &world.params;
    let (ox, oy, oz) = camera::camera_position(world, r);
    let yaw = camera::axis_yaw(r);
    let pitch = r.gimbal_pitch;
    let (ux, uy, uz) = (
        math::cos(pitch) * math::cos(yaw),
        math::cos(pitch) * math::sin(yaw),
        math::sin(pitch),
    );
    let v = p.projectile_speed;
    let mut report = HitReport {
        hit: None,
        target: None,
        miss_distance: f64::INFINITY,
        vertical_error: 0.0,
    };
    let mut best_t = f64::INFINITY;
    for o in world
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::TargetBoard && !o.flags.knocked_down)
    {
        let (cx, cy, cz) = (o.x, o.y, o.center_z());
        let range = math::hypot(cx - ox, cy - oy);
        if range <= 0.0 {
            continue;
        }
        // Target plane: vertical, through the center, facing the shooter.
        let (nx, ny) = ((cx - ox) / range, (cy - oy) / range);
        let closing = v * (ux * nx + uy * ny);
        if closing <= 0.0 {
            continue;
        }
        let t = range / closing;
        let px = ox + v * t * ux;
        let py = oy + v * t * uy;
        let pz = oz + v * t * uz - 0.5 * p.gravity * t * t;
        let (dx, dy, dz) = (px - cx, py - cy, pz - cz);
        let miss = math::sqrt(dx * dx + dy * dy + dz * dz);
        if report.target.is_none() || miss < report.miss_distance {
            report.target = Some(o.id);
            report.miss_distance = miss;
            report.vertical_error = dz;
        }
        if miss <= o.radius && t < best_t {
            best_t = t;
            report.hit = Some(o.id);
        }
    }
    report
}
