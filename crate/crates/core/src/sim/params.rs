use serde::{Deserialize, Serialize};

use crate::math;

/// Physical and sensor constants of the simulated robots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    /// Largest arm end-effector displacement per tick.
    pub max_arm_step: f64,
    pub max_gimbal_rate: f64,
    pub arm_u_min: f64,
    pub arm_u_max: f64,
    pub arm_v_min: f64,
    pub arm_v_max: f64,
    pub gimbal_pitch_min: f64,
    pub gimbal_pitch_max: f64,
    pub grasp_radius: f64,
    pub chassis_radius: f64,
    pub wheelbase: f64,
    pub camera_height: f64,
    pub gimbal_height: f64,
    pub fov: f64,
    pub max_detection_range: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub distance_sensor_max: f64,
    pub projectile_speed: f64,
    pub gravity: f64,
    /// Downhill creep speed per unit sine of slope once static friction gives out.
    pub slip_coefficient: f64,
    pub static_friction_slope: f64,
    pub drawer_max_extension: f64,
    pub drawer_open_extension: f64,
    pub drawer_closed_extension: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1.0 / 30.0,
            max_linear_speed: 0.5,
            max_angular_speed: 2.0,
            max_arm_step: 0.01,
            max_gimbal_rate: 3.0,
            arm_u_min: 0.10,
            arm_u_max: 0.36,
            arm_v_min: 0.0,
            arm_v_max: 0.30,
            gimbal_pitch_min: math::deg(-40.0),
            gimbal_pitch_max: math::deg(40.0),
            grasp_radius: 0.05,
            chassis_radius: 0.2,
            wheelbase: 0.3,
            camera_height: 0.2,
            gimbal_height: 0.3,
            fov: math::deg(120.0),
            max_detection_range: 5.0,
            image_width: 1280.0,
            image_height: 720.0,
            distance_sensor_max: 10.0,
            projectile_speed: 26.0,
            gravity: 9.81,
            slip_coefficient: 0.3,
            static_friction_slope: math::deg(3.0),
            drawer_max_extension: 0.2,
            drawer_open_extension: 0.15,
            drawer_closed_extension: 0.01,
        }
    }
}

impl SimParams {
    /// Pinhole focal length in pixels for the horizontal field of view.
    pub fn focal_px(&self) -> f64 {
        (self.image_width / 2.0) / math::tan(self.fov / 2.0)
    }
}
