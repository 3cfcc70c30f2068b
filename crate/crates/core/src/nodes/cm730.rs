//! Simulated CM-730 sub-controller: 20 servo joints plus a raw IMU.

use std::f64::consts::PI;

use crate::model::{Header, Imu, JointState, Time};
use crate::nodes::fusion::STANDARD_GRAVITY;

pub const JOINT_COUNT: usize = 20;
/// Accelerometer tilt about the body x axis, in degrees.
pub const TILT_DEG: f64 = 5.0;

pub fn joint_names() -> Vec<String> {
    (0..JOINT_COUNT).map(|i| format!("j{i}")).collect()
}

/// Gravity as seen by an accelerometer tilted `TILT_DEG` about x.
pub fn tilted_gravity() -> [f64; 3] {
    let a = TILT_DEG.to_radians();
    [0.0, -STANDARD_GRAVITY * a.sin(), STANDARD_GRAVITY * a.cos()]
}

/// Readings at time `t`. Deterministic in `t`; both messages carry `t` as stamp.
pub fn cm730_tick(t: Time) -> (JointState, Imu) {
    let s = t.as_secs_f64();
    let positions = (0..JOINT_COUNT)
        .map(|i| 0.5 * (2.0 * PI * 0.25 * s + 0.1 * i as f64).sin())
        .collect();
    let joints = JointState::new(Header::new(t, "base_link"), joint_names(), positions, Vec::new(), Vec::new())
        .expect("equal list lengths");
    let gyro = [0.0, 0.0, 0.2 * (2.0 * PI * 0.1 * s).sin()];
    let imu = Imu::raw(Header::new(t, "imu_link"), gyro, tilted_gravity());
    (joints, imu)
}
