//! Complementary IMU fusion: integrate the gyro, then pull the orientation a
//! fixed fraction of the way toward agreeing with the measured gravity.

use std::ops::Mul;

use crate::model::{Quaternion, Time};

pub const STANDARD_GRAVITY: f64 = 9.806_65;
/// Accelerometer magnitudes outside `[0.5 g, 1.5 g]` are not trusted as gravity.
pub const ACCEL_GATE: (f64, f64) = (0.5 * STANDARD_GRAVITY, 1.5 * STANDARD_GRAVITY);
pub const DEFAULT_ALPHA: f64 = 0.98;
pub const DEFAULT_RATE_HZ: f64 = 125.0;

pub type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two non-zero vectors, robust near 0 and pi.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Quaternion {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conjugate(self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotation by `angle` radians about `axis` (any non-zero length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        Quaternion {
            w: c,
            x: s * axis[0] / n,
            y: s * axis[1] / n,
            z: s * axis[2] / n,
        }
    }

    /// Rotation whose axis and angle are given by the rotation vector `v`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        Self::from_axis_angle(v, norm(v))
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let p = Quaternion {
            w: 0.0,
            x: v[0],
            y: v[1],
            z: v[2],
        };
        let r = self * p * self.conjugate();
        [r.x, r.y, r.z]
    }

    /// Roll, pitch, yaw (ZYX convention).
    pub fn to_euler(self) -> Vec3 {
        let Quaternion { w, x, y, z } = self;
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        [roll, pitch, yaw]
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, r: Quaternion) -> Quaternion {
        let l = self;
        Quaternion {
            w: l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            x: l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            y: l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            z: l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        }
    }
}

/// Orientation estimate: `q` rotates body-frame vectors into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionState {
    pub q: Quaternion,
    /// Gyro weight per step; the gravity correction applies `1 - alpha`.
    pub alpha: f64,
    pub last_stamp: Option<Time>,
}

impl FusionState {
    pub fn new(alpha: f64) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
        Self {
            q: Quaternion::IDENTITY,
            alpha,
            last_stamp: None,
        }
    }

    /// World "up" expressed in the body frame: what a resting accelerometer
    /// should read, up to scale.
    pub fn predicted_gravity(&self) -> Vec3 {
        self.q.conjugate().rotate([0.0, 0.0, 1.0])
    }
}

impl Default for FusionState {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA)
    }
}

/// One filter step. `dt` must be positive.
pub fn fusion_step(state: FusionState, gyro: Vec3, accel: Vec3, dt: f64) -> FusionState {
    debug_assert!(dt > 0.0, "dt must be positive");
    let mut q = state.q * Quaternion::from_rotation_vector([gyro[0] * dt, gyro[1] * dt, gyro[2] * dt]);

    let magnitude = norm(accel);
    if (ACCEL_GATE.0..=ACCEL_GATE.1).contains(&magnitude) {
        let predicted = q.conjugate().rotate([0.0, 0.0, 1.0]);
        let measured = [accel[0] / magnitude, accel[1] / magnitude, accel[2] / magnitude];
        let axis = cross(predicted, measured);
        let error = angle_between(predicted, measured);
        if norm(axis) > 1e-15 {
            // A body-frame rotation by -phi about `axis` turns the prediction
            // by +phi toward the measurement.
            q = q * Quaternion::from_axis_angle(axis, -(1.0 - state.alpha) * error);
        }
    }

    FusionState {
        q: q.normalized(),
        ..state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn equilibrium_stays_identity() {
        let mut s = FusionState::default();
        for _ in 0..1000 {
            s = fusion_step(s, [0.0; 3], [0.0, 0.0, STANDARD_GRAVITY], 0.008);
        }
        assert!((s.q.w - 1.0).abs() < 1e-12);
        assert!(s.q.x.abs() + s.q.y.abs() + s.q.z.abs() < 1e-12);
    }

    #[test]
    fn constant_yaw_rate_matches_closed_form() {
        let mut s = FusionState::default();
        for _ in 0..100 {
            s = fusion_step(s, [0.0, 0.0, PI / 2.0], [0.0, 0.0, STANDARD_GRAVITY], 0.01);
        }
        // closed form after 1 s: rotation of pi/2 about z
        let expected = Quaternion::from_axis_angle([0.0, 0.0, 1.0], PI / 2.0);
        let yaw = s.q.to_euler()[2];
        assert!((yaw - PI / 2.0).abs() < 1e-3, "yaw {yaw}");
        let d = (s.q.w - expected.w).abs() + (s.q.z - expected.z).abs();
        assert!(d < 1e-9, "{s:?}");
    }

    #[test]
    fn converges_monotonically_to_measured_gravity() {
        let tilt = 0.3f64;
        let accel = [0.0, -STANDARD_GRAVITY * tilt.sin(), STANDARD_GRAVITY * tilt.cos()];
        let mut s = FusionState::new(0.98);
        let mut prev = angle_between(s.predicted_gravity(), accel);
        for _ in 0..2000 {
            s = fusion_step(s, [0.0; 3], accel, 0.008);
            let err = angle_between(s.predicted_gravity(), accel);
            assert!(err <= prev + 1e-15, "{err} > {prev}");
            prev = err;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn out_of_range_accel_skips_correction() {
        let s0 = FusionState::default();
        let s = fusion_step(s0, [0.0; 3], [3.0, 0.0, 0.0], 0.01);
        assert_eq!(s.q, Quaternion::IDENTITY);
        let s = fusion_step(s0, [0.0; 3], [0.0, 20.0, 0.0], 0.01);
        assert_eq!(s.q, Quaternion::IDENTITY);
    }

    #[test]
    fn rotate_matches_axis_angle() {
        let q = Quaternion::from_axis_angle([1.0, 0.0, 0.0], PI / 2.0);
        let v = q.rotate([0.0, 1.0, 0.0]);
        assert!((v[0]).abs() < 1e-12 && (v[1]).abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12);
    }
}
