//! Planar poses, angle arithmetic and the robot-centric polar transform.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
}

/// Wraps an angle into the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> Result<f64, GeometryError> {
    if !a.is_finite() {
        return Err(GeometryError::NonFiniteAngle(a));
    }
    Ok(wrap(a))
}

/// Infallible variant of [`wrap_angle`] for values already known to be finite.
/// Non-finite input is returned unchanged.
#[inline]
pub fn wrap(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    // values that land within rounding of the cut belong to +pi
    if w <= -PI + 4.0 * f64::EPSILON * PI || (w - PI).abs() <= 4.0 * f64::EPSILON * PI {
        w = PI;
    }
    w
}

/// Robot configuration in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn position(&self) -> GoalPosition {
        GoalPosition {
            x: self.x,
            y: self.y,
        }
    }

    pub fn distance_to(&self, p: GoalPosition) -> f64 {
        (p.x - self.x).hypot(p.y - self.y)
    }

    /// Rotates a body-frame velocity (forward, left) into the world frame.
    pub fn body_to_world(&self, v_x: f64, v_y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (v_x * c - v_y * s, v_x * s + v_y * c)
    }

    /// Applies a rigid planar motion (rotation about the origin, then translation).
    pub fn transformed(&self, rotation: f64, dx: f64, dy: f64) -> Pose {
        let (s, c) = rotation.sin_cos();
        Pose::new(
            c * self.x - s * self.y + dx,
            s * self.x + c * self.y + dy,
            self.theta + rotation,
        )
    }
}

/// Target position; the arrival heading is free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalPosition {
    pub x: f64,
    pub y: f64,
}

impl GoalPosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: GoalPosition) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn transformed(&self, rotation: f64, dx: f64, dy: f64) -> GoalPosition {
        let (s, c) = rotation.sin_cos();
        GoalPosition::new(c * self.x - s * self.y + dx, s * self.x + c * self.y + dy)
    }
}

/// Goal expressed relative to the robot: range `r` and bearing error `delta`.
///
/// `delta` is the line-of-sight angle minus the heading, so a positive value
/// means the goal lies to the robot's left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPolarState {
    pub r: f64,
    pub delta: f64,
}

impl EgoPolarState {
    pub fn new(r: f64, delta: f64) -> Self {
        Self {
            r: r.max(0.0),
            delta: wrap(delta),
        }
    }

    pub fn at_goal(&self) -> bool {
        self.r == 0.0
    }
}

pub fn to_egopolar(pose: &Pose, goal: GoalPosition) -> EgoPolarState {
    let dx = goal.x - pose.x;
    let dy = goal.y - pose.y;
    let r = dx.hypot(dy);
    if r == 0.0 {
        return EgoPolarState { r: 0.0, delta: 0.0 };
    }
    EgoPolarState {
        r,
        delta: wrap(dy.atan2(dx) - pose.theta),
    }
}
