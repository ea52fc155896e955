//! Omnidirectional control Lyapunov function and its closed-form feedback.
//!
//! The CLF is `l = (r^2 + gamma^2 sin^2(beta delta)) / 2` over the robot-centric
//! polar state. The feedback below picks `(v_r, v_delta)` so that `l` strictly
//! decreases for `r > 0`, then recovers `(v_x, v_y, omega)` by minimising
//! `v_y^2 + alpha omega^2` subject to the polar kinematics.
//!
//! Conventions: `v_y` is positive to the robot's left and `omega` is positive
//! counter-clockwise, so the polar kinematics read
//!
//! ```text
//! r'     = -(cos d v_x + sin d v_y)
//! delta' = (sin d v_x - cos d v_y) / r - omega
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{to_egopolar, EgoPolarState, GoalPosition, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfParams {
    /// Yaw-rate penalty in the command optimisation.
    pub alpha: f64,
    pub beta: f64,
    /// Orientation weight, in meters.
    pub gamma: f64,
    pub k_r1: f64,
    pub k_r2: f64,
    pub k_d1: f64,
    pub k_d2: f64,
}

impl Default for ClfParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 1.2,
            gamma: 1.0,
            k_r1: 1.0,
            k_r2: 5.0,
            k_d1: 0.1,
            k_d2: 10.0,
        }
    }
}

impl ClfParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("k_r1", self.k_r1),
            ("k_r2", self.k_r2),
            ("k_d1", self.k_d1),
            ("k_d2", self.k_d2),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        Ok(())
    }

    /// Half-width of the field of view: the repulsive manifold sits at +-pi/(2 beta).
    pub fn fov_half_angle(&self) -> f64 {
        PI / (2.0 * self.beta)
    }
}

/// Body-frame velocity command: forward, leftward and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
}

impl Command {
    pub const ZERO: Command = Command {
        v_x: 0.0,
        v_y: 0.0,
        omega: 0.0,
    };

    pub fn new(v_x: f64, v_y: f64, omega: f64) -> Self {
        Self { v_x, v_y, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v_x.is_finite() && self.v_y.is_finite() && self.omega.is_finite()
    }

    /// Euclidean norm of the difference, used as the discontinuity metric.
    pub fn jump(&self, other: &Command) -> f64 {
        ((self.v_x - other.v_x).powi(2)
            + (self.v_y - other.v_y).powi(2)
            + (self.omega - other.omega).powi(2))
        .sqrt()
    }
}

/// Radial closure rate and bearing rate of the feedback-linearised model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VirtualInputs {
    pub v_r: f64,
    pub v_delta: f64,
}

/// Symmetric-ish saturation applied to commands before they reach a plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandLimits {
    pub v_x_min: f64,
    pub v_x_max: f64,
    pub v_y_max: f64,
    pub omega_max: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        Self {
            v_x_min: -0.3,
            v_x_max: 1.0,
            v_y_max: 0.3,
            omega_max: 0.6,
        }
    }
}

impl CommandLimits {
    /// Returns the clamped command and whether any component was saturated.
    pub fn clamp(&self, cmd: Command) -> (Command, bool) {
        let out = Command {
            v_x: cmd.v_x.clamp(self.v_x_min, self.v_x_max),
            v_y: cmd.v_y.clamp(-self.v_y_max, self.v_y_max),
            omega: cmd.omega.clamp(-self.omega_max, self.omega_max),
        };
        (out, out != cmd)
    }
}

pub fn clf_value(s: &EgoPolarState, p: &ClfParams) -> f64 {
    let sb = (p.beta * s.delta).sin();
    0.5 * (s.r * s.r + p.gamma * p.gamma * sb * sb)
}

pub fn clf_feedback(s: &EgoPolarState, p: &ClfParams) -> VirtualInputs {
    let r = s.r.max(0.0);
    let v_r = p.k_r1 * r / (p.k_r2 + r);
    let v_delta = -(2.0 / p.beta) * p.k_d1 * (r / (p.k_d2 + r)) * (2.0 * p.beta * s.delta).sin();
    VirtualInputs { v_r, v_delta }
}

/// Time derivative of the CLF under [`clf_feedback`], obtained by the chain rule.
pub fn clf_derivative(s: &EgoPolarState, p: &ClfParams) -> f64 {
    let r = s.r.max(0.0);
    let s2 = (2.0 * p.beta * s.delta).sin();
    -(p.k_r1 / (p.k_r2 + r)) * r * r - p.gamma * p.gamma * p.k_d1 * (r / (p.k_d2 + r)) * s2 * s2
}

/// Closed-form minimiser of `v_y^2 + alpha omega^2` that realises the CLF feedback.
/// Returns the zero command at the goal.
pub fn clf_commands(s: &EgoPolarState, p: &ClfParams) -> Command {
    if !(s.r > 0.0) {
        return Command::ZERO;
    }
    let VirtualInputs { v_r, v_delta } = clf_feedback(s, p);
    let r = s.r;
    let (sd, cd) = s.delta.sin_cos();
    let den = p.alpha + r * r * cd * cd;
    let lateral = v_r * sd - r * v_delta * cd;
    Command {
        v_x: (v_r * cd * r * r + p.alpha * v_delta * sd * r + p.alpha * v_r * cd) / den,
        v_y: p.alpha * lateral / den,
        omega: r * cd * lateral / den,
    }
}

/// Maps a body command through the polar kinematics: `(v_r, v_delta)` with
/// `r' = -v_r` and `delta' = v_delta`.
pub fn polar_rates(s: &EgoPolarState, cmd: &Command) -> VirtualInputs {
    let (sd, cd) = s.delta.sin_cos();
    VirtualInputs {
        v_r: cd * cmd.v_x + sd * cmd.v_y,
        v_delta: (sd * cmd.v_x - cd * cmd.v_y) / s.r - cmd.omega,
    }
}

/// Bearing inside the field of view; the boundary itself is excluded.
pub fn in_fov(delta: f64, p: &ClfParams) -> bool {
    delta.abs() < p.fov_half_angle()
}

/// World-frame rate `(x', y', theta')` of the closed loop at `pose`.
pub fn closed_loop_rate(pose: &Pose, goal: GoalPosition, p: &ClfParams) -> ([f64; 3], Command) {
    let cmd = clf_commands(&to_egopolar(pose, goal), p);
    let (vx, vy) = pose.body_to_world(cmd.v_x, cmd.v_y);
    ([vx, vy, cmd.omega], cmd)
}

/// One classical RK4 step of an autonomous planar pose ODE. Heading is not
/// wrapped inside the stages so the derivative stays continuous.
pub(crate) fn rk4_pose_step<F>(pose: &Pose, h: f64, mut f: F) -> Pose
where
    F: FnMut(&Pose) -> [f64; 3],
{
    let shift = |k: &[f64; 3], a: f64| Pose {
        x: pose.x + a * k[0],
        y: pose.y + a * k[1],
        theta: pose.theta + a * k[2],
    };
    let k1 = f(pose);
    let k2 = f(&shift(&k1, 0.5 * h));
    let k3 = f(&shift(&k2, 0.5 * h));
    let k4 = f(&shift(&k3, h));
    let mut d = [0.0; 3];
    for i in 0..3 {
        d[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Pose::new(pose.x + d[0], pose.y + d[1], pose.theta + d[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedLoopOutcome {
    Converged,
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopTrajectory {
    pub dt: f64,
    /// Pose at each step together with the command evaluated there.
    pub samples: Vec<(Pose, Command)>,
    pub outcome: ClosedLoopOutcome,
}

impl ClosedLoopTrajectory {
    pub fn converged(&self) -> bool {
        self.outcome == ClosedLoopOutcome::Converged
    }

    pub fn final_pose(&self) -> Pose {
        self.samples.last().map(|s| s.0).expect("trajectory has a start sample")
    }

    pub fn length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].0.x - w[0].0.x).hypot(w[1].0.y - w[0].0.y))
            .sum()
    }

    /// Accumulated (unwrapped) heading change from start to end.
    pub fn net_heading_change(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| crate::geometry::wrap(w[1].0.theta - w[0].0.theta))
            .sum()
    }
}

/// Integrates the closed loop with fixed-step RK4 until `r < r_stop` or
/// `max_steps` steps have been taken.
pub fn simulate_closed_loop(
    start: Pose,
    goal: GoalPosition,
    p: &ClfParams,
    dt: f64,
    r_stop: f64,
    max_steps: usize,
) -> ClosedLoopTrajectory {
    assert!(dt > 0.0 && r_stop > 0.0, "dt and r_stop must be positive");
    let mut pose = start;
    let mut samples = Vec::with_capacity(max_steps.min(1 << 16) + 1);
    let mut steps = 0;
    loop {
        let cmd = clf_commands(&to_egopolar(&pose, goal), p);
        samples.push((pose, cmd));
        if pose.distance_to(goal) < r_stop {
            return ClosedLoopTrajectory {
                dt,
                samples,
                outcome: ClosedLoopOutcome::Converged,
            };
        }
        if steps == max_steps {
            return ClosedLoopTrajectory {
                dt,
                samples,
                outcome: ClosedLoopOutcome::NoConvergence,
            };
        }
        pose = rk4_pose_step(&pose, dt, |q| closed_loop_rate(q, goal, p).0);
        steps += 1;
    }
}
