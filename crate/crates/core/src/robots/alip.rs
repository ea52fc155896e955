use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CommandMailbox, LatchedCommand, Plant};
use crate::clf::{Command, CommandLimits};
use crate::geometry::{wrap, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlipParams {
    pub g: f64,
    /// CoM height, meters.
    pub height: f64,
    /// Nominal swing duration, seconds.
    pub tau: f64,
    /// Relative half-width of uniform step-time jitter; 0 disables it.
    pub jitter: f64,
    /// Amplitude of the alternating lateral sway, meters; 0 disables it.
    pub sway: f64,
}

impl Default for AlipParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            height: 0.9,
            tau: 0.3,
            jitter: 0.0,
            sway: 0.0,
        }
    }
}

impl AlipParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.height > 0.0 && self.tau > 0.0 && self.g > 0.0) {
            return Err("ALIP g, height and tau must be positive".into());
        }
        if !(0.0..1.0).contains(&self.jitter) || !(self.sway >= 0.0) {
            return Err("jitter must lie in [0, 1) and sway must be non-negative".into());
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        (self.g / self.height).sqrt()
    }

    pub fn xi(&self) -> f64 {
        self.rho() * self.tau
    }
}

/// One horizontal axis: CoM position and velocity and the stance foot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisState {
    pub pos: f64,
    pub vel: f64,
    pub foot: f64,
}

impl AxisState {
    /// Analytic CoM motion over a fixed foot after `t` seconds.
    pub fn flow(&self, rho: f64, t: f64) -> AxisState {
        let (c, s) = ((rho * t).cosh(), (rho * t).sinh());
        let e = self.pos - self.foot;
        AxisState {
            pos: self.foot + c * e + s / rho * self.vel,
            vel: rho * s * e + c * self.vel,
            foot: self.foot,
        }
    }

    /// Orbital energy `v^2 - rho^2 (x - p)^2`.
    pub fn orbital_energy(&self, rho: f64) -> f64 {
        self.vel * self.vel - rho * rho * (self.pos - self.foot).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlipState {
    pub x: AxisState,
    pub y: AxisState,
    pub theta: f64,
}

impl AlipState {
    /// At rest with the CoM over the foot.
    pub fn standing(pose: Pose) -> Self {
        Self {
            x: AxisState {
                pos: pose.x,
                vel: 0.0,
                foot: pose.x,
            },
            y: AxisState {
                pos: pose.y,
                vel: 0.0,
                foot: pose.y,
            },
            theta: pose.theta,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x.pos, self.y.pos, self.theta)
    }
}

/// Step-to-step map over one swing phase with the stance foot held.
pub fn alip_step(state: &AlipState, params: &AlipParams) -> AlipState {
    let rho = params.rho();
    AlipState {
        x: state.x.flow(rho, params.tau),
        y: state.y.flow(rho, params.tau),
        theta: state.theta,
    }
}

/// End-of-step velocity of the periodic gait whose step length is `v tau`.
fn periodic_velocity(v: f64, params: &AlipParams) -> f64 {
    let xi = params.xi();
    params.rho() * (v * params.tau / 2.0) * (1.0 + xi.cosh()) / xi.sinh()
}

/// Foot position that brings the end-of-step velocity onto `target`.
fn deadbeat_foot(axis: &AxisState, target: f64, params: &AlipParams) -> f64 {
    let xi = params.xi();
    axis.pos - (target - xi.cosh() * axis.vel) / (params.rho() * xi.sinh())
}

/// Places both feet for the latched command and returns the state at the
/// start of the swing (feet updated) plus whether the command was clamped.
pub fn place_feet(state: &AlipState, cmd: &Command, params: &AlipParams, limits: &CommandLimits) -> (AlipState, Command, bool) {
    let (cmd, clamped) = limits.clamp(*cmd);
    let mid = state.theta + 0.5 * cmd.omega * params.tau;
    let (s, c) = mid.sin_cos();
    let vx_w = cmd.v_x * c - cmd.v_y * s;
    let vy_w = cmd.v_x * s + cmd.v_y * c;
    let mut out = *state;
    out.x.foot = deadbeat_foot(&state.x, periodic_velocity(vx_w, params), params);
    out.y.foot = deadbeat_foot(&state.y, periodic_velocity(vy_w, params), params);
    (out, cmd, clamped)
}

/// One full step under a command latched at step initiation.
pub fn alip_execute(state: &AlipState, cmd: &Command, params: &AlipParams, limits: &CommandLimits) -> (AlipState, bool) {
    let (placed, cmd, clamped) = place_feet(state, cmd, params, limits);
    let mut next = alip_step(&placed, params);
    next.theta = wrap(state.theta + cmd.omega * params.tau);
    (next, clamped)
}

/// ALIP walker driven by a simulation clock. A new command is read from the
/// mailbox only at step initiation and held for the whole swing.
#[derive(Debug, Clone)]
pub struct AlipPlant {
    params: AlipParams,
    limits: CommandLimits,
    start: AlipState,
    latched: LatchedCommand,
    elapsed: f64,
    duration: f64,
    rng: ChaCha8Rng,
    clamped_steps: u64,
}

impl AlipPlant {
    pub fn new(pose: Pose, params: AlipParams, limits: CommandLimits, seed: u64) -> Self {
        Self {
            params,
            limits,
            start: AlipState::standing(pose),
            latched: LatchedCommand {
                command: Command::ZERO,
                latched_at_step: 0,
            },
            elapsed: 0.0,
            duration: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clamped_steps: 0,
        }
    }

    pub fn clamped_steps(&self) -> u64 {
        self.clamped_steps
    }

    fn current(&self) -> AlipState {
        let rho = self.params.rho();
        AlipState {
            x: self.start.x.flow(rho, self.elapsed),
            y: self.start.y.flow(rho, self.elapsed),
            theta: wrap(self.start.theta + self.latched.command.omega * self.elapsed),
        }
    }

    fn begin_step(&mut self, mailbox: &CommandMailbox) {
        let now = self.current();
        let step = self.latched.latched_at_step + u64::from(self.duration > 0.0);
        let (placed, cmd, clamped) = place_feet(&now, &mailbox.latest(), &self.params, &self.limits);
        self.clamped_steps += u64::from(clamped);
        self.start = placed;
        self.latched = LatchedCommand {
            command: cmd,
            latched_at_step: step,
        };
        self.elapsed = 0.0;
        let j = self.params.jitter;
        self.duration = if j > 0.0 {
            self.params.tau * (1.0 + self.rng.gen_range(-j..j))
        } else {
            self.params.tau
        };
    }
}

impl Plant for AlipPlant {
    fn pose(&self) -> Pose {
        let mut p = self.current().pose();
        if self.params.sway > 0.0 {
            let phase = (std::f64::consts::PI * self.elapsed / self.duration.max(1e-9)).sin();
            let side = if self.latched.latched_at_step % 2 == 0 { 1.0 } else { -1.0 };
            let off = side * self.params.sway * phase;
            p.x -= off * p.theta.sin();
            p.y += off * p.theta.cos();
        }
        p
    }

    fn advance(&mut self, dt: f64, mailbox: &CommandMailbox) {
        if self.elapsed >= self.duration - 1e-12 {
            self.begin_step(mailbox);
        }
        self.elapsed += dt;
    }

    fn disturb(&mut self, offset: &Pose) {
        for (axis, d) in [(&mut self.start.x, offset.x), (&mut self.start.y, offset.y)] {
            axis.pos += d;
            axis.foot += d;
        }
        self.start.theta = wrap(self.start.theta + offset.theta);
    }

    fn applied_command(&self) -> Command {
        self.latched.command
    }

    fn step_index(&self) -> u64 {
        self.latched.latched_at_step
    }
}
