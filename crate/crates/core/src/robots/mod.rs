//! Simulated plants: an ALIP walker with step-latched commands and an
//! omnidirectional integrator.

mod alip;

use std::io::Write;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clf::{rk4_pose_step, Command, CommandLimits};
use crate::geometry::{wrap, Pose};

pub use alip::{alip_execute, alip_step, place_feet, AlipParams, AlipPlant, AlipState, AxisState};

/// Command held by the plant for one swing phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatchedCommand {
    pub command: Command,
    pub latched_at_step: u64,
}

/// Latest-value slot: the reactive loop writes, the plant reads.
#[derive(Debug, Default)]
pub struct CommandMailbox {
    slot: Mutex<Command>,
}

impl CommandMailbox {
    pub fn post(&self, cmd: Command) {
        *self.slot.lock() = cmd;
    }

    pub fn latest(&self) -> Command {
        *self.slot.lock()
    }
}

pub trait Plant {
    fn pose(&self) -> Pose;
    fn advance(&mut self, dt: f64, mailbox: &CommandMailbox);
    fn disturb(&mut self, offset: &Pose);
    /// Command the plant is currently executing.
    fn applied_command(&self) -> Command;
    fn step_index(&self) -> u64;
}

/// One RK4 step of the omnidirectional kinematics under a constant body command.
pub fn omni_integrate(pose: &Pose, cmd: &Command, dt: f64) -> Pose {
    rk4_pose_step(pose, dt, |q| {
        let (s, c) = q.theta.sin_cos();
        [cmd.v_x * c - cmd.v_y * s, cmd.v_x * s + cmd.v_y * c, cmd.omega]
    })
}

/// Additive pose perturbation.
pub fn inject_disturbance(pose: &Pose, offset: &Pose) -> Pose {
    log::info!(
        "disturbance ({:.3}, {:.3}, {:.3}) at ({:.3}, {:.3})",
        offset.x,
        offset.y,
        offset.theta,
        pose.x,
        pose.y
    );
    Pose::new(pose.x + offset.x, pose.y + offset.y, wrap(pose.theta + offset.theta))
}

/// Continuous omnidirectional plant that applies the latest command every tick.
#[derive(Debug, Clone)]
pub struct OmniPlant {
    pose: Pose,
    limits: CommandLimits,
    applied: Command,
    ticks: u64,
}

impl OmniPlant {
    pub fn new(pose: Pose, limits: CommandLimits) -> Self {
        Self {
            pose,
            limits,
            applied: Command::ZERO,
            ticks: 0,
        }
    }
}

impl Plant for OmniPlant {
    fn pose(&self) -> Pose {
        self.pose
    }

    fn advance(&mut self, dt: f64, mailbox: &CommandMailbox) {
        self.applied = self.limits.clamp(mailbox.latest()).0;
        self.pose = omni_integrate(&self.pose, &self.applied, dt);
        self.ticks += 1;
    }

    fn disturb(&mut self, offset: &Pose) {
        self.pose = inject_disturbance(&self.pose, offset);
    }

    fn applied_command(&self) -> Command {
        self.applied
    }

    fn step_index(&self) -> u64 {
        self.ticks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantLogRow {
    pub sim_time: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x_cmd: f64,
    pub v_y_cmd: f64,
    pub omega_cmd: f64,
    pub step_index: u64,
}

impl PlantLogRow {
    pub const HEADER: &'static str = "sim_time,x,y,theta,v_x_cmd,v_y_cmd,omega_cmd,step_index";

    pub fn capture(sim_time: f64, plant: &dyn Plant) -> Self {
        let p = plant.pose();
        let c = plant.applied_command();
        Self {
            sim_time,
            x: p.x,
            y: p.y,
            theta: p.theta,
            v_x_cmd: c.v_x,
            v_y_cmd: c.v_y,
            omega_cmd: c.omega,
            step_index: plant.step_index(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.sim_time, self.x, self.y, self.theta, self.v_x_cmd, self.v_y_cmd, self.omega_cmd, self.step_index
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_without_rotation() {
        let cmd = Command::new(0.6, -0.2, 0.0);
        let mut p = Pose::new(1.0, 2.0, 0.7);
        let dt = 0.01;
        for _ in 0..500 {
            p = omni_integrate(&p, &cmd, dt);
        }
        let travelled = (p.x - 1.0).hypot(p.y - 2.0);
        assert!((travelled - 0.6f64.hypot(0.2) * 5.0).abs() < 1e-9);
        assert_eq!(p.theta, 0.7);
    }

    #[test]
    fn constant_turn_traces_a_circle() {
        let cmd = Command::new(0.5, 0.0, 0.5);
        let mut p = Pose::new(0.0, 0.0, 0.0);
        for _ in 0..1000 {
            p = omni_integrate(&p, &cmd, 0.01);
        }
        // radius v / omega = 1 around (0, 1)
        assert!((p.x.hypot(p.y - 1.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn disturbance_is_additive() {
        let p = inject_disturbance(&Pose::new(1.0, 1.0, 3.0), &Pose::new(0.0, 0.5, 0.5));
        assert_eq!((p.x, p.y), (1.0, 1.5));
        assert!((p.theta - wrap(3.5)).abs() < 1e-15);
    }

    #[test]
    fn log_row_format() {
        let plant = OmniPlant::new(Pose::new(1.0, 2.0, 0.5), CommandLimits::default());
        let mut out = Vec::new();
        PlantLogRow::capture(0.5, &plant).write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "0.500000,1.000000,2.000000,0.500000,0.000000,0.000000,0.000000,0\n"
        );
    }
}
