use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::{closed_loop_rate, rk4_pose_step, ClfParams};
use crate::geometry::{GoalPosition, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SteerError {
    #[error("start already coincides with the target")]
    Degenerate,
    #[error("closed loop did not reach the target within the length budget")]
    NoConvergence,
}

/// A closed-loop CLF path, sampled every `step` meters of arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub length: f64,
}

impl Trajectory {
    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    pub fn end(&self) -> Pose {
        *self.poses.last().expect("non-empty trajectory")
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.poses.iter().map(|p| [p.x, p.y]).collect()
    }
}

/// Integrates the CLF vector field with arc length as the independent
/// variable. The geometric path is the same as the time-parametrised closed
/// loop because the field is autonomous and the translational speed is
/// strictly positive away from the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steering {
    pub clf: ClfParams,
    /// Arc length per RK4 step, meters.
    pub step: f64,
}

impl Steering {
    pub fn new(clf: ClfParams, step: f64) -> Self {
        assert!(step > 0.0);
        Self { clf, step }
    }

    fn unit_rate(&self, pose: &Pose, target: GoalPosition) -> [f64; 3] {
        let (rate, _) = closed_loop_rate(pose, target, &self.clf);
        let speed = rate[0].hypot(rate[1]);
        if speed <= f64::MIN_POSITIVE {
            return [0.0; 3];
        }
        [rate[0] / speed, rate[1] / speed, rate[2] / speed]
    }

    fn integrate(&self, from: Pose, target: GoalPosition, max_length: f64) -> Result<Trajectory, SteerError> {
        let r0 = from.distance_to(target);
        if r0 <= 1e-9 {
            return Err(SteerError::Degenerate);
        }
        let budget = 4.0 * r0 + 2.0;
        let mut poses = vec![from];
        let mut pose = from;
        let mut length = 0.0;
        loop {
            let r = pose.distance_to(target);
            if r <= self.step {
                // final chord lands exactly on the target
                let end = Pose::new(target.x, target.y, pose.theta);
                length += r;
                poses.push(end);
                return Ok(Trajectory { poses, length });
            }
            if length >= max_length - 1e-12 {
                return Ok(Trajectory { poses, length });
            }
            if length > budget {
                return Err(SteerError::NoConvergence);
            }
            let h = self.step.min(max_length - length);
            pose = rk4_pose_step(&pose, h, |q| self.unit_rate(q, target));
            length += h;
            poses.push(pose);
        }
    }

    /// Closed-loop path from `from` that ends exactly at `to`; the arrival
    /// heading is whatever the closed loop produces.
    pub fn steer(&self, from: Pose, to: GoalPosition) -> Result<Trajectory, SteerError> {
        self.integrate(from, to, f64::INFINITY)
    }

    /// Same closed loop, truncated once `kappa` meters have been travelled.
    pub fn extend(&self, from: Pose, to: GoalPosition, kappa: f64) -> Result<Trajectory, SteerError> {
        assert!(kappa > 0.0);
        self.integrate(from, to, kappa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn steering() -> Steering {
        Steering::new(ClfParams::default(), 0.05)
    }

    #[test]
    fn extend_along_straight_manifold() {
        let t = steering()
            .extend(Pose::new(0.0, 0.0, 0.0), GoalPosition::new(5.0, 0.0), 1.0)
            .unwrap();
        let e = t.end();
        assert!((e.x - 1.0).abs() < 1e-9 && e.y.abs() < 1e-12 && e.theta.abs() < 1e-12);
        assert!((t.length - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steer_ends_on_target() {
        let r = 2.0 * 2f64.sqrt();
        let target = GoalPosition::new(r * (PI / 3.0).cos(), r * (PI / 3.0).sin());
        let t = steering().steer(Pose::new(0.0, 0.0, 0.0), target).unwrap();
        assert_eq!(t.end().position(), target);
        assert!(t.length >= r - 1e-9);
    }

    #[test]
    fn extend_arc_length_is_kappa_within_one_step() {
        let s = steering();
        let t = s
            .extend(Pose::new(1.0, -2.0, 2.5), GoalPosition::new(6.0, 3.0), 1.7)
            .unwrap();
        let measured: f64 = t
            .poses
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        assert!((measured - 1.7).abs() <= s.step, "{measured}");
    }

    #[test]
    fn path_matches_time_parametrised_closed_loop() {
        let start = Pose::new(0.0, 0.0, 0.9);
        let goal = GoalPosition::new(4.0, -1.0);
        let arc = steering().steer(start, goal).unwrap();
        let timed = crate::clf::simulate_closed_loop(start, goal, &ClfParams::default(), 1e-3, 0.05, 1_000_000);
        // every arc-length sample lies on the time-parametrised curve
        for p in arc.poses.iter().step_by(5) {
            let d = timed
                .samples
                .iter()
                .map(|(q, _)| (q.x - p.x).hypot(q.y - p.y))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 2e-3, "{d}");
        }
    }

    #[test]
    fn degenerate_steer_is_rejected() {
        let p = Pose::new(1.0, 1.0, 0.0);
        assert_eq!(steering().steer(p, p.position()), Err(SteerError::Degenerate));
    }
}
