//! CLF-RRT*: a sampling planner whose edges are closed-loop CLF trajectories
//! and whose edge cost is the CLF value plus a traversability term.

mod snapshot;
mod spatial;
pub mod steer;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::{clf_value, ClfParams};
use crate::geometry::{to_egopolar, GoalPosition, Pose};
use crate::localmap::TraversabilityWeights;

pub use snapshot::PathSnapshot;
pub use steer::{SteerError, Steering, Trajectory};
pub use tree::{plan, CandidateEdge, EdgeCoster, Node, NodeId, Tree, WarmStart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub eta: f64,
    pub xi: f64,
    /// Arc length of one extension, meters.
    pub kappa: f64,
    /// Traversability gate of the near sets.
    pub t_k: f64,
    pub goal_bias: f64,
    /// Zero disables sampling around the robot-goal segment.
    pub gaussian_sampling_sigma: f64,
    pub k_delta: f64,
    pub use_fov_penalty: bool,
    pub max_iterations: usize,
    /// A node within this range of the goal reaches it.
    pub goal_radius: f64,
    /// Arc length per steering integration step.
    pub steer_step: f64,
    /// Exact extension evaluations allowed per nearest query.
    pub nearest_candidates: usize,
    pub weights: TraversabilityWeights,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            eta: 10.0,
            xi: 3.0,
            kappa: 2.0,
            t_k: 5.0,
            goal_bias: 0.1,
            gaussian_sampling_sigma: 0.0,
            k_delta: 1.0,
            use_fov_penalty: false,
            max_iterations: 500,
            goal_radius: 0.3,
            steer_step: 0.05,
            nearest_candidates: 8,
            weights: TraversabilityWeights::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("eta", self.eta),
            ("xi", self.xi),
            ("kappa", self.kappa),
            ("t_k", self.t_k),
            ("goal_radius", self.goal_radius),
            ("steer_step", self.steer_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(format!("goal_bias must lie in [0, 1], got {}", self.goal_bias));
        }
        if !(self.gaussian_sampling_sigma >= 0.0) || !(self.k_delta >= 0.0) {
            return Err("gaussian_sampling_sigma and k_delta must be non-negative".into());
        }
        if self.nearest_candidates == 0 {
            return Err("nearest_candidates must be at least 1".into());
        }
        Ok(())
    }

    /// Neighbor radius `L(m) = eta (ln m / m)^(1/xi)`, with `L(1) = eta`.
    pub fn near_radius(&self, m: usize) -> f64 {
        if m <= 1 {
            return self.eta;
        }
        let m = m as f64;
        self.eta * (m.ln().max(1e-12) / m).powf(1.0 / self.xi)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("root pose ({0:.3}, {1:.3}) is not in traversable space")]
    RootInCollision(f64, f64),
    #[error("tree never left the root cell")]
    Stuck,
    #[error("no node is closer to the goal than the root")]
    NoProgress,
    #[error("previous snapshot has no remaining way-poses")]
    EmptyPrevious,
    #[error("invalid planner parameters: {0}")]
    BadParams(String),
}

/// Asymmetric CLF distance from a pose to a position; the target heading is
/// irrelevant.
pub fn distance(from: &Pose, to: GoalPosition, clf: &ClfParams, params: &PlannerParams) -> f64 {
    let s = to_egopolar(from, to);
    let mut d = clf_value(&s, clf);
    if params.use_fov_penalty {
        d += params.k_delta * (s.delta.abs() - clf.fov_half_angle()).max(0.0);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let clf = ClfParams::default();
        let p = PlannerParams::default();
        let a = distance(&Pose::new(0.0, 0.0, 0.0), GoalPosition::new(1.0, 0.0), &clf, &p);
        let b = distance(&Pose::new(1.0, 0.0, 0.0), GoalPosition::new(0.0, 0.0), &clf, &p);
        assert!((a - 0.5).abs() < 1e-12);
        let expected = (1.0 + (1.2 * std::f64::consts::PI).sin().powi(2)) / 2.0;
        assert!((b - expected).abs() < 1e-12);
        assert!((b - 0.6727).abs() < 1e-4);
        assert!(a != b);
    }

    #[test]
    fn fov_penalty_applies_outside_the_band() {
        let clf = ClfParams::default();
        let p = PlannerParams {
            use_fov_penalty: true,
            k_delta: 2.0,
            ..Default::default()
        };
        let from = Pose::new(0.0, 0.0, 0.0);
        let inside = distance(&from, GoalPosition::new(1.0, 0.5), &clf, &p);
        let plain = distance(&from, GoalPosition::new(1.0, 0.5), &clf, &PlannerParams::default());
        assert_eq!(inside, plain);
        let behind = GoalPosition::new(-1.0, 0.0);
        let with = distance(&from, behind, &clf, &p);
        let without = distance(&from, behind, &clf, &PlannerParams::default());
        assert!((with - without - 2.0 * (std::f64::consts::PI - clf.fov_half_angle())).abs() < 1e-12);
    }

    #[test]
    fn near_radius_examples() {
        let p = PlannerParams::default();
        let oracle = 10.0 * (100f64.ln() / 100.0).cbrt();
        assert!((p.near_radius(100) - oracle).abs() < 1e-12);
        assert!((p.near_radius(100) - 3.580).abs() < 5e-3);
        assert_eq!(p.near_radius(1), 10.0);
        assert!(p.near_radius(2) < 10.0);
    }

    #[test]
    fn params_validation() {
        assert!(PlannerParams::default().validate().is_ok());
        let bad = PlannerParams {
            goal_bias: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PlannerParams {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
