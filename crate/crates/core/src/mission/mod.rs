//! Sub-goal selection on a forward arc, intersection detection by ring
//! clustering, and the mission state machine.

mod cluster;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::ClfParams;
use crate::geometry::{wrap, GoalPosition, Pose};
use crate::localmap::LayeredGridMap;
use crate::planner::EdgeCoster;

pub use cluster::{ring_cells, single_linkage, RingCluster, UnionFind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionPolicy {
    Left,
    Right,
    Straight,
    /// Ignore intersections and keep heading for the goal.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionState {
    TurnInPlace,
    Navigate,
    IntersectionAction(IntersectionPolicy),
    GoalReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub final_goal: GoalPosition,
    pub arc_radius: f64,
    pub arc_samples: usize,
    pub intersection_policy: IntersectionPolicy,
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub cluster_linkage_threshold: f64,
    pub goal_tolerance: f64,
    /// The goal only counts once the robot has been this far from it, so a
    /// mission may end where it started.
    pub arm_distance: f64,
    /// Fraction of the field of view spanned by the sub-goal arc.
    pub arc_fov_fraction: f64,
    /// Turning in place stops once the target bearing falls below this, radians.
    pub turn_exit: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            final_goal: GoalPosition::new(0.0, 0.0),
            arc_radius: 4.0,
            arc_samples: 31,
            intersection_policy: IntersectionPolicy::Straight,
            ring_inner: 2.2,
            ring_outer: 2.8,
            cluster_linkage_threshold: 0.3,
            goal_tolerance: 0.3,
            arm_distance: 0.0,
            arc_fov_fraction: 0.95,
            turn_exit: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self, local_side: f64) -> Result<(), String> {
        if !(self.arc_radius > 0.0 && self.arc_radius < local_side / 2.0) {
            return Err(format!(
                "arc_radius {} must be positive and below half the local map side {}",
                self.arc_radius,
                local_side / 2.0
            ));
        }
        if !(self.ring_inner >= 0.0 && self.ring_inner < self.ring_outer) {
            return Err("ring_inner must be below ring_outer".into());
        }
        if self.arc_samples == 0 || !(self.goal_tolerance > 0.0) || !(self.cluster_linkage_threshold > 0.0) {
            return Err("arc_samples, goal_tolerance and linkage threshold must be positive".into());
        }
        if !(self.arc_fov_fraction > 0.0 && self.arc_fov_fraction <= 1.0) {
            return Err("arc_fov_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MissionError {
    #[error("every sub-goal candidate is blocked")]
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subgoal {
    pub pose: Pose,
    pub cost: f64,
    /// Bearing relative to the robot heading.
    pub bearing: f64,
}

/// Candidate poses on the arc, each facing radially outward.
pub fn arc_candidates(robot: &Pose, cfg: &MissionConfig, clf: &ClfParams) -> Vec<(f64, Pose)> {
    let span = cfg.arc_fov_fraction * clf.fov_half_angle();
    let n = cfg.arc_samples;
    (0..n)
        .map(|i| {
            let phi = if n == 1 {
                0.0
            } else {
                -span + 2.0 * span * i as f64 / (n - 1) as f64
            };
            let a = robot.theta + phi;
            let pose = Pose::new(robot.x + cfg.arc_radius * a.cos(), robot.y + cfg.arc_radius * a.sin(), a);
            (phi, pose)
        })
        .collect()
}

/// Arc candidate minimizing cost-to-come plus CLF distance to the final goal.
/// A goal within the arc radius is returned as is.
pub fn find_subgoal(coster: &EdgeCoster, robot: &Pose, cfg: &MissionConfig) -> Result<Subgoal, MissionError> {
    let goal = cfg.final_goal;
    if robot.distance_to(goal) <= cfg.arc_radius {
        let los = (goal.y - robot.y).atan2(goal.x - robot.x);
        let pose = Pose::new(goal.x, goal.y, los);
        return Ok(Subgoal {
            pose,
            cost: coster.edge_cost(robot, goal).unwrap_or(f64::INFINITY),
            bearing: wrap(los - robot.theta),
        });
    }
    arc_subgoal(coster, robot, cfg)
}

/// Arc search alone, whatever the distance to the final goal.
pub fn arc_subgoal(coster: &EdgeCoster, robot: &Pose, cfg: &MissionConfig) -> Result<Subgoal, MissionError> {
    let goal = cfg.final_goal;
    let mut best: Option<Subgoal> = None;
    for (phi, cand) in arc_candidates(robot, cfg, coster.clf()) {
        if !coster.map().traversable_at(cand.x, cand.y) {
            continue;
        }
        let Some(come) = coster.edge_cost(robot, cand.position()) else {
            continue;
        };
        let cost = come + coster.distance(&cand, goal);
        if best.map_or(true, |b| cost < b.cost) {
            best = Some(Subgoal {
                pose: cand,
                cost,
                bearing: phi,
            });
        }
    }
    best.ok_or(MissionError::Blocked)
}

/// Relative bearings of the walkable branches crossing the ring, sorted.
pub fn detect_intersection(map: &LayeredGridMap, robot: &Pose, cfg: &MissionConfig) -> Vec<f64> {
    ring_clusters(map, robot, cfg).into_iter().map(|c| c.bearing).collect()
}

pub fn ring_clusters(map: &LayeredGridMap, robot: &Pose, cfg: &MissionConfig) -> Vec<RingCluster> {
    let cells = ring_cells(map, robot, cfg.ring_inner, cfg.ring_outer);
    single_linkage(map, robot, &cells, cfg.cluster_linkage_threshold)
}

/// Branch picked by a policy among relative bearings.
pub fn select_branch(bearings: &[f64], policy: IntersectionPolicy) -> Option<f64> {
    let it = bearings.iter().copied();
    match policy {
        IntersectionPolicy::Left => it.max_by(f64::total_cmp),
        IntersectionPolicy::Right => it.min_by(f64::total_cmp),
        IntersectionPolicy::Straight => it.min_by(|a, b| a.abs().total_cmp(&b.abs())),
        IntersectionPolicy::None => None,
    }
}

const REORIENT_STEPS: usize = 24;
const REORIENT_TOLERANCE: f64 = 0.05;

/// Clusters this far behind the robot are the branch it arrived from.
const INCOMING_BEARING: f64 = 3.0 * std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Transition { from: MissionState, to: MissionState },
    Intersection {
        bearings: Vec<f64>,
        candidates: Vec<f64>,
        chosen: f64,
        policy: IntersectionPolicy,
    },
    BranchCleared,
    Blocked,
    GoalReached { distance: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// What the planning loop should do until the next mission step.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    /// Plan toward this target.
    Track(Pose),
    /// Rotate in place toward a world bearing.
    Turn { bearing: f64 },
    /// Rotate in place counter-clockwise looking for a free direction.
    Sweep,
    Stop,
    Fail(String),
}

#[derive(Debug, Clone)]
pub struct Mission {
    cfg: MissionConfig,
    clf: ClfParams,
    state: MissionState,
    armed: bool,
    /// World bearing of the branch being taken at an intersection.
    branch: Option<f64>,
    swept: Option<(f64, f64)>,
    /// Heading chosen after a block, held until the turn completes.
    reorient: Option<f64>,
    failed: bool,
    events: Vec<MissionEvent>,
}

impl Mission {
    pub fn new(cfg: MissionConfig, clf: ClfParams) -> Self {
        Self {
            armed: cfg.arm_distance <= 0.0,
            cfg,
            clf,
            state: MissionState::Navigate,
            branch: None,
            swept: None,
            reorient: None,
            failed: false,
            events: Vec::new(),
        }
    }

    pub fn state(&self) -> MissionState {
        self.state
    }

    pub fn config(&self) -> &MissionConfig {
        &self.cfg
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn events(&self) -> &[MissionEvent] {
        &self.events
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.events.push(MissionEvent { time, kind });
    }

    fn transition(&mut self, time: f64, to: MissionState) {
        if to != self.state {
            let from = self.state;
            self.state = to;
            self.push(time, EventKind::Transition { from, to });
        }
    }

    fn branch_target(&mut self, time: f64, robot: &Pose, coster: &EdgeCoster) -> Option<(Pose, MissionState)> {
        let policy = self.cfg.intersection_policy;
        if policy == IntersectionPolicy::None {
            return None;
        }
        let bearings = detect_intersection(coster.map(), robot, &self.cfg);
        if bearings.len() < 3 {
            if self.branch.take().is_some() {
                self.push(time, EventKind::BranchCleared);
            }
            return None;
        }
        match self.branch {
            None => {
                let forward: Vec<f64> = bearings.iter().copied().filter(|b| b.abs() <= INCOMING_BEARING).collect();
                let chosen = select_branch(&forward, policy)?;
                self.branch = Some(wrap(robot.theta + chosen));
                self.push(
                    time,
                    EventKind::Intersection {
                        bearings: bearings.clone(),
                        candidates: forward,
                        chosen,
                        policy,
                    },
                );
            }
            Some(latched) => {
                // follow the cluster that continues the latched branch
                let rel = wrap(latched - robot.theta);
                let nearest = bearings
                    .iter()
                    .copied()
                    .min_by(|a, b| wrap(a - rel).abs().total_cmp(&wrap(b - rel).abs()))?;
                self.branch = Some(wrap(robot.theta + nearest));
            }
        }
        let world = self.branch?;
        let direct = Pose::new(
            robot.x + self.cfg.arc_radius * world.cos(),
            robot.y + self.cfg.arc_radius * world.sin(),
            world,
        );
        let state = MissionState::IntersectionAction(policy);
        if coster.map().traversable_at(direct.x, direct.y) {
            return Some((direct, state));
        }
        let rel = wrap(world - robot.theta);
        let mut cands = arc_candidates(robot, &self.cfg, &self.clf);
        cands.sort_by(|a, b| wrap(a.0 - rel).abs().total_cmp(&wrap(b.0 - rel).abs()));
        cands
            .into_iter()
            .find(|(_, p)| coster.map().traversable_at(p.x, p.y) && coster.edge_cost(robot, p.position()).is_some())
            .map(|(_, p)| (p, state))
    }

    /// Advances the state machine from the robot pose and the current
    /// planning map and returns what the planner should do next.
    pub fn step(&mut self, time: f64, robot: &Pose, coster: &EdgeCoster) -> Directive {
        if self.failed {
            return Directive::Fail("mission already failed".into());
        }
        if self.state == MissionState::GoalReached {
            return Directive::Stop;
        }
        let goal = self.cfg.final_goal;
        let r = robot.distance_to(goal);
        if !self.armed && r >= self.cfg.arm_distance {
            self.armed = true;
        }
        if self.armed && r < self.cfg.goal_tolerance {
            self.transition(time, MissionState::GoalReached);
            self.push(time, EventKind::GoalReached { distance: r });
            return Directive::Stop;
        }
        if let Some(heading) = self.reorient {
            if self.state == MissionState::TurnInPlace && wrap(heading - robot.theta).abs() > REORIENT_TOLERANCE {
                return Directive::Turn { bearing: heading };
            }
            self.reorient = None;
            self.transition(time, MissionState::Navigate);
        }
        let target = if self.armed && r <= self.cfg.arc_radius {
            let los = (goal.y - robot.y).atan2(goal.x - robot.x);
            Some((Pose::new(goal.x, goal.y, los), MissionState::Navigate))
        } else {
            match self.branch_target(time, robot, coster) {
                Some(t) => Some(t),
                None => arc_subgoal(coster, robot, &self.cfg)
                    .ok()
                    .map(|s| (s.pose, MissionState::Navigate)),
            }
        };
        let Some((target, kind)) = target else {
            if self.state != MissionState::TurnInPlace {
                self.push(time, EventKind::Blocked);
                if let Some(heading) = self.free_heading(robot, coster) {
                    self.transition(time, MissionState::TurnInPlace);
                    self.reorient = Some(heading);
                    return Directive::Turn { bearing: heading };
                }
            }
            let (last, total) = self.swept.unwrap_or((robot.theta, 0.0));
            let total = total + wrap(robot.theta - last).abs();
            self.swept = Some((robot.theta, total));
            self.transition(time, MissionState::TurnInPlace);
            if total >= 2.0 * std::f64::consts::PI {
                self.failed = true;
                let reason = "blocked after a full revolution".to_string();
                self.push(time, EventKind::Failed { reason: reason.clone() });
                return Directive::Fail(reason);
            }
            return Directive::Sweep;
        };
        self.swept = None;
        let los = (target.y - robot.y).atan2(target.x - robot.x);
        let delta = wrap(los - robot.theta).abs();
        let turning = self.state == MissionState::TurnInPlace;
        if delta >= self.clf.fov_half_angle() || (turning && delta >= self.cfg.turn_exit) {
            self.transition(time, MissionState::TurnInPlace);
            return Directive::Turn { bearing: los };
        }
        self.transition(time, kind);
        Directive::Track(target)
    }

    /// Smallest rotation from which the arc search finds a sub-goal; when
    /// both directions work at that rotation the cheaper sub-goal wins.
    fn free_heading(&self, robot: &Pose, coster: &EdgeCoster) -> Option<f64> {
        let step = std::f64::consts::TAU / REORIENT_STEPS as f64;
        for k in 1..=REORIENT_STEPS / 2 {
            let best = [1.0, -1.0]
                .into_iter()
                .filter_map(|sign| {
                    let heading = wrap(robot.theta + sign * step * k as f64);
                    arc_subgoal(coster, &Pose::new(robot.x, robot.y, heading), &self.cfg)
                        .ok()
                        .map(|s| (s.cost, heading))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, heading)) = best {
                return Some(heading);
            }
        }
        None
    }

    pub fn write_events<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
