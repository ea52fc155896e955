//! Two-rate execution engine on a simulated clock: a planning loop that
//! replans with warm starts and publishes path snapshots, and a reactive loop
//! that evaluates the CLF field at the instantaneous pose.

mod cell;
mod reactive;
pub mod udp;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::Command;
use crate::geometry::{GoalPosition, Pose};
use crate::localmap::{crop_local, mask_beyond_occluders, LayeredGridMap, MapError, MaskOptions};
use crate::mission::{Directive, EventKind, Mission, MissionEvent};
use crate::planner::{EdgeCoster, PathSnapshot, Steering, Tree};
use crate::robots::{AlipPlant, CommandMailbox, OmniPlant, Plant, PlantLogRow};
use crate::terrains::{RobotModel, ScenarioConfig, ScenarioError, Terrain};

pub use cell::{Published, ReactiveMode, SnapshotCell};
pub use reactive::{reactive_tick, ReactiveOutput, TURN_GAIN};

/// Clearance is searched within this many meters of the robot.
pub const CLEARANCE_CAP: f64 = 3.0;

fn tick_ratio(period: f64, dt: f64) -> Option<u64> {
    let q = period / dt;
    let n = q.round();
    (n >= 1.0 && (q - n).abs() <= 1e-6 * n).then_some(n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    pub planning_hz: f64,
    pub reactive_hz: f64,
    /// Plant integration step, seconds.
    pub sim_dt: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            planning_hz: 5.0,
            reactive_hz: 300.0,
            sim_dt: 1.0 / 300.0,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.planning_hz > 0.0 && self.reactive_hz > 0.0 && self.sim_dt > 0.0) {
            return Err("rates and sim_dt must be positive".into());
        }
        if self.reactive_hz < self.planning_hz {
            return Err(format!(
                "reactive_hz {} is below planning_hz {}",
                self.reactive_hz, self.planning_hz
            ));
        }
        if self.sim_dt > 1.0 / self.reactive_hz * (1.0 + 1e-9) {
            return Err(format!("sim_dt {} exceeds the reactive period", self.sim_dt));
        }
        if tick_ratio(1.0 / self.reactive_hz, self.sim_dt).is_none() || tick_ratio(1.0 / self.planning_hz, self.sim_dt).is_none() {
            return Err("both loop periods must be whole multiples of sim_dt".into());
        }
        Ok(())
    }

    /// Plant steps per planning tick.
    pub fn planning_every(&self) -> u64 {
        tick_ratio(1.0 / self.planning_hz, self.sim_dt).expect("validated rates")
    }

    /// Plant steps per reactive tick.
    pub fn reactive_every(&self) -> u64 {
        tick_ratio(1.0 / self.reactive_hz, self.sim_dt).expect("validated rates")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    /// Distance at which the active way-pose counts as reached.
    pub switch_radius: f64,
    /// Command jumps above this norm are reported as discontinuities.
    pub discontinuity_bound: f64,
    /// Simulated seconds before the run is abandoned.
    pub timeout: f64,
    pub iterations_per_tick: usize,
    /// Trajectory rows per simulated second.
    pub log_hz: f64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            switch_radius: 0.4,
            discontinuity_bound: 0.5,
            timeout: 120.0,
            iterations_per_tick: 60,
            log_hz: 30.0,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.switch_radius > 0.0 && self.discontinuity_bound > 0.0 && self.timeout > 0.0 && self.log_hz > 0.0) {
            return Err("runtime settings must be positive".into());
        }
        if self.iterations_per_tick == 0 {
            return Err("iterations_per_tick must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    MissionFailed,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub failure: Option<String>,
    pub sim_time: f64,
    pub plant_ticks: u64,
    pub reactive_ticks: u64,
    pub planning_ticks: u64,
    pub final_pose: Pose,
    pub final_distance: f64,
    pub path_length: f64,
    /// Smallest distance to a truth obstacle, capped at `CLEARANCE_CAP`.
    pub min_clearance: f64,
    pub replans: u64,
    pub plan_failures: u64,
    pub warm_starts_reused: u64,
    pub warm_starts_discarded: u64,
    pub preservation_checks: u64,
    pub preservation_violations: u64,
    pub awaiting_ticks: u64,
    pub discontinuity_events: u64,
    pub excused_jumps: u64,
    /// Largest command jump outside disturbances and mode changes.
    pub max_jump: f64,
    /// Plans whose steered path enters a truth glass cell.
    pub glass_crossings: u64,
    /// Plans whose steered path enters a cell hidden by masking.
    pub masked_touches: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run leaves behind.
pub struct RunArtifacts {
    pub report: RunReport,
    pub trajectory: Vec<PlantLogRow>,
    pub events: Vec<MissionEvent>,
    pub terrain: Terrain,
    pub last_tree: Option<Tree>,
    /// Most recent path published for tracking.
    pub last_path: Option<PathSnapshot>,
}

impl RunArtifacts {
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", PlantLogRow::HEADER)?;
        for row in &self.trajectory {
            row.write_csv(&mut out)?;
        }
        Ok(())
    }

    pub fn write_events<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("terrain generation failed: {0}")]
    Map(#[from] MapError),
}

/// Runs a scenario to completion on the simulated clock.
pub fn run(cfg: &ScenarioConfig) -> Result<RunArtifacts, RunError> {
    cfg.validate()?;
    let terrain = cfg.terrain.generate(cfg.resolution, cfg.seed)?;
    let plant: Box<dyn Plant> = match cfg.robot {
        RobotModel::Alip => Box::new(AlipPlant::new(cfg.start, cfg.alip, cfg.limits, cfg.seed)),
        RobotModel::Omni => Box::new(OmniPlant::new(cfg.start, cfg.limits)),
    };
    Ok(Engine::new(cfg, terrain, plant).run())
}

/// Runs a scenario against an arbitrary plant, e.g. a remote one.
pub fn run_with_plant(cfg: &ScenarioConfig, plant: Box<dyn Plant>) -> Result<RunArtifacts, RunError> {
    cfg.validate()?;
    let terrain = cfg.terrain.generate(cfg.resolution, cfg.seed)?;
    Ok(Engine::new(cfg, terrain, plant).run())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModeKey {
    Awaiting,
    Track,
    Turn,
    Sweep,
    Hold,
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    terrain: Terrain,
    glass: Vec<bool>,
    plant: Box<dyn Plant>,
    mailbox: CommandMailbox,
    cell: SnapshotCell,
    mission: Mission,
    tree: Option<Tree>,
    last_plan: Option<PathSnapshot>,
    fresh_trees: u64,
    report: RunReport,
    trajectory: Vec<PlantLogRow>,
    last_command: Command,
    last_mode: ModeKey,
    excuse: bool,
    done: Option<Outcome>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, terrain: Terrain, plant: Box<dyn Plant>) -> Self {
        let mut glass = vec![false; terrain.truth.len()];
        for &i in &terrain.glass {
            glass[i] = true;
        }
        let report = RunReport {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            outcome: Outcome::Timeout,
            failure: None,
            sim_time: 0.0,
            plant_ticks: 0,
            reactive_ticks: 0,
            planning_ticks: 0,
            final_pose: cfg.start,
            final_distance: cfg.start.distance_to(cfg.goal),
            path_length: 0.0,
            min_clearance: CLEARANCE_CAP,
            replans: 0,
            plan_failures: 0,
            warm_starts_reused: 0,
            warm_starts_discarded: 0,
            preservation_checks: 0,
            preservation_violations: 0,
            awaiting_ticks: 0,
            discontinuity_events: 0,
            excused_jumps: 0,
            max_jump: 0.0,
            glass_crossings: 0,
            masked_touches: 0,
        };
        Self {
            mission: Mission::new(cfg.mission_config(), cfg.clf),
            cfg,
            terrain,
            glass,
            plant,
            mailbox: CommandMailbox::default(),
            cell: SnapshotCell::new(),
            tree: None,
            last_plan: None,
            fresh_trees: 0,
            report,
            trajectory: Vec::new(),
            last_command: Command::ZERO,
            last_mode: ModeKey::Awaiting,
            excuse: false,
            done: None,
        }
    }

    fn run(mut self) -> RunArtifacts {
        let rates = self.cfg.rates;
        let dt = rates.sim_dt;
        let plan_every = rates.planning_every();
        let react_every = rates.reactive_every();
        let log_every = ((1.0 / self.cfg.runtime.log_hz) / dt).round().max(1.0) as u64;
        let max_ticks = (self.cfg.runtime.timeout / dt).round() as u64;
        let mut disturbances = self.cfg.disturbances.clone();
        disturbances.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut next_disturbance = 0;
        self.log(0.0);
        self.clearance();
        let mut k = 0u64;
        while self.done.is_none() {
            let t = k as f64 * dt;
            while next_disturbance < disturbances.len() && disturbances[next_disturbance].time <= t + 0.5 * dt {
                self.plant.disturb(&disturbances[next_disturbance].offset);
                self.excuse = true;
                next_disturbance += 1;
            }
            if k % plan_every == 0 {
                self.report.planning_ticks += 1;
                self.planning_tick(t);
            }
            if k % react_every == 0 {
                self.report.reactive_ticks += 1;
                self.reactive_step();
            }
            let before = self.plant.pose();
            self.plant.advance(dt, &self.mailbox);
            k += 1;
            let pose = self.plant.pose();
            self.report.path_length += (pose.x - before.x).hypot(pose.y - before.y);
            let t = k as f64 * dt;
            if k % log_every == 0 {
                self.log(t);
                self.clearance();
            }
            let free = self
                .terrain
                .truth
                .index(self.terrain.truth.cell_of(pose.x, pose.y))
                .is_some_and(|i| self.terrain.truth.traversable_index(i));
            if !free {
                log::warn!("collision at ({:.3}, {:.3})", pose.x, pose.y);
                self.done = Some(Outcome::Collision);
            } else if self.done.is_none() && k >= max_ticks {
                self.done = Some(Outcome::Timeout);
            }
        }
        self.report.plant_ticks = k;
        self.report.sim_time = k as f64 * dt;
        if k % log_every != 0 {
            self.log(self.report.sim_time);
        }
        self.clearance();
        let pose = self.plant.pose();
        self.report.outcome = self.done.expect("loop ends with an outcome");
        self.report.final_pose = pose;
        self.report.final_distance = pose.distance_to(self.cfg.goal);
        RunArtifacts {
            report: self.report,
            trajectory: self.trajectory,
            events: self.mission.events().to_vec(),
            terrain: self.terrain,
            last_tree: self.tree,
            last_path: self.last_plan,
        }
    }

    fn log(&mut self, t: f64) {
        self.trajectory.push(PlantLogRow::capture(t, self.plant.as_ref()));
    }

    fn clearance(&mut self) {
        let map = &self.terrain.truth;
        let p = self.plant.pose();
        let k = (CLEARANCE_CAP / map.resolution).ceil() as i64;
        let c = map.cell_of(p.x, p.y);
        let mut best = self.report.min_clearance;
        for dy in -k..=k {
            for dx in -k..=k {
                let cell = (c.0 + dx, c.1 + dy);
                if let Some(i) = map.index(cell) {
                    if map.obstacle[i] {
                        let [x, y] = map.cell_center(cell);
                        best = best.min((x - p.x).hypot(y - p.y));
                    }
                }
            }
        }
        self.report.min_clearance = best;
    }

    fn reactive_step(&mut self) {
        let pose = self.plant.pose();
        let published = self.cell.load();
        let out = reactive_tick(
            &pose,
            &published,
            &self.cfg.clf,
            &self.cfg.limits,
            self.cfg.runtime.switch_radius,
        );
        if let Some(idx) = out.advanced_to {
            self.cell.advance(published.epoch, idx);
        }
        if out.awaiting_plan {
            self.report.awaiting_ticks += 1;
        }
        self.mailbox.post(out.command);
        let mode = match published.mode {
            ReactiveMode::Track if out.awaiting_plan => ModeKey::Awaiting,
            ReactiveMode::Track => ModeKey::Track,
            ReactiveMode::Turn { .. } => ModeKey::Turn,
            ReactiveMode::Sweep => ModeKey::Sweep,
            ReactiveMode::Hold => ModeKey::Hold,
        };
        let excused = self.excuse || mode != self.last_mode;
        let jump = out.command.jump(&self.last_command);
        if jump > self.cfg.runtime.discontinuity_bound {
            if excused {
                self.report.excused_jumps += 1;
            } else {
                self.report.discontinuity_events += 1;
                log::debug!("command jump {jump:.3} at ({:.3}, {:.3})", pose.x, pose.y);
            }
        }
        if !excused {
            self.report.max_jump = self.report.max_jump.max(jump);
        }
        self.excuse = false;
        self.last_mode = mode;
        self.last_command = out.command;
    }

    /// Local planning map: crop, optional occlusion masking, inflation. The
    /// un-inflated map is used when inflation swallows the robot.
    fn planning_map(&self, pose: &Pose) -> Result<(LayeredGridMap, Vec<usize>), MapError> {
        let p = &self.cfg.perception;
        let local = crop_local(&self.terrain.perception, pose, p.local_side)?;
        let (sensed, masked) = if p.masking {
            let z_ref = local.elevation_at(pose.x, pose.y).unwrap_or(0.0);
            let m = mask_beyond_occluders(
                &local,
                pose,
                &MaskOptions {
                    occluder_height: p.occluder_height,
                    z_ref,
                },
            );
            (m.map, m.masked)
        } else {
            (local, Vec::new())
        };
        let inflated = sensed.inflated(p.inflation_radius);
        if inflated.traversable_at(pose.x, pose.y) {
            Ok((inflated, masked))
        } else {
            Ok((sensed, masked))
        }
    }

    fn planning_tick(&mut self, t: f64) {
        let pose = self.plant.pose();
        let (map, masked) = match self.planning_map(&pose) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("planning map unavailable: {e}");
                self.report.plan_failures += 1;
                return;
            }
        };
        let map = Arc::new(map);
        let seen = self.mission.events().len();
        let directive = {
            let coster = EdgeCoster::new(&map, &pose, self.cfg.clf, &self.cfg.planner);
            self.mission.step(t, &pose, &coster)
        };
        if self.mission.events()[seen..]
            .iter()
            .any(|e| matches!(e.kind, EventKind::Transition { .. }))
        {
            self.excuse = true;
        }
        match directive {
            Directive::Track(target) => self.replan(pose, target.position(), map, &masked),
            Directive::Turn { bearing } => {
                self.tree = None;
                self.cell.publish(None, ReactiveMode::Turn { bearing });
            }
            Directive::Sweep => {
                self.tree = None;
                self.cell.publish(None, ReactiveMode::Sweep);
            }
            Directive::Stop => {
                self.cell.publish(None, ReactiveMode::Hold);
                self.done = Some(Outcome::GoalReached);
            }
            Directive::Fail(reason) => {
                self.cell.publish(None, ReactiveMode::Hold);
                self.report.failure = Some(reason);
                self.done = Some(Outcome::MissionFailed);
            }
        }
    }

    fn fresh_tree(&mut self, pose: Pose, goal: GoalPosition, map: Arc<LayeredGridMap>) -> Option<Tree> {
        let seed = self.cfg.seed ^ self.fresh_trees.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.fresh_trees += 1;
        match Tree::new(pose, goal, map, self.cfg.clf, self.cfg.planner.clone(), seed) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("cannot start a tree: {e}");
                None
            }
        }
    }

    fn replan(&mut self, pose: Pose, goal: GoalPosition, map: Arc<LayeredGridMap>, masked: &[usize]) {
        let current = self.cell.load();
        let previous = match current.mode {
            ReactiveMode::Track => current.path.clone().filter(|p| !p.is_empty()),
            _ => None,
        };
        let mut reused = false;
        let tree = match (self.tree.take(), previous.as_ref()) {
            (Some(tree), Some(prev)) => match tree.warm_start(prev, pose, map.clone(), goal) {
                Ok(ws) => {
                    reused = ws.reused;
                    if ws.reused {
                        self.report.warm_starts_reused += 1;
                    } else {
                        self.report.warm_starts_discarded += 1;
                    }
                    Some(ws.tree)
                }
                Err(e) => {
                    log::warn!("warm start failed: {e}");
                    None
                }
            },
            _ => self.fresh_tree(pose, goal, map.clone()),
        };
        let Some(mut tree) = tree else {
            self.report.plan_failures += 1;
            return;
        };
        tree.grow(self.cfg.runtime.iterations_per_tick);
        match tree.snapshot(0).map(|s| tree.shortcut(&s)) {
            Ok(snap) => {
                if reused {
                    let prev = previous.as_ref().expect("reuse implies a previous path");
                    if let Some(expected) = prev.remaining().iter().find(|w| pose.distance_to(w.position()) > 1e-9) {
                        self.report.preservation_checks += 1;
                        if snap.wayposes[0] != *expected {
                            self.report.preservation_violations += 1;
                        }
                    }
                }
                self.audit(&snap, &map, masked);
                self.report.replans += 1;
                self.last_plan = Some(snap.clone());
                self.cell.publish(Some(snap), ReactiveMode::Track);
            }
            Err(e) => {
                log::debug!("plan failed at ({:.3}, {:.3}): {e}", pose.x, pose.y);
                self.report.plan_failures += 1;
            }
        }
        self.tree = Some(tree);
    }

    /// Counts glass and masked cells under the steered path of a plan.
    fn audit(&mut self, snap: &PathSnapshot, map: &LayeredGridMap, masked: &[usize]) {
        if self.terrain.glass.is_empty() && masked.is_empty() {
            return;
        }
        let mut hidden = vec![false; map.len()];
        for &i in masked {
            hidden[i] = true;
        }
        let steering = Steering::new(self.cfg.clf, self.cfg.planner.steer_step);
        let truth = &self.terrain.truth;
        let (mut glass, mut touched) = (false, false);
        let mut from = snap.root;
        for w in &snap.wayposes {
            if let Ok(path) = steering.steer(from, w.position()) {
                for p in &path.poses {
                    if let Some(i) = truth.index(truth.cell_of(p.x, p.y)) {
                        glass |= self.glass[i];
                    }
                    if let Some(i) = map.index(map.cell_of(p.x, p.y)) {
                        touched |= hidden[i];
                    }
                }
            }
            from = *w;
        }
        self.report.glass_crossings += glass as u64;
        self.report.masked_touches += touched as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrains::{preset, TerrainSpec};

    fn flat_goal(robot: RobotModel) -> ScenarioConfig {
        let mut cfg = preset("flat-goal").unwrap();
        cfg.robot = robot;
        cfg
    }

    #[test]
    fn rate_validation() {
        assert!(RateConfig::default().validate().is_ok());
        let r = RateConfig::default();
        assert_eq!((r.planning_every(), r.reactive_every()), (60, 1));
        assert!(RateConfig {
            planning_hz: 400.0,
            ..r
        }
        .validate()
        .is_err());
        assert!(RateConfig { sim_dt: 0.01, ..r }.validate().is_err());
        assert!(RateConfig {
            planning_hz: 7.0,
            ..r
        }
        .validate()
        .is_err());
    }

    #[test]
    fn flat_goal_is_reached_on_a_near_straight_path() {
        for robot in [RobotModel::Alip, RobotModel::Omni] {
            let a = run(&flat_goal(robot)).unwrap();
            let r = &a.report;
            assert_eq!(r.outcome, Outcome::GoalReached, "{robot:?} {r:?}");
            assert!(r.path_length <= 11.0, "{robot:?} length {}", r.path_length);
            assert!(r.final_distance < cfg_tolerance());
        }
    }

    fn cfg_tolerance() -> f64 {
        crate::mission::MissionConfig::default().goal_tolerance
    }

    #[test]
    fn tick_counts_follow_the_rates_exactly() {
        let a = run(&flat_goal(RobotModel::Omni)).unwrap();
        let r = &a.report;
        let rates = RateConfig::default();
        let k = r.plant_ticks;
        assert_eq!(r.planning_ticks, k.div_ceil(rates.planning_every()));
        assert_eq!(r.reactive_ticks, k.div_ceil(rates.reactive_every()));
        assert_eq!(r.sim_time, k as f64 * rates.sim_dt);
        assert_eq!(a.trajectory.last().unwrap().sim_time, r.sim_time);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = flat_goal(RobotModel::Alip);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_trajectory_csv(&mut ca).unwrap();
        b.write_trajectory_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn equal_rates_still_converge() {
        let mut cfg = flat_goal(RobotModel::Omni);
        cfg.rates.reactive_hz = cfg.rates.planning_hz;
        let a = run(&cfg).unwrap();
        assert_eq!(a.report.outcome, Outcome::GoalReached, "{:?}", a.report);
    }

    #[test]
    fn walking_into_a_wall_is_a_collision() {
        let mut cfg = flat_goal(RobotModel::Omni);
        cfg.terrain = TerrainSpec::Flat { extent: [20.0, 12.0] };
        cfg.start = Pose::new(0.3, 6.0, std::f64::consts::PI);
        cfg.disturbances = vec![crate::terrains::Disturbance {
            time: 0.1,
            offset: Pose::new(-0.5, 0.0, 0.0),
        }];
        let a = run(&cfg).unwrap();
        assert_eq!(a.report.outcome, Outcome::Collision);
    }
}
