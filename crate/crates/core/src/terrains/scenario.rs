use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TerrainSpec;
use crate::clf::{ClfParams, CommandLimits};
use crate::geometry::{GoalPosition, Pose};
use crate::mission::MissionConfig;
use crate::planner::PlannerParams;
use crate::robots::AlipParams;
use crate::runtime::{RateConfig, RuntimeConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotModel {
    Alip,
    Omni,
}

/// How the planner sees the world around the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    /// Side of the robot-centred planning window, meters.
    pub local_side: f64,
    pub masking: bool,
    /// Non-obstacle cells this far above the robot still stop masking rays.
    pub occluder_height: Option<f64>,
    pub inflation_radius: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            local_side: 10.0,
            masking: false,
            occluder_height: Some(0.05),
            inflation_radius: 0.3,
        }
    }
}

/// Pose offset applied to the plant at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub time: f64,
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub terrain: TerrainSpec,
    #[serde(default = "default_robot")]
    pub robot: RobotModel,
    #[serde(default)]
    pub alip: AlipParams,
    #[serde(default)]
    pub limits: CommandLimits,
    pub start: Pose,
    pub goal: GoalPosition,
    #[serde(default)]
    pub mission: MissionConfig,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub clf: ClfParams,
    #[serde(default)]
    pub rates: RateConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
}

fn default_resolution() -> f64 {
    0.1
}

fn default_robot() -> RobotModel {
    RobotModel::Alip
}

impl ScenarioConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_yaml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_yaml(&std::fs::read_to_string(path)?)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("scenario serializes")
    }

    pub fn extent(&self) -> [f64; 2] {
        match &self.terrain {
            TerrainSpec::Flat { extent } => *extent,
            TerrainSpec::Wavefield(w) => w.extent,
            TerrainSpec::Corridors(c) => c.extent,
            TerrainSpec::Cluttered(c) => c.extent,
        }
    }

    /// Mission settings with the final goal taken from the scenario.
    pub fn mission_config(&self) -> MissionConfig {
        MissionConfig {
            final_goal: self.goal,
            ..self.mission.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| ScenarioError::Invalid(m);
        if !(self.resolution > 0.0) {
            return Err(bad("resolution must be positive".into()));
        }
        let [ex, ey] = self.extent();
        let inside = |x: f64, y: f64| x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= ex && y <= ey;
        if !inside(self.start.x, self.start.y) || !self.start.theta.is_finite() {
            return Err(bad(format!("start ({}, {}) lies outside the {ex} x {ey} map", self.start.x, self.start.y)));
        }
        if !inside(self.goal.x, self.goal.y) {
            return Err(bad(format!("goal ({}, {}) lies outside the {ex} x {ey} map", self.goal.x, self.goal.y)));
        }
        self.clf.validate().map_err(bad)?;
        self.planner.validate().map_err(bad)?;
        self.alip.validate().map_err(bad)?;
        self.rates.validate().map_err(bad)?;
        self.runtime.validate().map_err(bad)?;
        self.mission_config().validate(self.perception.local_side).map_err(bad)?;
        if !(self.perception.local_side > 0.0 && self.perception.inflation_radius >= 0.0) {
            return Err(bad("local_side must be positive and inflation_radius non-negative".into()));
        }
        let l = &self.limits;
        if !(l.v_x_min <= 0.0 && l.v_x_max > 0.0 && l.v_y_max > 0.0 && l.omega_max > 0.0) {
            return Err(bad("command limits must bracket zero".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_yaml_uses_defaults() {
        let text = "
name: tiny
seed: 3
terrain: { kind: flat, extent: [10, 10] }
start: { x: 1, y: 1, theta: 0 }
goal: { x: 8, y: 8 }
";
        let cfg = ScenarioConfig::from_yaml(text).unwrap();
        assert_eq!(cfg.robot, RobotModel::Alip);
        assert_eq!(cfg.clf, ClfParams::default());
        let again = ScenarioConfig::from_yaml(&cfg.to_yaml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn goal_outside_map_is_rejected() {
        let text = "
name: bad
seed: 0
terrain: { kind: flat, extent: [10, 10] }
start: { x: 1, y: 1, theta: 0 }
goal: { x: 18, y: 8 }
";
        assert!(matches!(ScenarioConfig::from_yaml(text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let text = "
name: bad
terrain: { kind: flat, extent: [10, 10] }
start: { x: 1, y: 1, theta: 0 }
goal: { x: 8, y: 8 }
";
        assert!(matches!(ScenarioConfig::from_yaml(text), Err(ScenarioError::Parse(_))));
    }
}
