//! Reactive planning for omnidirectional and bipedal robots: a CLF steering
//! law, a CLF-RRT* planner over traversability maps, a sub-goal/FSM mission
//! layer and a deterministic two-rate runtime.

pub mod clf;
pub mod geometry;

pub use clf::{ClfParams, Command, CommandLimits};
pub use geometry::{to_egopolar, wrap_angle, EgoPolarState, GoalPosition, Pose};
pub mod localmap;
pub mod planner;
pub mod robots;
pub mod mission;
pub mod terrains;
pub mod runtime;
