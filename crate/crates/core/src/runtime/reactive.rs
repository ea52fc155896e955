use super::{Published, ReactiveMode};
use crate::clf::{clf_commands, ClfParams, Command, CommandLimits};
use crate::geometry::{to_egopolar, wrap, Pose};

/// Heading gain used while turning in place.
pub const TURN_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactiveOutput {
    pub command: Command,
    /// New active index when the switch radius was crossed.
    pub advanced_to: Option<usize>,
    /// Track mode with nothing published yet.
    pub awaiting_plan: bool,
}

/// Evaluates the feedback law at the instantaneous pose. A pure function of
/// its arguments; any index advance is reported, not applied.
pub fn reactive_tick(
    pose: &Pose,
    published: &Published,
    clf: &ClfParams,
    limits: &CommandLimits,
    switch_radius: f64,
) -> ReactiveOutput {
    let output = |command: Command| ReactiveOutput {
        command: limits.clamp(command).0,
        advanced_to: None,
        awaiting_plan: false,
    };
    match published.mode {
        ReactiveMode::Hold => output(Command::ZERO),
        ReactiveMode::Sweep => output(Command::new(0.0, 0.0, limits.omega_max)),
        ReactiveMode::Turn { bearing } => output(Command::new(0.0, 0.0, TURN_GAIN * wrap(bearing - pose.theta))),
        ReactiveMode::Track => {
            let Some(path) = published.path.as_ref().filter(|p| !p.is_empty()) else {
                return ReactiveOutput {
                    command: Command::ZERO,
                    advanced_to: None,
                    awaiting_plan: true,
                };
            };
            let last = path.wayposes.len() - 1;
            let mut idx = path.active_index.min(last);
            while idx < last && pose.distance_to(path.wayposes[idx].position()) < switch_radius {
                idx += 1;
            }
            let target = path.wayposes[idx].position();
            let mut out = output(clf_commands(&to_egopolar(pose, target), clf));
            if idx != path.active_index {
                out.advanced_to = Some(idx);
            }
            out
        }
    }
}
