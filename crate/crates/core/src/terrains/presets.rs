use super::{ClutteredSpec, CorridorSpec, Obstacle, RobotModel, ScenarioConfig, TerrainSpec, WavefieldSpec};
use crate::geometry::{GoalPosition, Pose};
use crate::mission::{IntersectionPolicy, MissionConfig};

pub const PRESET_NAMES: &[&str] = &[
    "flat-goal",
    "wavefield",
    "corridors-left-turn",
    "corridors-glass-return",
    "cluttered-room",
];

fn base(name: &str, terrain: TerrainSpec, start: Pose, goal: GoalPosition) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        seed: 0,
        resolution: 0.1,
        terrain,
        robot: RobotModel::Alip,
        alip: Default::default(),
        limits: Default::default(),
        start,
        goal,
        mission: MissionConfig {
            intersection_policy: IntersectionPolicy::None,
            ..Default::default()
        },
        planner: Default::default(),
        clf: Default::default(),
        rates: Default::default(),
        runtime: Default::default(),
        perception: Default::default(),
        disturbances: Vec::new(),
    }
}

/// Bundled scenario by name.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let cfg = match name {
        "flat-goal" => base(
            name,
            TerrainSpec::Flat { extent: [20.0, 12.0] },
            Pose::new(3.0, 6.0, 0.0),
            GoalPosition::new(13.0, 6.0),
        ),
        "wavefield" => {
            let mut c = base(
                name,
                TerrainSpec::Wavefield(WavefieldSpec::default()),
                Pose::new(9.0, 3.0, std::f64::consts::FRAC_PI_2),
                GoalPosition::new(9.0, 33.0),
            );
            c.runtime.timeout = 180.0;
            c
        }
        "corridors-left-turn" => {
            // a square loop whose corners carry dead-end stubs, so every corner
            // is a T-junction and turning left each time closes the loop
            let mut c = base(
                name,
                TerrainSpec::Corridors(CorridorSpec {
                    extent: [20.0, 20.0],
                    segments: vec![
                        [5.0, 5.0, 15.0, 5.0],
                        [15.0, 5.0, 15.0, 15.0],
                        [15.0, 15.0, 5.0, 15.0],
                        [5.0, 15.0, 5.0, 5.0],
                        [15.0, 5.0, 18.0, 5.0],
                        [15.0, 15.0, 15.0, 18.0],
                        [5.0, 15.0, 2.0, 15.0],
                        [5.0, 5.0, 5.0, 2.0],
                    ],
                    ..Default::default()
                }),
                Pose::new(10.0, 5.0, 0.0),
                GoalPosition::new(10.0, 5.0),
            );
            c.mission.intersection_policy = IntersectionPolicy::Left;
            c.mission.arc_radius = 2.5;
            c.mission.arm_distance = 5.0;
            c.perception.local_side = 9.0;
            c.runtime.timeout = 240.0;
            c
        }
        "corridors-glass-return" => {
            // two parallel corridors joined at the east end, split by a wall
            // with a long glass pane
            let mut c = base(
                name,
                TerrainSpec::Corridors(CorridorSpec {
                    extent: [16.0, 10.0],
                    segments: vec![
                        [1.5, 4.0, 13.5, 4.0],
                        [1.5, 6.6, 13.5, 6.6],
                        [13.5, 4.0, 13.5, 6.6],
                    ],
                    glass: vec![[2.0, 5.3, 11.0, 5.3]],
                    ..Default::default()
                }),
                Pose::new(9.0, 4.0, 0.0),
                GoalPosition::new(3.0, 6.6),
            );
            c.mission.arc_radius = 2.5;
            c.perception.local_side = 8.0;
            c.perception.masking = true;
            c
        }
        "cluttered-room" => base(
            name,
            TerrainSpec::Cluttered(ClutteredSpec {
                extent: [16.0, 16.0],
                obstacles: vec![
                    Obstacle::Box {
                        center: [6.0, 6.0],
                        half_size: [1.2, 0.6],
                    },
                    Obstacle::Disc {
                        center: [9.5, 8.5],
                        radius: 1.0,
                    },
                    Obstacle::Box {
                        center: [4.0, 10.5],
                        half_size: [0.5, 1.5],
                    },
                    Obstacle::Box {
                        center: [11.0, 4.0],
                        half_size: [1.5, 0.5],
                    },
                    Obstacle::Disc {
                        center: [12.0, 11.0],
                        radius: 0.7,
                    },
                ],
                holes: vec![
                    Obstacle::Disc {
                        center: [7.5, 11.5],
                        radius: 0.8,
                    },
                    Obstacle::Box {
                        center: [9.0, 2.5],
                        half_size: [0.6, 0.6],
                    },
                    Obstacle::Disc {
                        center: [3.5, 6.5],
                        radius: 0.6,
                    },
                ],
                ..Default::default()
            }),
            Pose::new(2.0, 2.0, std::f64::consts::FRAC_PI_4),
            GoalPosition::new(13.5, 13.5),
        ),
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_start_on_free_ground() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let t = cfg.terrain.generate(cfg.resolution, cfg.seed).unwrap();
            assert!(t.truth.traversable_at(cfg.start.x, cfg.start.y), "{name}");
            assert!(t.truth.traversable_at(cfg.goal.x, cfg.goal.y), "{name}");
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn wavefield_start_and_goal_share_a_valley() {
        let cfg = preset("wavefield").unwrap();
        let TerrainSpec::Wavefield(w) = &cfg.terrain else { panic!() };
        let valley = 3.0 * w.wavelength1 / 4.0;
        assert_eq!(cfg.start.x, valley);
        assert_eq!(cfg.goal.x, valley);
        assert!((cfg.goal.y - cfg.start.y - 30.0).abs() < 1e-12);
    }
}
