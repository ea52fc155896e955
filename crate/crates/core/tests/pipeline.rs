use std::sync::Arc;

use omniplan::localmap::LayeredGridMap;
use omniplan::planner::{plan, PlannerParams};
use omniplan::runtime::{self, Outcome};
use omniplan::terrains::preset;
use omniplan::{ClfParams, GoalPosition, Pose};

#[test]
fn planned_path_avoids_a_wall_and_keeps_a_consistent_tree() {
    let mut map = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
    for y in 0..70 {
        for x in 48..52 {
            let i = map.index((x, y)).unwrap();
            map.obstacle[i] = true;
        }
    }
    let map = Arc::new(map);
    let root = Pose::new(2.0, 3.0, 0.0);
    let goal = GoalPosition::new(8.0, 3.0);
    let params = PlannerParams {
        max_iterations: 3000,
        ..PlannerParams::default()
    };
    let (snap, tree) = plan(root, goal, map.clone(), ClfParams::default(), params, 7).unwrap();
    tree.check_consistency().unwrap();
    assert!(snap.reaches_goal);
    let last = snap.wayposes.last().unwrap();
    assert!(last.distance_to(goal) < 0.5);
    assert!(snap.wayposes.iter().any(|p| p.y > 7.0), "path goes around the wall");
    assert!(snap.wayposes.iter().all(|p| map.traversable_at(p.x, p.y)));
}

#[test]
fn flat_goal_scenario_reaches_the_goal() {
    let cfg = preset("flat-goal").unwrap();
    let a = runtime::run(&cfg).unwrap();
    assert_eq!(a.report.outcome, Outcome::GoalReached);
    assert!(a.report.final_distance <= cfg.mission.goal_tolerance);
    assert_eq!(a.report.discontinuity_events, 0);
    assert!(a.last_path.is_some());
}
