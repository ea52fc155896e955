use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Published path: way-poses after the root, in order toward the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSnapshot {
    /// Robot pose the tree was rooted at.
    pub root: Pose,
    pub wayposes: Vec<Pose>,
    /// First way-pose not yet reached.
    pub active_index: usize,
    pub epoch: u64,
    /// Cost from the root through the last way-pose.
    pub cost: f64,
    pub reaches_goal: bool,
}

impl PathSnapshot {
    pub fn is_empty(&self) -> bool {
        self.active_index >= self.wayposes.len()
    }

    pub fn active(&self) -> Option<&Pose> {
        self.wayposes.get(self.active_index)
    }

    pub fn remaining(&self) -> &[Pose] {
        &self.wayposes[self.active_index.min(self.wayposes.len())..]
    }

    /// Moves the active index forward; never backward.
    pub fn advance_to(&mut self, index: usize) {
        self.active_index = self.active_index.max(index.min(self.wayposes.len()));
    }

    /// Root followed by every way-pose, for plotting.
    pub fn polyline(&self) -> Vec<[f64; 2]> {
        std::iter::once(&self.root)
            .chain(self.wayposes.iter())
            .map(|p| [p.x, p.y])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_index_is_monotone() {
        let mut s = PathSnapshot {
            root: Pose::new(0.0, 0.0, 0.0),
            wayposes: vec![Pose::new(1.0, 0.0, 0.0), Pose::new(2.0, 0.0, 0.0)],
            active_index: 0,
            epoch: 0,
            cost: 2.0,
            reaches_goal: true,
        };
        s.advance_to(1);
        s.advance_to(0);
        assert_eq!(s.active_index, 1);
        assert_eq!(s.active().unwrap().x, 2.0);
        s.advance_to(9);
        assert!(s.is_empty());
        assert!(s.remaining().is_empty());
    }
}
