use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::planner::PathSnapshot;

/// What the reactive loop should do with the published value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReactiveMode {
    Track,
    Turn { bearing: f64 },
    Sweep,
    Hold,
}

/// One immutable publication.
#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub epoch: u64,
    pub path: Option<PathSnapshot>,
    pub mode: ReactiveMode,
}

/// Single-writer, multi-reader slot holding the latest plan. Readers get a
/// whole publication or nothing.
#[derive(Debug)]
pub struct SnapshotCell {
    current: RwLock<Arc<Published>>,
}

impl Default for SnapshotCell {
    fn default() -> Self {
        Self::new()
    }
}

impl SnapshotCell {
    pub fn new() -> Self {
        Self {
            current: RwLock::new(Arc::new(Published {
                epoch: 0,
                path: None,
                mode: ReactiveMode::Track,
            })),
        }
    }

    pub fn load(&self) -> Arc<Published> {
        self.current.read().clone()
    }

    /// Replaces the publication and returns its epoch. The snapshot's own
    /// epoch field is overwritten to match.
    pub fn publish(&self, path: Option<PathSnapshot>, mode: ReactiveMode) -> u64 {
        let mut slot = self.current.write();
        let epoch = slot.epoch + 1;
        let path = path.map(|mut p| {
            p.epoch = epoch;
            p
        });
        *slot = Arc::new(Published { epoch, path, mode });
        epoch
    }

    /// Moves the active way-pose forward, but only if `epoch` is still current.
    pub fn advance(&self, epoch: u64, index: usize) -> bool {
        let mut slot = self.current.write();
        if slot.epoch != epoch {
            return false;
        }
        let Some(path) = slot.path.as_ref() else {
            return false;
        };
        if index <= path.active_index {
            return false;
        }
        let mut path = path.clone();
        path.advance_to(index);
        *slot = Arc::new(Published {
            epoch,
            path: Some(path),
            mode: slot.mode,
        });
        true
    }
}
