use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spatial::SpatialGrid;
use super::{distance, PathSnapshot, PlanError, PlannerParams, Steering, Trajectory};
use crate::clf::ClfParams;
use crate::geometry::{GoalPosition, Pose};
use crate::localmap::{cell_cost, min_cell_cost, path_traversability, sample_by_arclength, LayeredGridMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub pose: Pose,
    pub parent: Option<NodeId>,
    pub cost: f64,
    /// Cost of the edge from the parent.
    pub edge_cost: f64,
    /// Traversability of the edge from the parent.
    pub edge_traversability: f64,
    pub children: BTreeSet<NodeId>,
    /// Traversability of the path from the planning root, fixed at insertion.
    pub root_traversability: f64,
}

/// Every collision-free edge whose cost the tree evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
}

pub(crate) struct Evaluated {
    pub traversability: f64,
    pub cost: f64,
}

/// Collision check plus cost of a steered path on `map`.
pub(crate) fn evaluate_path(
    map: &LayeredGridMap,
    robot_z: f64,
    clf: &ClfParams,
    params: &PlannerParams,
    path: &Trajectory,
) -> Option<Evaluated> {
    if path.poses.iter().any(|p| !map.traversable_at(p.x, p.y)) {
        return None;
    }
    let start = path.start();
    let end = path.end();
    let samples = sample_by_arclength(&path.points(), map.resolution);
    let t = path_traversability(map, robot_z, &samples, &params.weights).ok()?;
    Some(Evaluated {
        traversability: t,
        cost: distance(&start, end.position(), clf, params) + params.weights.k_t * t,
    })
}

/// Edge costs on a borrowed map without growing a tree.
pub struct EdgeCoster<'a> {
    map: &'a LayeredGridMap,
    robot_z: f64,
    clf: ClfParams,
    params: &'a PlannerParams,
    steering: Steering,
}

impl<'a> EdgeCoster<'a> {
    /// `robot` fixes the reference height of the relative-elevation term.
    pub fn new(map: &'a LayeredGridMap, robot: &Pose, clf: ClfParams, params: &'a PlannerParams) -> Self {
        let robot_z = map.elevation_at(robot.x, robot.y).unwrap_or(0.0);
        Self {
            map,
            robot_z,
            clf,
            params,
            steering: Steering::new(clf, params.steer_step),
        }
    }

    pub fn map(&self) -> &LayeredGridMap {
        self.map
    }

    pub fn clf(&self) -> &ClfParams {
        &self.clf
    }

    pub fn distance(&self, from: &Pose, to: GoalPosition) -> f64 {
        distance(from, to, &self.clf, self.params)
    }

    /// `distance + k_t T` of the steered path, or `None` when blocked.
    pub fn edge_cost(&self, from: &Pose, to: GoalPosition) -> Option<f64> {
        let path = self.steering.steer(*from, to).ok()?;
        evaluate_path(self.map, self.robot_z, &self.clf, self.params, &path).map(|e| e.cost)
    }
}

#[derive(Serialize)]
struct NodeRecord {
    id: usize,
    x: f64,
    y: f64,
    theta: f64,
    parent: Option<usize>,
    cost: f64,
}

pub struct WarmStart {
    pub tree: Tree,
    /// False when the previous branch was invalid and the tree starts fresh.
    pub reused: bool,
}

pub struct Tree {
    nodes: Vec<Node>,
    map: Arc<LayeredGridMap>,
    clf: ClfParams,
    params: PlannerParams,
    steering: Steering,
    goal: GoalPosition,
    robot_z: f64,
    rng: ChaCha8Rng,
    grid: SpatialGrid,
    min_cell: f64,
    zero_field: bool,
    root_locked: bool,
    iterations: usize,
    edge_log: Option<Vec<CandidateEdge>>,
    rewire_increases: usize,
}

impl Tree {
    pub fn new(
        root: Pose,
        goal: GoalPosition,
        map: Arc<LayeredGridMap>,
        clf: ClfParams,
        params: PlannerParams,
        seed: u64,
    ) -> Result<Self, PlanError> {
        Self::with_rng(root, goal, map, clf, params, ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(
        root: Pose,
        goal: GoalPosition,
        map: Arc<LayeredGridMap>,
        clf: ClfParams,
        params: PlannerParams,
        rng: ChaCha8Rng,
    ) -> Result<Self, PlanError> {
        params.validate().map_err(PlanError::BadParams)?;
        clf.validate().map_err(PlanError::BadParams)?;
        let root_index = map
            .index(map.cell_of(root.x, root.y))
            .filter(|&i| map.traversable_index(i))
            .ok_or(PlanError::RootInCollision(root.x, root.y))?;
        let robot_z = map.elevation[root_index];
        let w = &params.weights;
        let min_cell = min_cell_cost(&map, robot_z, w);
        let zero_field = (0..map.len())
            .filter(|&i| map.traversable_index(i))
            .all(|i| cell_cost(&map, i, robot_z, w) == 0.0);
        let [x0, y0, x1, y1] = map.bounds();
        let pad = map.resolution;
        let mut grid = SpatialGrid::new([x0 - pad, y0 - pad, x1 + pad, y1 + pad], 1.0);
        grid.insert(0, root.x, root.y);
        Ok(Self {
            nodes: vec![Node {
                pose: root,
                parent: None,
                cost: 0.0,
                edge_cost: 0.0,
                edge_traversability: 0.0,
                children: BTreeSet::new(),
                root_traversability: 0.0,
            }],
            steering: Steering::new(clf, params.steer_step),
            map,
            clf,
            params,
            goal,
            robot_z,
            rng,
            grid,
            min_cell,
            zero_field,
            root_locked: false,
            iterations: 0,
            edge_log: None,
            rewire_increases: 0,
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn goal(&self) -> GoalPosition {
        self.goal
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    pub fn map(&self) -> &LayeredGridMap {
        &self.map
    }

    /// Starts recording every evaluated collision-free edge.
    pub fn enable_edge_log(&mut self) {
        self.edge_log.get_or_insert_with(Vec::new);
    }

    pub fn edge_log(&self) -> &[CandidateEdge] {
        self.edge_log.as_deref().unwrap_or(&[])
    }

    /// Number of rewire calls after which the total node cost had grown.
    pub fn rewire_increases(&self) -> usize {
        self.rewire_increases
    }

    fn dist(&self, from: &Pose, to: GoalPosition) -> f64 {
        distance(from, to, &self.clf, &self.params)
    }

    fn k_t(&self) -> f64 {
        self.params.weights.k_t
    }

    /// Lower bound on `k_t * T` for a path with at most `samples` samples.
    fn traversability_floor(&self, samples: Option<usize>) -> f64 {
        if self.min_cell >= 0.0 || self.k_t() == 0.0 {
            return 0.0;
        }
        match samples {
            Some(n) => self.k_t() * self.min_cell * n as f64,
            None => f64::NEG_INFINITY,
        }
    }

    fn evaluate(&self, path: &Trajectory) -> Option<Evaluated> {
        evaluate_path(&self.map, self.robot_z, &self.clf, &self.params, path)
    }

    /// Cost of steering `from` onto `to`, or `None` when unreachable.
    pub fn edge_cost(&self, from: &Pose, to: GoalPosition) -> Option<f64> {
        let path = self.steering.steer(*from, to).ok()?;
        self.evaluate(&path).map(|e| e.cost)
    }

    fn log_edge(&mut self, from: NodeId, to: NodeId, cost: f64) {
        if let Some(log) = self.edge_log.as_mut() {
            log.push(CandidateEdge { from, to, cost });
        }
    }

    pub fn sample(&mut self) -> Pose {
        let theta = self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        if self.rng.gen::<f64>() < self.params.goal_bias {
            return Pose::new(self.goal.x, self.goal.y, theta);
        }
        let sigma = self.params.gaussian_sampling_sigma;
        if sigma > 0.0 && self.rng.gen_bool(0.5) {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive");
            let root = self.nodes[0].pose;
            let t: f64 = self.rng.gen();
            let x = root.x + t * (self.goal.x - root.x) + normal.sample(&mut self.rng);
            let y = root.y + t * (self.goal.y - root.y) + normal.sample(&mut self.rng);
            if self.map.traversable_at(x, y) {
                return Pose::new(x, y, theta);
            }
        }
        let [x0, y0, x1, y1] = self.map.bounds();
        for _ in 0..10_000 {
            let x = self.rng.gen_range(x0..x1);
            let y = self.rng.gen_range(y0..y1);
            if self.map.traversable_at(x, y) {
                return Pose::new(x, y, theta);
            }
        }
        self.nodes[0].pose
    }

    fn attachable(&self, id: usize) -> bool {
        !(self.root_locked && id == 0)
    }

    /// Node minimizing `d(v, n) + k_t T` over its kappa-bounded extension
    /// toward `n`, together with that extension. Candidates are visited in
    /// order of a lower bound and at most `nearest_candidates` are evaluated.
    pub fn nearest(&self, n: &Pose) -> Option<(NodeId, Trajectory)> {
        let target = n.position();
        let res = self.map.resolution;
        let floor = self.traversability_floor(Some((self.params.kappa / res).ceil() as usize + 1));
        let cap = self.params.nearest_candidates;
        let center = self.grid.cell_of(n.x, n.y);
        let max_ring = self.grid.max_ring(center);
        let mut ids = Vec::new();
        let mut cand: Vec<(f64, usize)> = Vec::new();
        for k in 0..=max_ring {
            ids.clear();
            self.grid.collect_ring(center, k, &mut ids);
            for &id in &ids {
                if self.attachable(id) {
                    cand.push((self.dist(&self.nodes[id].pose, target) + floor, id));
                }
            }
            let reach = k as f64 * self.grid.cell;
            let unseen = 0.5 * reach * reach + floor;
            if cand.iter().filter(|c| c.0 <= unseen).count() >= cap {
                break;
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best: Option<(f64, usize, Trajectory)> = None;
        for &(lb, id) in cand.iter().take(cap) {
            if best.as_ref().is_some_and(|b| lb >= b.0) {
                break;
            }
            let Ok(path) = self.steering.extend(self.nodes[id].pose, target, self.params.kappa) else {
                continue;
            };
            let Some(e) = self.evaluate(&path) else {
                continue;
            };
            let c = self.dist(&self.nodes[id].pose, target) + self.k_t() * e.traversability;
            if best.as_ref().map_or(true, |b| c < b.0) {
                best = Some((c, id, path));
            }
        }
        best.map(|(_, id, path)| (NodeId(id), path))
    }

    fn near(&self, n: &Pose, t_n: f64, radius: f64, to_n: bool) -> Vec<usize> {
        let mut ids = Vec::new();
        self.grid.collect_box(n.x, n.y, (2.0 * radius).sqrt(), &mut ids);
        ids.sort_unstable();
        ids.retain(|&id| {
            let v = &self.nodes[id];
            let d = if to_n {
                self.dist(&v.pose, n.position())
            } else {
                self.dist(n, v.pose.position())
            };
            d <= radius && (v.root_traversability - t_n).abs() <= self.params.t_k
        });
        ids
    }

    /// Nodes that reach `n` cheaply: `d(v, n) <= L` and a similar root traversability.
    pub fn near_to(&self, n: &Pose, t_n: f64) -> Vec<NodeId> {
        let r = self.params.near_radius(self.nodes.len());
        self.near(n, t_n, r, true).into_iter().map(NodeId).collect()
    }

    /// Nodes that `n` reaches cheaply: `d(n, v) <= L` and a similar root traversability.
    pub fn near_from(&self, n: &Pose, t_n: f64) -> Vec<NodeId> {
        let r = self.params.near_radius(self.nodes.len());
        self.near(n, t_n, r, false).into_iter().map(NodeId).collect()
    }

    fn branch_traversability(&self, mut id: usize) -> f64 {
        let mut t = 0.0;
        while let Some(p) = self.nodes[id].parent {
            t += self.nodes[id].edge_traversability;
            id = p.0;
        }
        t
    }

    /// Traversability of the direct CLF path from the root; when that path
    /// is blocked, the given fallback (a tree path value) is used.
    fn root_traversability(&self, pose: &Pose, fallback: f64) -> f64 {
        if self.zero_field {
            return 0.0;
        }
        self.steering
            .steer(self.nodes[0].pose, pose.position())
            .ok()
            .and_then(|p| self.evaluate(&p))
            .map_or(fallback, |e| e.traversability)
    }

    fn is_ancestor(&self, a: usize, mut of: usize) -> bool {
        loop {
            if of == a {
                return true;
            }
            match self.nodes[of].parent {
                Some(p) => of = p.0,
                None => return false,
            }
        }
    }

    fn push_node(&mut self, pose: Pose, parent: usize, edge: Evaluated, root_t: f64) -> usize {
        let id = self.nodes.len();
        let cost = self.nodes[parent].cost + edge.cost;
        self.nodes.push(Node {
            pose,
            parent: Some(NodeId(parent)),
            cost,
            edge_cost: edge.cost,
            edge_traversability: edge.traversability,
            children: BTreeSet::new(),
            root_traversability: root_t,
        });
        self.nodes[parent].children.insert(NodeId(id));
        self.grid.insert(id, pose.x, pose.y);
        id
    }

    fn propagate(&mut self, from: usize) {
        let mut stack = vec![from];
        while let Some(id) = stack.pop() {
            let base = self.nodes[id].cost;
            let children: Vec<NodeId> = self.nodes[id].children.iter().copied().collect();
            for c in children {
                let child = &mut self.nodes[c.0];
                child.cost = base + child.edge_cost;
                stack.push(c.0);
            }
        }
    }

    fn choose_parent(&mut self, near_to: &[NodeId], nearest: NodeId, new: &Pose) -> Option<(usize, Evaluated)> {
        let mut cands: Vec<usize> = near_to.iter().map(|n| n.0).chain([nearest.0]).collect();
        cands.sort_unstable();
        cands.dedup();
        let floor = self.traversability_floor(None);
        let mut best: Option<(f64, usize, Evaluated)> = None;
        for id in cands {
            if !self.attachable(id) {
                continue;
            }
            let v = self.nodes[id].pose;
            let base = self.nodes[id].cost;
            if let Some(b) = &best {
                if base + self.dist(&v, new.position()) + floor >= b.0 {
                    continue;
                }
            }
            let Ok(path) = self.steering.steer(v, new.position()) else {
                continue;
            };
            let Some(e) = self.evaluate(&path) else {
                continue;
            };
            self.log_edge(NodeId(id), NodeId(self.nodes.len()), e.cost);
            let total = base + e.cost;
            if best.as_ref().map_or(true, |b| total < b.0) {
                best = Some((total, id, e));
            }
        }
        best.map(|(_, id, e)| (id, e))
    }

    fn rewire(&mut self, near_from: &[NodeId], parent: usize, new: usize) {
        let before: f64 = if self.edge_log.is_some() {
            self.nodes.iter().map(|n| n.cost).sum()
        } else {
            0.0
        };
        let floor = self.traversability_floor(None);
        let new_pose = self.nodes[new].pose;
        for &NodeId(v) in near_from {
            if v == parent || v == new || v == 0 || self.is_ancestor(v, new) {
                continue;
            }
            let target = self.nodes[v].pose.position();
            let base = self.nodes[new].cost;
            if base + self.dist(&new_pose, target) + floor >= self.nodes[v].cost {
                continue;
            }
            let Ok(path) = self.steering.steer(new_pose, target) else {
                continue;
            };
            let Some(e) = self.evaluate(&path) else {
                continue;
            };
            self.log_edge(NodeId(new), NodeId(v), e.cost);
            if base + e.cost < self.nodes[v].cost {
                let old = self.nodes[v].parent.expect("non-root node has a parent");
                self.nodes[old.0].children.remove(&NodeId(v));
                self.nodes[new].children.insert(NodeId(v));
                let node = &mut self.nodes[v];
                node.parent = Some(NodeId(new));
                node.edge_cost = e.cost;
                node.edge_traversability = e.traversability;
                node.cost = base + e.cost;
                self.propagate(v);
            }
        }
        if self.edge_log.is_some() {
            let after: f64 = self.nodes.iter().map(|n| n.cost).sum();
            if after > before {
                self.rewire_increases += 1;
            }
        }
    }

    /// One sample-extend-connect-rewire iteration. Returns the inserted node.
    pub fn step(&mut self) -> Option<NodeId> {
        self.iterations += 1;
        let rand = self.sample();
        let (nearest, ext) = self.nearest(&rand)?;
        let new_pose = ext.end();
        let ext_eval = self.evaluate(&ext)?;
        let fallback = self.branch_traversability(nearest.0) + ext_eval.traversability;
        let t_new = self.root_traversability(&new_pose, fallback);
        let near_to = self.near_to(&new_pose, t_new);
        let near_from = self.near_from(&new_pose, t_new);
        let (parent, edge) = self.choose_parent(&near_to, nearest, &new_pose)?;
        let new = self.push_node(new_pose, parent, edge, t_new);
        self.rewire(&near_from, parent, new);
        Some(NodeId(new))
    }

    pub fn grow(&mut self, iterations: usize) {
        for _ in 0..iterations {
            self.step();
        }
    }

    /// Cheapest node inside the goal region; ties go to the lowest id.
    pub fn best_goal_node(&self) -> Option<NodeId> {
        let mut best: Option<usize> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.pose.distance_to(self.goal) <= self.params.goal_radius
                && best.map_or(true, |b| n.cost < self.nodes[b].cost)
            {
                best = Some(i);
            }
        }
        best.map(NodeId)
    }

    pub fn best_cost(&self) -> Option<f64> {
        self.best_goal_node().map(|id| self.nodes[id.0].cost)
    }

    pub fn branch(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id.0;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p.0;
        }
        out.reverse();
        out
    }

    /// Best goal-reaching branch, closed with a steered leg onto the goal;
    /// otherwise the branch ending closest to the goal.
    pub fn snapshot(&self, epoch: u64) -> Result<PathSnapshot, PlanError> {
        let root = self.nodes[0].pose;
        let root_cell = self.map.cell_of(root.x, root.y);
        if self.nodes.iter().all(|n| self.map.cell_of(n.pose.x, n.pose.y) == root_cell) {
            return Err(PlanError::Stuck);
        }
        let (end, reaches_goal) = match self.best_goal_node() {
            Some(id) => (id, true),
            None => {
                let mut best = 0;
                for (i, n) in self.nodes.iter().enumerate() {
                    if n.pose.distance_to(self.goal) < self.nodes[best].pose.distance_to(self.goal) {
                        best = i;
                    }
                }
                if best == 0 {
                    return Err(PlanError::NoProgress);
                }
                (NodeId(best), false)
            }
        };
        let mut wayposes: Vec<Pose> = self.branch(end).iter().skip(1).map(|id| self.nodes[id.0].pose).collect();
        let mut cost = self.nodes[end.0].cost;
        if reaches_goal {
            let last = self.nodes[end.0].pose;
            if last.distance_to(self.goal) > 1e-6 {
                if let Some((path, e)) = self
                    .steering
                    .steer(last, self.goal)
                    .ok()
                    .and_then(|p| self.evaluate(&p).map(|e| (p, e)))
                {
                    wayposes.push(path.end());
                    cost += e.cost;
                }
            }
        }
        if wayposes.is_empty() {
            return Err(PlanError::NoProgress);
        }
        Ok(PathSnapshot {
            root,
            wayposes,
            active_index: 0,
            epoch,
            cost,
            reaches_goal,
        })
    }

    /// Drops interior way-poses wherever a direct steered edge is free and the
    /// executed path gets no worse, measured as arc length plus weighted
    /// traversability. The CLF metric rewards splitting edges, so optimal
    /// branches are dense; this thins them for tracking. Kept way-poses take
    /// the heading the new edge arrives with and a locked root keeps its
    /// first way-pose. The returned cost is in the planner metric.
    pub fn shortcut(&self, snap: &PathSnapshot) -> PathSnapshot {
        let mut pts = vec![snap.root];
        pts.extend_from_slice(&snap.wayposes);
        let last = pts.len() - 1;
        let k_t = self.params.weights.k_t;
        // (arrival pose, executed measure, planner cost)
        let edge = |from: &Pose, to: &Pose| {
            let path = self.steering.steer(*from, to.position()).ok()?;
            let e = self.evaluate(&path)?;
            Some((path.end(), path.length + k_t * e.traversability, e.cost))
        };
        let mut out = Vec::with_capacity(last);
        let mut cost = 0.0;
        let mut a = 0;
        let mut anchor = snap.root;
        if self.root_locked && last > 0 {
            let Some((_, _, c)) = edge(&anchor, &pts[1]) else {
                return snap.clone();
            };
            cost += c;
            a = 1;
            anchor = pts[1];
            out.push(anchor);
        }
        // cost of following every remaining position from pose `q` at index `i`
        let rest = |mut q: Pose, i: usize| {
            let mut acc = 0.0;
            for p in &pts[i + 1..] {
                let (end, m, _) = edge(&q, p)?;
                acc += m;
                q = end;
            }
            Some(acc)
        };
        while a < last {
            let Some(current) = rest(anchor, a) else {
                return snap.clone();
            };
            let mut pick = None;
            for j in (a + 2..=last).rev() {
                let Some((end, m, c)) = edge(&anchor, &pts[j]) else {
                    continue;
                };
                if rest(end, j).is_some_and(|r| m + r <= current) {
                    pick = Some((j, end, c));
                    break;
                }
            }
            let (j, end, c) = match pick {
                Some(p) => p,
                None => {
                    let (end, _, c) = edge(&anchor, &pts[a + 1]).expect("remainder was feasible");
                    (a + 1, end, c)
                }
            };
            cost += c;
            out.push(end);
            anchor = end;
            a = j;
        }
        PathSnapshot {
            root: snap.root,
            wayposes: out,
            active_index: 0,
            epoch: snap.epoch,
            cost,
            reaches_goal: snap.reaches_goal,
        }
    }

    /// Rebuilds the tree at `new_root` from the unreached part of `previous`.
    /// The first unreached way-pose is kept verbatim and the root may not gain
    /// further children. If any retained edge is blocked on `map`, a fresh
    /// tree is returned instead.
    pub fn warm_start(
        self,
        previous: &PathSnapshot,
        new_root: Pose,
        map: Arc<LayeredGridMap>,
        goal: GoalPosition,
    ) -> Result<WarmStart, PlanError> {
        if previous.is_empty() {
            return Err(PlanError::EmptyPrevious);
        }
        let logging = self.edge_log.is_some();
        let fresh = Self::with_rng(new_root, goal, map, self.clf, self.params, self.rng)?;
        let rng = fresh.rng.clone();
        let mut tree = fresh;
        let mut prev = 0;
        for w in previous.remaining() {
            let from = tree.nodes[prev].pose;
            if from.distance_to(w.position()) <= 1e-9 {
                continue;
            }
            let edge = tree
                .steering
                .steer(from, w.position())
                .ok()
                .and_then(|p| tree.evaluate(&p));
            let Some(edge) = edge else {
                let mut fresh = Self::with_rng(new_root, goal, tree.map.clone(), tree.clf, tree.params, rng)?;
                if logging {
                    fresh.enable_edge_log();
                }
                return Ok(WarmStart {
                    tree: fresh,
                    reused: false,
                });
            };
            let fallback = tree.branch_traversability(prev) + edge.traversability;
            let t = tree.root_traversability(w, fallback);
            prev = tree.push_node(*w, prev, edge, t);
        }
        tree.root_locked = tree.nodes.len() > 1;
        if logging {
            tree.enable_edge_log();
        }
        Ok(WarmStart { tree, reused: true })
    }

    /// Structural check: acyclic, every node reachable, cost recursion exact,
    /// parent and child links consistent.
    pub fn check_consistency(&self) -> Result<(), String> {
        let root = &self.nodes[0];
        if root.parent.is_some() || root.cost != 0.0 {
            return Err("root must have no parent and zero cost".into());
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            let p = n.parent.ok_or(format!("node {i} has no parent"))?;
            if !self.nodes[p.0].children.contains(&NodeId(i)) {
                return Err(format!("node {i} missing from children of {}", p.0));
            }
            if n.cost != self.nodes[p.0].cost + n.edge_cost {
                return Err(format!("cost recursion broken at node {i}"));
            }
            let mut cur = i;
            let mut hops = 0;
            while let Some(q) = self.nodes[cur].parent {
                cur = q.0;
                hops += 1;
                if hops > self.nodes.len() {
                    return Err(format!("cycle through node {i}"));
                }
            }
            if cur != 0 {
                return Err(format!("node {i} not reachable from root"));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for c in &n.children {
                if self.nodes[c.0].parent != Some(NodeId(i)) {
                    return Err(format!("child {} of {i} points elsewhere", c.0));
                }
            }
        }
        Ok(())
    }

    /// One JSON object per node: id, pose, parent and cost.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            let rec = NodeRecord {
                id: i,
                x: n.pose.x,
                y: n.pose.y,
                theta: n.pose.theta,
                parent: n.parent.map(|p| p.0),
                cost: n.cost,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Grows a fresh tree for the full iteration budget and returns its snapshot.
pub fn plan(
    root: Pose,
    goal: GoalPosition,
    map: Arc<LayeredGridMap>,
    clf: ClfParams,
    params: PlannerParams,
    seed: u64,
) -> Result<(PathSnapshot, Tree), PlanError> {
    let budget = params.max_iterations;
    let mut tree = Tree::new(root, goal, map, clf, params, seed)?;
    tree.grow(budget);
    let snap = tree.snapshot(0)?;
    Ok((snap, tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    fn flat(side: f64) -> Arc<LayeredGridMap> {
        Arc::new(LayeredGridMap::with_extent(0.0, 0.0, side, side, 0.1).unwrap())
    }

    fn tree(map: Arc<LayeredGridMap>, root: Pose, goal: GoalPosition, seed: u64) -> Tree {
        Tree::new(root, goal, map, ClfParams::default(), PlannerParams::default(), seed).unwrap()
    }

    #[test]
    fn root_in_collision_is_an_error() {
        let mut m = LayeredGridMap::with_extent(0.0, 0.0, 5.0, 5.0, 0.1).unwrap();
        let i = m.index(m.cell_of(1.0, 1.0)).unwrap();
        m.obstacle[i] = true;
        let r = Tree::new(
            Pose::new(1.0, 1.0, 0.0),
            GoalPosition::new(4.0, 4.0),
            Arc::new(m),
            ClfParams::default(),
            PlannerParams::default(),
            0,
        );
        assert!(matches!(r, Err(PlanError::RootInCollision(..))));
    }

    #[test]
    fn sampling_respects_goal_bias_and_obstacles() {
        let mut m = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
        for i in 0..m.len() {
            if m.cell_center(m.cell_of_index(i))[0] > 5.0 {
                m.obstacle[i] = true;
            }
        }
        let m = Arc::new(m);
        let goal = GoalPosition::new(2.0, 8.0);
        let mut all_goal = Tree::new(
            Pose::new(1.0, 1.0, 0.0),
            goal,
            m.clone(),
            ClfParams::default(),
            PlannerParams {
                goal_bias: 1.0,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        for _ in 0..100 {
            let s = all_goal.sample();
            assert_eq!(s.position(), goal);
            assert!(s.theta > -std::f64::consts::PI && s.theta <= std::f64::consts::PI);
        }
        let params = PlannerParams {
            goal_bias: 0.0,
            ..Default::default()
        };
        let mut t = Tree::new(Pose::new(1.0, 1.0, 0.0), goal, m.clone(), ClfParams::default(), params.clone(), 3).unwrap();
        let mut again = Tree::new(Pose::new(1.0, 1.0, 0.0), goal, m.clone(), ClfParams::default(), params, 3).unwrap();
        for _ in 0..10_000 {
            let s = t.sample();
            assert!(m.traversable_at(s.x, s.y));
            assert_eq!(s, again.sample());
        }
    }

    #[test]
    fn nearest_single_node_and_ties() {
        let m = flat(10.0);
        let mut t = tree(m, Pose::new(5.0, 5.0, 0.0), GoalPosition::new(9.0, 9.0), 0);
        assert_eq!(t.nearest(&Pose::new(8.0, 5.0, 0.0)).unwrap().0, NodeId(0));
        // two nodes mirrored about the query, same heading relative to it
        let e = Evaluated {
            traversability: 0.0,
            cost: 1.0,
        };
        let a = t.push_node(Pose::new(3.0, 2.0, 0.0), 0, e, 0.0);
        let e = Evaluated {
            traversability: 0.0,
            cost: 1.0,
        };
        let b = t.push_node(Pose::new(7.0, 2.0, std::f64::consts::PI), 0, e, 0.0);
        let q = Pose::new(5.0, 2.0, 0.0);
        let da = t.dist(&t.nodes[a].pose, q.position());
        let db = t.dist(&t.nodes[b].pose, q.position());
        assert!((da - db).abs() < 1e-12);
        assert_eq!(t.nearest(&q).unwrap().0, NodeId(a.min(b)));
    }

    #[test]
    fn nearest_prefers_flat_path_over_ridge() {
        let mut m = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
        for i in 0..m.len() {
            let [x, y] = m.cell_center(m.cell_of_index(i));
            if (4.0..=6.0).contains(&x) && y < 5.0 {
                m.elevation[i] = 0.5;
            }
        }
        let m = Arc::new(m);
        let params = PlannerParams {
            weights: crate::localmap::TraversabilityWeights {
                k_t: 10.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut t = Tree::new(Pose::new(1.0, 9.0, 0.0), GoalPosition::new(9.0, 9.0), m, ClfParams::default(), params, 0).unwrap();
        let near_ridge = t.push_node(Pose::new(4.0, 2.0, 0.0), 0, Evaluated { traversability: 0.0, cost: 1.0 }, 0.0);
        let far_flat = t.push_node(Pose::new(7.0, 6.5, -std::f64::consts::FRAC_PI_2), 0, Evaluated { traversability: 0.0, cost: 1.0 }, 0.0);
        let q = Pose::new(7.0, 2.0, 0.0);
        // oracle: distance plus weighted traversability of each extension
        let oracle = |id: usize| {
            let path = t.steering.extend(t.nodes[id].pose, q.position(), t.params.kappa).unwrap();
            let e = t.evaluate(&path).unwrap();
            t.dist(&t.nodes[id].pose, q.position()) + 10.0 * e.traversability
        };
        let (cr, cf) = (oracle(near_ridge), oracle(far_flat));
        assert!(t.dist(&t.nodes[near_ridge].pose, q.position()) < t.dist(&t.nodes[far_flat].pose, q.position()));
        assert!(cf < cr, "{cf} {cr}");
        assert_eq!(t.nearest(&q).unwrap().0, NodeId(far_flat));
    }

    #[test]
    fn edge_cost_ridge_exceeds_valley() {
        let ridge = |up: bool| {
            let mut m = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 4.0, 0.1).unwrap();
            for i in 0..m.len() {
                let x = m.cell_center(m.cell_of_index(i))[0];
                m.elevation[i] = if up { 0.3 } else { -0.3 } * (-(x - 5.0).powi(2)).exp();
            }
            Arc::new(crate::localmap::slope_layer(&m))
        };
        let c = |map| {
            tree(map, Pose::new(1.0, 2.0, 0.0), GoalPosition::new(9.0, 2.0), 0)
                .edge_cost(&Pose::new(1.0, 2.0, 0.0), GoalPosition::new(9.0, 2.0))
                .unwrap()
        };
        assert!(c(ridge(true)) > c(ridge(false)));
        let flat_t = tree(flat(10.0), Pose::new(1.0, 2.0, 0.0), GoalPosition::new(9.0, 2.0), 0);
        let d = flat_t.edge_cost(&Pose::new(1.0, 2.0, 0.3), GoalPosition::new(9.0, 2.0)).unwrap();
        let expected = distance(&Pose::new(1.0, 2.0, 0.3), GoalPosition::new(9.0, 2.0), &ClfParams::default(), &PlannerParams::default());
        assert_eq!(d, expected);
    }

    #[test]
    fn near_sets_match_on_aligned_collinear_poses() {
        let mut t = tree(flat(20.0), Pose::new(2.0, 10.0, 0.0), GoalPosition::new(18.0, 10.0), 0);
        let mut prev = 0;
        for k in 1..6 {
            let e = Evaluated {
                traversability: 0.0,
                cost: 0.5,
            };
            prev = t.push_node(Pose::new(2.0 + k as f64, 10.0, 0.0), prev, e, 0.0);
        }
        // nodes sit symmetrically about n, all facing +x
        let n = Pose::new(4.5, 10.0, 0.0);
        let to = t.near_to(&n, 0.0);
        let from = t.near_from(&n, 0.0);
        assert_eq!(to.len(), 6);
        assert_eq!(to, from);
        // an inserted-later far node is excluded by the radius
        let r = t.params.near_radius(t.len());
        assert!(t.dist(&t.nodes[0].pose, n.position()) <= r);
    }

    #[test]
    fn collinear_chain_parents_in_order() {
        let mut t = tree(flat(20.0), Pose::new(1.0, 10.0, 0.0), GoalPosition::new(19.0, 10.0), 0);
        for x in [2.5, 4.0, 5.5] {
            let p = Pose::new(x, 10.0, 0.0);
            let near = t.near_to(&p, 0.0);
            let nearest = t.nearest(&p).unwrap().0;
            let (parent, e) = t.choose_parent(&near, nearest, &p).unwrap();
            t.push_node(p, parent, e, 0.0);
        }
        assert_eq!(t.nodes[1].parent, Some(NodeId(0)));
        assert_eq!(t.nodes[2].parent, Some(NodeId(1)));
        assert_eq!(t.nodes[3].parent, Some(NodeId(2)));
    }

    #[test]
    fn grown_tree_is_consistent_and_rewiring_never_raises_cost() {
        let mut t = tree(flat(20.0), Pose::new(2.0, 10.0, 0.0), GoalPosition::new(18.0, 10.0), 11);
        t.enable_edge_log();
        for _ in 0..10 {
            t.grow(50);
            t.check_consistency().unwrap();
        }
        assert_eq!(t.rewire_increases(), 0);
    }

    #[test]
    fn costs_dominate_dijkstra_over_candidate_edges() {
        let mut m = LayeredGridMap::with_extent(0.0, 0.0, 12.0, 12.0, 0.1).unwrap();
        for i in 0..m.len() {
            let [x, y] = m.cell_center(m.cell_of_index(i));
            m.elevation[i] = 0.3 + 0.2 * (x * 0.7).sin() * (y * 0.5).cos();
        }
        let m = Arc::new(crate::localmap::slope_layer(&m));
        // non-negative edge costs keep the oracle a plain Dijkstra
        let params = PlannerParams {
            weights: crate::localmap::TraversabilityWeights {
                k_r: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut t = Tree::new(Pose::new(1.0, 1.0, 0.5), GoalPosition::new(11.0, 11.0), m, ClfParams::default(), params, 5).unwrap();
        t.enable_edge_log();
        while t.len() < 200 {
            t.step();
        }
        t.check_consistency().unwrap();
        let n = t.len();
        // the log may also hold edges toward nodes never inserted; drop those
        let edges: Vec<CandidateEdge> = t.edge_log().iter().copied().filter(|e| e.to.0 < n).collect();
        let dijkstra = |edges: &[(usize, usize, f64)]| {
            let mut adj = vec![Vec::new(); n];
            for &(a, b, c) in edges {
                adj[a].push((b, c));
            }
            let mut dist = vec![f64::INFINITY; n];
            dist[0] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push((std::cmp::Reverse(0u64), 0usize));
            while let Some((std::cmp::Reverse(k), u)) = heap.pop() {
                if f64::from_bits(k) > dist[u] {
                    continue;
                }
                for &(v, c) in &adj[u] {
                    let nd = dist[u] + c;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push((std::cmp::Reverse(nd.to_bits()), v));
                    }
                }
            }
            dist
        };
        let all: Vec<_> = edges.iter().map(|e| (e.from.0, e.to.0, e.cost)).collect();
        let best = dijkstra(&all);
        let tree_edges: Vec<_> = (1..n)
            .map(|i| (t.nodes[i].parent.unwrap().0, i, t.nodes[i].edge_cost))
            .collect();
        let along_tree = dijkstra(&tree_edges);
        for i in 0..n {
            assert!(t.nodes[i].cost >= best[i] - 1e-9, "node {i}");
            assert!((t.nodes[i].cost - along_tree[i]).abs() <= 1e-9 * (1.0 + along_tree[i]));
        }
    }

    #[test]
    fn plan_reaches_goal_and_is_deterministic() {
        let run = || {
            let (s, t) = plan(
                Pose::new(2.0, 2.0, 0.0),
                GoalPosition::new(8.0, 7.0),
                flat(10.0),
                ClfParams::default(),
                PlannerParams {
                    max_iterations: 400,
                    ..Default::default()
                },
                42,
            )
            .unwrap();
            let mut dump = Vec::new();
            t.write_json_lines(&mut dump).unwrap();
            (s, dump)
        };
        let (a, da) = run();
        let (b, db) = run();
        assert!(a.reaches_goal);
        assert_eq!(a.wayposes.last().unwrap().position(), GoalPosition::new(8.0, 7.0));
        assert_eq!(a, b);
        assert_eq!(da, db);
        let first = String::from_utf8(da).unwrap();
        let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert_eq!(rec["parent"], serde_json::Value::Null);
    }

    #[test]
    fn stuck_when_boxed_in() {
        let mut m = LayeredGridMap::with_extent(0.0, 0.0, 5.0, 5.0, 0.1).unwrap();
        let c = m.cell_of(2.5, 2.5);
        for i in 0..m.len() {
            if m.cell_of_index(i) != c {
                m.obstacle[i] = true;
            }
        }
        let r = plan(
            Pose::new(2.5, 2.5, 0.0),
            GoalPosition::new(4.0, 4.0),
            Arc::new(m),
            ClfParams::default(),
            PlannerParams {
                max_iterations: 50,
                ..Default::default()
            },
            1,
        );
        assert!(matches!(r, Err(PlanError::Stuck)));
    }

    #[test]
    fn warm_start_preserves_active_waypose() {
        let map = flat(20.0);
        let goal = GoalPosition::new(17.0, 12.0);
        let mut t = tree(map.clone(), Pose::new(2.0, 3.0, 0.0), goal, 9);
        t.grow(600);
        let snap = t.snapshot(0).unwrap();
        let robot = Pose::new(2.3, 3.1, 0.05);
        let ws = t.warm_start(&snap, robot, map, goal).unwrap();
        assert!(ws.reused);
        let next = ws.tree.snapshot(1).unwrap();
        assert_eq!(next.wayposes[0], snap.wayposes[0]);
        assert_eq!(next.wayposes.len(), snap.wayposes.len());
        ws.tree.check_consistency().unwrap();
    }

    #[test]
    fn warm_start_discards_blocked_branch() {
        let map = flat(20.0);
        let goal = GoalPosition::new(17.0, 12.0);
        let mut t = tree(map.clone(), Pose::new(2.0, 3.0, 0.0), goal, 9);
        t.grow(600);
        let snap = t.snapshot(0).unwrap();
        let mut blocked = (*map).clone();
        let mid = snap.wayposes[0];
        let root = snap.root;
        for i in 0..blocked.len() {
            let [x, y] = blocked.cell_center(blocked.cell_of_index(i));
            let (mx, my) = ((root.x + mid.x) / 2.0, (root.y + mid.y) / 2.0);
            if (x - mx).hypot(y - my) < 0.3 {
                blocked.obstacle[i] = true;
            }
        }
        let ws = t.warm_start(&snap, root, Arc::new(blocked), goal).unwrap();
        assert!(!ws.reused);
        assert_eq!(ws.tree.len(), 1);
    }

    #[test]
    fn static_replans_never_raise_cost() {
        let map = flat(20.0);
        let goal = GoalPosition::new(17.0, 14.0);
        let root = Pose::new(3.0, 4.0, 0.0);
        let mut t = tree(map.clone(), root, goal, 21);
        t.grow(300);
        let mut snap = t.snapshot(0).unwrap();
        let mut costs = vec![snap.cost];
        for epoch in 1..10 {
            let ws = t.warm_start(&snap, root, map.clone(), goal).unwrap();
            assert!(ws.reused);
            t = ws.tree;
            t.grow(150);
            snap = t.snapshot(epoch).unwrap();
            costs.push(snap.cost);
        }
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{costs:?}");
        }
    }

    #[test]
    fn shortcut_thins_the_path_without_raising_cost() {
        let map = flat(20.0);
        let goal = GoalPosition::new(17.0, 12.0);
        let mut t = tree(map.clone(), Pose::new(2.0, 3.0, 0.0), goal, 4);
        t.grow(400);
        let snap = t.snapshot(0).unwrap();
        let short = t.shortcut(&snap);
        assert!(short.wayposes.len() < snap.wayposes.len());
        // rewired nodes keep their headings, so the reference is the length
        // of steering through the original positions
        let length = |root: Pose, ws: &[Pose]| {
            let mut q = root;
            let mut total = 0.0;
            for w in ws {
                let path = t.steering.steer(q, w.position()).unwrap();
                total += path.length;
                q = path.end();
            }
            total
        };
        let before = length(snap.root, &snap.wayposes);
        let after = length(short.root, &short.wayposes);
        assert!(after <= before + 1e-9, "{after} > {before}");
        assert_eq!(short.wayposes.last().unwrap().position(), snap.wayposes.last().unwrap().position());
        let mut from = short.root;
        let mut total = 0.0;
        for w in &short.wayposes {
            let path = t.steering.steer(from, w.position()).unwrap();
            assert_eq!(path.end(), *w);
            total += t.evaluate(&path).unwrap().cost;
            from = *w;
        }
        assert!((total - short.cost).abs() < 1e-9);

        let ws = t.warm_start(&short, Pose::new(2.1, 3.0, 0.0), map, goal).unwrap();
        assert!(ws.reused);
        let mut next = ws.tree;
        next.grow(100);
        let again = next.shortcut(&next.snapshot(1).unwrap());
        assert_eq!(again.wayposes[0], short.wayposes[0]);
    }
}
