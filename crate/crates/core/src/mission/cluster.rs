use crate::geometry::{wrap, Pose};
use crate::localmap::LayeredGridMap;

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Cells of one ring component and the bearing of their centroid relative
/// to the robot heading.
#[derive(Debug, Clone, PartialEq)]
pub struct RingCluster {
    pub cells: Vec<usize>,
    pub bearing: f64,
}

/// Traversable cells whose centers lie in the annulus `[inner, outer]` around the robot.
pub fn ring_cells(map: &LayeredGridMap, robot: &Pose, inner: f64, outer: f64) -> Vec<usize> {
    let c = map.cell_of(robot.x, robot.y);
    let k = (outer / map.resolution).ceil() as i64 + 1;
    let mut out = Vec::new();
    for iy in c.1 - k..=c.1 + k {
        for ix in c.0 - k..=c.0 + k {
            let Some(i) = map.index((ix, iy)) else { continue };
            if !map.traversable_index(i) {
                continue;
            }
            let [x, y] = map.cell_center((ix, iy));
            let r = (x - robot.x).hypot(y - robot.y);
            if r >= inner && r <= outer {
                out.push(i);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Single-linkage agglomerative clustering cut at `threshold`: two cells share
/// a cluster when a chain of cells with center spacing `<= threshold`
/// connects them. Clusters are returned sorted by bearing.
pub fn single_linkage(map: &LayeredGridMap, robot: &Pose, cells: &[usize], threshold: f64) -> Vec<RingCluster> {
    let pos: Vec<[f64; 2]> = cells.iter().map(|&i| map.cell_center(map.cell_of_index(i))).collect();
    let mut uf = UnionFind::new(cells.len());
    let t2 = threshold * threshold + 1e-12;
    let reach = (threshold / map.resolution).floor() as i64;
    // neighbours within the threshold sit at most `reach` cells away
    let lookup: std::collections::HashMap<usize, usize> = cells.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    for (a, &i) in cells.iter().enumerate() {
        let (cx, cy) = map.cell_of_index(i);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let Some(j) = map.index((cx + dx, cy + dy)) else { continue };
                let Some(&b) = lookup.get(&j) else { continue };
                if b <= a {
                    continue;
                }
                let d2 = (pos[a][0] - pos[b][0]).powi(2) + (pos[a][1] - pos[b][1]).powi(2);
                if d2 <= t2 {
                    uf.union(a, b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for a in 0..cells.len() {
        let r = uf.find(a);
        groups.entry(r).or_default().push(a);
    }
    let mut out: Vec<RingCluster> = groups
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let cx = members.iter().map(|&k| pos[k][0]).sum::<f64>() / n;
            let cy = members.iter().map(|&k| pos[k][1]).sum::<f64>() / n;
            RingCluster {
                cells: members.iter().map(|&k| cells[k]).collect(),
                bearing: wrap((cy - robot.y).atan2(cx - robot.x) - robot.theta),
            }
        })
        .collect();
    out.sort_by(|a, b| a.bearing.total_cmp(&b.bearing));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(5);
        uf.union(0, 1);
        uf.union(3, 4);
        uf.union(1, 4);
        assert_eq!(uf.find(0), uf.find(3));
        assert_ne!(uf.find(2), uf.find(0));
    }
}
