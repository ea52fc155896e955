//! Layered grid maps: elevation, slope, obstacle and unknown layers, robot-centric
//! cropping, ray masking behind walls and the traversability cost of a path.

mod bresenham;
pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;

pub use bresenham::{bresenham_line, Cell};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("cell {0:?} is outside the {1}x{2} map")]
    OutOfBounds(Cell, usize, usize),
    #[error("map dimensions must be positive and resolution > 0")]
    BadDimensions,
    #[error("layer {0} has {1} cells, expected {2}")]
    LayerShape(String, usize, usize),
    #[error("crop side must be positive, got {0}")]
    BadSide(f64),
    #[error("map io: {0}")]
    Io(String),
}

/// Uniform grid with a fixed set of layers. `origin` is the world position of
/// the center of cell (0, 0); cells are stored row-major with `iy` as the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredGridMap {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub elevation: Vec<f64>,
    pub slope: Option<Vec<f64>>,
    pub obstacle: Vec<bool>,
    pub unknown: Vec<bool>,
}

impl LayeredGridMap {
    /// Flat, fully known, obstacle-free map.
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Result<Self, MapError> {
        if width == 0 || height == 0 || !(resolution > 0.0) {
            return Err(MapError::BadDimensions);
        }
        let n = width * height;
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            elevation: vec![0.0; n],
            slope: None,
            obstacle: vec![false; n],
            unknown: vec![false; n],
        })
    }

    /// Map whose cells cover `[x0, x0 + extent_x) x [y0, y0 + extent_y)`.
    pub fn with_extent(x0: f64, y0: f64, extent_x: f64, extent_y: f64, resolution: f64) -> Result<Self, MapError> {
        let w = (extent_x / resolution).round() as usize;
        let h = (extent_y / resolution).round() as usize;
        Self::new(w, h, resolution, [x0 + 0.5 * resolution, y0 + 0.5 * resolution])
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.width == 0 || self.height == 0 || !(self.resolution > 0.0) {
            return Err(MapError::BadDimensions);
        }
        let n = self.len();
        let check = |name: &str, len: usize| {
            if len != n {
                Err(MapError::LayerShape(name.to_string(), len, n))
            } else {
                Ok(())
            }
        };
        check("elevation", self.elevation.len())?;
        check("obstacle", self.obstacle.len())?;
        check("unknown", self.unknown.len())?;
        if let Some(s) = &self.slope {
            check("slope", s.len())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < self.width && (c.1 as usize) < self.height
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.in_bounds(c)
            .then(|| c.1 as usize * self.width + c.0 as usize)
    }

    pub fn cell_of_index(&self, i: usize) -> Cell {
        ((i % self.width) as i64, (i / self.width) as i64)
    }

    /// Nearest cell to a world point; may be out of bounds.
    pub fn cell_of(&self, x: f64, y: f64) -> Cell {
        (
            ((x - self.origin[0]) / self.resolution + 0.5).floor() as i64,
            ((y - self.origin[1]) / self.resolution + 0.5).floor() as i64,
        )
    }

    pub fn cell_center(&self, c: Cell) -> [f64; 2] {
        [
            self.origin[0] + c.0 as f64 * self.resolution,
            self.origin[1] + c.1 as f64 * self.resolution,
        ]
    }

    /// World-space bounds `(x_min, y_min, x_max, y_max)` of the covered area.
    pub fn bounds(&self) -> [f64; 4] {
        let h = 0.5 * self.resolution;
        [
            self.origin[0] - h,
            self.origin[1] - h,
            self.origin[0] + self.width as f64 * self.resolution - h,
            self.origin[1] + self.height as f64 * self.resolution - h,
        ]
    }

    pub fn elevation_at(&self, x: f64, y: f64) -> Option<f64> {
        self.index(self.cell_of(x, y)).map(|i| self.elevation[i])
    }

    pub fn slope_at_index(&self, i: usize) -> f64 {
        self.slope.as_ref().map_or(0.0, |s| s[i])
    }

    pub fn traversable_index(&self, i: usize) -> bool {
        !self.obstacle[i] && !self.unknown[i]
    }

    pub fn traversable_cell(&self, c: Cell) -> bool {
        self.index(c).is_some_and(|i| self.traversable_index(i))
    }

    pub fn traversable_at(&self, x: f64, y: f64) -> bool {
        self.traversable_cell(self.cell_of(x, y))
    }

    pub fn traversable_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.traversable_index(i)).count()
    }

    /// Marks every known cell whose elevation exceeds `z_ref + step_height` as an obstacle.
    pub fn mark_step_obstacles(&mut self, z_ref: f64, step_height: f64) {
        for i in 0..self.len() {
            if self.elevation[i] - z_ref > step_height {
                self.obstacle[i] = true;
            }
        }
    }

    /// Returns a copy whose obstacle and unknown cells are grown by `radius` meters.
    /// Cells outside the map count as blocked only through the unknown layer.
    pub fn inflated(&self, radius: f64) -> LayeredGridMap {
        let mut out = self.clone();
        if radius <= 0.0 {
            return out;
        }
        let k = (radius / self.resolution).ceil() as i64;
        let r2 = (radius / self.resolution).powi(2) + 1e-9;
        let offsets: Vec<Cell> = (-k..=k)
            .flat_map(|dx| (-k..=k).map(move |dy| (dx, dy)))
            .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2 && (dx, dy) != (0, 0))
            .collect();
        for i in 0..self.len() {
            if self.obstacle[i] || self.unknown[i] {
                let c = self.cell_of_index(i);
                for &(dx, dy) in &offsets {
                    if let Some(j) = self.index((c.0 + dx, c.1 + dy)) {
                        if self.obstacle[i] {
                            out.obstacle[j] = true;
                        } else if !out.obstacle[j] {
                            out.unknown[j] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Bresenham trace between two in-bounds cells.
    pub fn bresenham_trace(&self, a: Cell, b: Cell) -> Result<Vec<Cell>, MapError> {
        for c in [a, b] {
            if !self.in_bounds(c) {
                return Err(MapError::OutOfBounds(c, self.width, self.height));
            }
        }
        Ok(bresenham_line(a, b))
    }
}

/// Weights of the path traversability cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversabilityWeights {
    /// Slope weight.
    pub k_s: f64,
    /// Relative-height weight.
    pub k_r: f64,
    /// Weight of the traversability term in the edge cost.
    pub k_t: f64,
}

impl Default for TraversabilityWeights {
    fn default() -> Self {
        Self {
            k_s: 2.0,
            k_r: 1.0,
            k_t: 1.0,
        }
    }
}

/// Square sub-map of side `side` centered on the cell nearest to `center`.
/// Cells that fall outside `global` are unknown; a center outside the global
/// map yields an all-unknown map.
pub fn crop_local(global: &LayeredGridMap, center: &Pose, side: f64) -> Result<LayeredGridMap, MapError> {
    if !(side > 0.0) {
        return Err(MapError::BadSide(side));
    }
    let n = ((side / global.resolution).round() as usize).max(1);
    let c = global.cell_of(center.x, center.y);
    let start = (c.0 - (n / 2) as i64, c.1 - (n / 2) as i64);
    let mut local = LayeredGridMap::new(n, n, global.resolution, global.cell_center(start))?;
    let outside = !global.in_bounds(c);
    let slope = global.slope.as_ref().map(|_| vec![0.0; n * n]);
    local.slope = slope;
    for j in 0..n {
        for i in 0..n {
            let li = j * n + i;
            let g = (start.0 + i as i64, start.1 + j as i64);
            match global.index(g) {
                Some(gi) if !outside => {
                    local.elevation[li] = global.elevation[gi];
                    local.obstacle[li] = global.obstacle[gi];
                    local.unknown[li] = global.unknown[gi];
                    if let (Some(ls), Some(gs)) = (local.slope.as_mut(), global.slope.as_ref()) {
                        ls[li] = gs[gi];
                    }
                }
                _ => local.unknown[li] = true,
            }
        }
    }
    Ok(local)
}

/// Fills the slope layer with the magnitude of the elevation gradient
/// (central differences, one-sided at the borders).
pub fn slope_layer(map: &LayeredGridMap) -> LayeredGridMap {
    let (w, h) = (map.width, map.height);
    let e = |i: usize, j: usize| map.elevation[j * w + i];
    let d = |lo: f64, hi: f64, span: usize| (hi - lo) / (span as f64 * map.resolution);
    let mut slope = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let gx = if w < 2 {
                0.0
            } else if i == 0 {
                d(e(0, j), e(1, j), 1)
            } else if i == w - 1 {
                d(e(w - 2, j), e(w - 1, j), 1)
            } else {
                d(e(i - 1, j), e(i + 1, j), 2)
            };
            let gy = if h < 2 {
                0.0
            } else if j == 0 {
                d(e(i, 0), e(i, 1), 1)
            } else if j == h - 1 {
                d(e(i, h - 2), e(i, h - 1), 1)
            } else {
                d(e(i, j - 1), e(i, j + 1), 2)
            };
            slope[j * w + i] = gx.hypot(gy);
        }
    }
    let mut out = map.clone();
    out.slope = Some(slope);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskOptions {
    /// Cells rising more than this above `z_ref` stop rays even when they are
    /// not obstacles (low frames such as the rail under a glass pane).
    pub occluder_height: Option<f64>,
    pub z_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutcome {
    pub map: LayeredGridMap,
    pub robot_in_collision: bool,
    /// Indices of cells newly marked unknown.
    pub masked: Vec<usize>,
}

/// Traces a Bresenham ray from the robot cell to every cell of the map (the
/// boundary cells included) and marks the cell unknown when an obstacle lies
/// on the ray before it.
pub fn mask_beyond_walls(map: &LayeredGridMap, robot: &Pose) -> MaskOutcome {
    mask_beyond_occluders(map, robot, &MaskOptions::default())
}

pub fn mask_beyond_occluders(map: &LayeredGridMap, robot: &Pose, opts: &MaskOptions) -> MaskOutcome {
    let occludes = |i: usize| {
        map.obstacle[i]
            || opts
                .occluder_height
                .is_some_and(|h| map.elevation[i] - opts.z_ref > h)
    };
    let rc = map.cell_of(robot.x, robot.y);
    let mut out = map.clone();
    let Some(ri) = map.index(rc) else {
        return MaskOutcome {
            map: out,
            robot_in_collision: false,
            masked: Vec::new(),
        };
    };
    if map.obstacle[ri] {
        return MaskOutcome {
            map: out,
            robot_in_collision: true,
            masked: Vec::new(),
        };
    }
    let mut masked = Vec::new();
    for i in 0..map.len() {
        if i == ri || out.unknown[i] {
            continue;
        }
        let ray = bresenham_line(rc, map.cell_of_index(i));
        let shadowed = ray[1..ray.len() - 1]
            .iter()
            .any(|&c| occludes(map.index(c).expect("ray stays inside the map")));
        if shadowed {
            out.unknown[i] = true;
            masked.push(i);
        }
    }
    masked.sort_unstable();
    MaskOutcome {
        map: out,
        robot_in_collision: false,
        masked,
    }
}

/// Resamples a polyline at arc lengths `spacing, 2 spacing, ...`, always
/// ending with the final vertex. The start point is not included, so the
/// samples of consecutive segments concatenate without duplicates.
pub fn sample_by_arclength(points: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    assert!(spacing > 0.0);
    let mut out = Vec::new();
    if points.len() < 2 {
        return out;
    }
    let total: f64 = points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum();
    if total <= 0.0 {
        return out;
    }
    let n = ((total / spacing) - 1e-9).ceil().max(1.0) as usize;
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..=n {
        if k == n {
            out.push(*points.last().unwrap());
            break;
        }
        let s = k as f64 * spacing;
        loop {
            let a = points[seg];
            let b = points[seg + 1];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= seg_start + len || seg + 2 == points.len() {
                let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 1.0 };
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("path sample {index} lies in an untraversable cell")]
pub struct Untraversable {
    pub index: usize,
}

/// Per-sample terrain cost `C_e + k_s C_s + k_r (C_e - z_r)` at a cell index.
#[inline]
pub fn cell_cost(map: &LayeredGridMap, i: usize, z_r: f64, w: &TraversabilityWeights) -> f64 {
    let ce = map.elevation[i];
    ce + w.k_s * map.slope_at_index(i) + w.k_r * (ce - z_r)
}

/// Sum of the per-sample terrain cost over already resampled path points,
/// looked up at the nearest cell.
pub fn path_traversability(
    map: &LayeredGridMap,
    z_r: f64,
    samples: &[[f64; 2]],
    w: &TraversabilityWeights,
) -> Result<f64, Untraversable> {
    let mut total = 0.0;
    for (k, p) in samples.iter().enumerate() {
        match map.index(map.cell_of(p[0], p[1])) {
            Some(i) if map.traversable_index(i) => total += cell_cost(map, i, z_r, w),
            _ => return Err(Untraversable { index: k }),
        }
    }
    Ok(total)
}

/// Smallest per-sample cost over traversable cells; a lower bound for any sample.
pub fn min_cell_cost(map: &LayeredGridMap, z_r: f64, w: &TraversabilityWeights) -> f64 {
    (0..map.len())
        .filter(|&i| map.traversable_index(i))
        .map(|i| cell_cost(map, i, z_r, w))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn flat(w: usize, h: usize, res: f64) -> LayeredGridMap {
        LayeredGridMap::new(w, h, res, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn crop_copies_interior() {
        let mut g = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
        for i in 0..g.len() {
            g.elevation[i] = i as f64;
        }
        let l = crop_local(&g, &Pose::new(5.0, 5.0, 0.3), 4.0).unwrap();
        assert_eq!((l.width, l.height), (40, 40));
        assert!(l.unknown.iter().all(|u| !u));
        for i in 0..l.len() {
            let c = l.cell_center(l.cell_of_index(i));
            assert_eq!(Some(l.elevation[i]), g.elevation_at(c[0], c[1]));
        }
    }

    #[test]
    fn crop_pads_unknown_at_corner_and_outside() {
        let g = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
        let l = crop_local(&g, &Pose::new(0.0, 0.0, 0.0), 4.0).unwrap();
        let unknown = l.unknown.iter().filter(|u| **u).count();
        assert_eq!(unknown, 40 * 40 - 20 * 20);
        let lost = crop_local(&g, &Pose::new(-5.0, 3.0, 0.0), 4.0).unwrap();
        assert!(lost.unknown.iter().all(|u| *u));
        let sim = crop_local(&g, &Pose::new(5.0, 5.0, 0.0), 8.0).unwrap();
        assert_eq!(sim.width as f64 * sim.resolution, 8.0);
        assert!(crop_local(&g, &Pose::new(5.0, 5.0, 0.0), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn crop_is_idempotent(x in -2.0f64..12.0, y in -2.0f64..12.0, side in 0.5f64..6.0) {
            let mut g = LayeredGridMap::with_extent(0.0, 0.0, 10.0, 10.0, 0.1).unwrap();
            for i in 0..g.len() { g.elevation[i] = (i % 97) as f64; }
            let p = Pose::new(x, y, 0.0);
            let a = crop_local(&g, &p, side).unwrap();
            let b = crop_local(&a, &p, side).unwrap();
            prop_assert_eq!(a.elevation, b.elevation);
            prop_assert_eq!(a.unknown, b.unknown);
        }
    }

    #[test]
    fn slope_of_constant_and_plane() {
        let mut m = flat(20, 20, 0.1);
        m.elevation.iter_mut().for_each(|e| *e = 3.0);
        assert!(slope_layer(&m).slope.unwrap().iter().all(|s| *s == 0.0));
        for i in 0..m.len() {
            m.elevation[i] = m.cell_center(m.cell_of_index(i))[0];
        }
        let s = slope_layer(&m).slope.unwrap();
        for j in 1..19 {
            for i in 1..19 {
                assert!((s[j * 20 + i] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn slope_of_sinusoid_matches_analytic_peak() {
        let (a, lambda) = (0.5, 5.0);
        let res = lambda / 50.0;
        let mut m = flat(200, 5, res);
        for i in 0..m.len() {
            let x = m.cell_center(m.cell_of_index(i))[0];
            m.elevation[i] = a * (2.0 * PI * x / lambda).sin();
        }
        let s = slope_layer(&m).slope.unwrap();
        let peak = (0..m.len())
            .filter(|&i| {
                let c = m.cell_of_index(i);
                c.0 > 0 && c.0 < 199 && c.1 > 0 && c.1 < 4
            })
            .map(|i| s[i])
            .fold(0.0, f64::max);
        let analytic = 2.0 * PI * a / lambda;
        assert!((peak - analytic).abs() / analytic < 0.05, "{peak} vs {analytic}");
    }

    #[test]
    fn trace_rejects_out_of_bounds() {
        let m = flat(5, 5, 1.0);
        assert!(m.bresenham_trace((0, 0), (4, 4)).is_ok());
        assert!(matches!(m.bresenham_trace((0, 0), (5, 1)), Err(MapError::OutOfBounds(..))));
    }

    #[test]
    fn mask_without_obstacles_is_identity() {
        let m = flat(30, 30, 0.1);
        let out = mask_beyond_walls(&m, &Pose::new(1.5, 1.5, 0.0));
        assert_eq!(out.map, m);
        assert!(out.masked.is_empty());
    }

    #[test]
    fn wall_hides_the_region_behind_it() {
        let mut m = flat(40, 40, 0.1);
        // wall x = 2.0, y in [0.5, 3.5]
        for j in 5..=35 {
            let i = m.index((20, j)).unwrap();
            m.obstacle[i] = true;
        }
        let out = mask_beyond_walls(&m, &Pose::new(0.5, 2.0, 0.0));
        let behind = m.index(m.cell_of(3.0, 2.0)).unwrap();
        let front = m.index(m.cell_of(1.5, 2.0)).unwrap();
        assert!(out.map.unknown[behind]);
        assert!(!out.map.unknown[front]);
        // the wall itself stays an obstacle, not unknown
        assert!(!out.map.unknown[m.index((20, 20)).unwrap()]);
    }

    #[test]
    fn robot_inside_obstacle_is_flagged() {
        let mut m = flat(10, 10, 0.1);
        let i = m.index(m.cell_of(0.5, 0.5)).unwrap();
        m.obstacle[i] = true;
        let out = mask_beyond_walls(&m, &Pose::new(0.5, 0.5, 0.0));
        assert!(out.robot_in_collision);
        assert_eq!(out.map, m);
    }

    #[test]
    fn low_rail_only_occludes_when_requested() {
        let mut m = flat(40, 40, 0.1);
        for j in 0..40 {
            let i = m.index((20, j)).unwrap();
            m.elevation[i] = 0.1;
        }
        let robot = Pose::new(0.5, 2.0, 0.0);
        assert!(mask_beyond_walls(&m, &robot).masked.is_empty());
        let opts = MaskOptions {
            occluder_height: Some(0.05),
            z_ref: 0.0,
        };
        let out = mask_beyond_occluders(&m, &robot, &opts);
        assert!(out.map.unknown[m.index(m.cell_of(3.5, 2.0)).unwrap()]);
    }

    proptest! {
        #[test]
        fn masking_never_unmasks(seed in 0u64..500, rx in 0.2f64..3.8, ry in 0.2f64..3.8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = flat(40, 40, 0.1);
            for i in 0..m.len() {
                m.obstacle[i] = rng.gen_bool(0.05);
                m.unknown[i] = rng.gen_bool(0.02);
            }
            let out = mask_beyond_walls(&m, &Pose::new(rx, ry, 0.0));
            for i in 0..m.len() {
                prop_assert!(!out.map.traversable_index(i) || m.traversable_index(i));
            }
        }
    }

    #[test]
    fn traversability_on_constant_fields() {
        let mut m = slope_layer(&flat(50, 50, 0.1));
        let w = TraversabilityWeights { k_s: 7.0, k_r: 3.0, k_t: 1.0 };
        let path: Vec<[f64; 2]> = (0..=30).map(|k| [0.5 + 0.1 * k as f64, 2.0]).collect();
        let samples = sample_by_arclength(&path, m.resolution);
        assert_eq!(samples.len(), 30);
        assert_eq!(path_traversability(&m, 0.0, &samples, &w).unwrap(), 0.0);
        let h = 0.4;
        m.elevation.iter_mut().for_each(|e| *e = h);
        let m = slope_layer(&m);
        let t = path_traversability(&m, h, &samples, &w).unwrap();
        assert!((t - samples.len() as f64 * h).abs() < 1e-9);
    }

    #[test]
    fn untraversable_sample_is_reported() {
        let mut m = flat(50, 50, 0.1);
        let i = m.index(m.cell_of(1.0, 1.0)).unwrap();
        m.unknown[i] = true;
        let w = TraversabilityWeights::default();
        let r = path_traversability(&m, 0.0, &[[0.5, 1.0], [1.0, 1.0]], &w);
        assert_eq!(r, Err(Untraversable { index: 1 }));
        assert!(path_traversability(&m, 0.0, &[[9.0, 9.0]], &w).is_err());
    }

    #[test]
    fn valley_path_is_cheaper_than_crest() {
        // elevation = 0.5 sin(2 pi x / 4): valley at x = 3, crest at x = 1
        let mut m = flat(60, 60, 0.1);
        for i in 0..m.len() {
            let x = m.cell_center(m.cell_of_index(i))[0];
            m.elevation[i] = 0.5 * (2.0 * PI * x / 4.0).sin();
        }
        let m = slope_layer(&m);
        let w = TraversabilityWeights::default();
        let line = |x: f64| -> Vec<[f64; 2]> { vec![[x, 0.5], [x, 5.0]] };
        let valley = sample_by_arclength(&line(3.0), 0.1);
        let crest = sample_by_arclength(&line(1.0), 0.1);
        let tv = path_traversability(&m, -0.5, &valley, &w).unwrap();
        let tc = path_traversability(&m, -0.5, &crest, &w).unwrap();
        // per sample: valley -0.5 + 0 + 0; crest 0.5 + 0 + 1.0
        assert!((tv - 45.0 * -0.5).abs() < 1e-6);
        assert!((tc - 45.0 * 1.5).abs() < 1e-6);
        assert!(tv < tc);
    }

    proptest! {
        #[test]
        fn traversability_is_additive(seed in 0u64..200, n1 in 2usize..20, n2 in 2usize..20) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = flat(60, 60, 0.1);
            for e in m.elevation.iter_mut() { *e = rng.gen_range(-1.0..1.0); }
            let m = slope_layer(&m);
            let pts: Vec<[f64; 2]> = (0..n1 + n2).map(|_| [rng.gen_range(0.5..5.5), rng.gen_range(0.5..5.5)]).collect();
            let (a, b) = pts.split_at(n1);
            let w = TraversabilityWeights::default();
            let whole = path_traversability(&m, 0.2, &pts, &w).unwrap();
            let parts = path_traversability(&m, 0.2, a, &w).unwrap() + path_traversability(&m, 0.2, b, &w).unwrap();
            prop_assert!((whole - parts).abs() < 1e-9);
        }
    }

    #[test]
    fn arclength_sampling_spacing() {
        let s = sample_by_arclength(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.05]], 0.1);
        assert_eq!(s.len(), 21);
        assert!((s[9][0] - 1.0).abs() < 1e-12 && s[9][1].abs() < 1e-12);
        assert_eq!(*s.last().unwrap(), [1.0, 1.05]);
        assert!(sample_by_arclength(&[[1.0, 1.0]], 0.1).is_empty());
    }

    #[test]
    fn inflation_grows_obstacles() {
        let mut m = flat(21, 21, 0.1);
        let c = m.index((10, 10)).unwrap();
        m.obstacle[c] = true;
        let inf = m.inflated(0.3);
        assert!(inf.obstacle[m.index((13, 10)).unwrap()]);
        assert!(inf.obstacle[m.index((12, 12)).unwrap()]);
        assert!(!inf.obstacle[m.index((14, 10)).unwrap()]);
        assert!(!inf.obstacle[m.index((13, 13)).unwrap()]);
    }
}
