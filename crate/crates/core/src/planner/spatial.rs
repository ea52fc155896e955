/// Uniform bucket grid over node positions. Queries return ids; callers sort
/// them, so bucket order never leaks into results.
#[derive(Debug, Clone)]
pub(crate) struct SpatialGrid {
    origin: [f64; 2],
    pub cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    pub fn new(bounds: [f64; 4], cell: f64) -> Self {
        let [x0, y0, x1, y1] = bounds;
        let nx = (((x1 - x0) / cell).ceil() as usize).max(1);
        let ny = (((y1 - y0) / cell).ceil() as usize).max(1);
        Self {
            origin: [x0, y0],
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        }
    }

    fn coord(&self, v: f64, o: f64, n: usize) -> usize {
        let c = ((v - o) / self.cell).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(n - 1)
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        (self.coord(x, self.origin[0], self.nx), self.coord(y, self.origin[1], self.ny))
    }

    pub fn insert(&mut self, id: usize, x: f64, y: f64) {
        let (cx, cy) = self.cell_of(x, y);
        self.buckets[cy * self.nx + cx].push(id);
    }

    /// Ids in every bucket overlapping the square of half-side `radius`.
    pub fn collect_box(&self, x: f64, y: f64, radius: f64, out: &mut Vec<usize>) {
        let (ax, ay) = self.cell_of(x - radius, y - radius);
        let (bx, by) = self.cell_of(x + radius, y + radius);
        for cy in ay..=by {
            for cx in ax..=bx {
                out.extend_from_slice(&self.buckets[cy * self.nx + cx]);
            }
        }
    }

    /// Ids in buckets at Chebyshev distance exactly `k` from `c`.
    pub fn collect_ring(&self, c: (usize, usize), k: usize, out: &mut Vec<usize>) {
        let (cx, cy) = (c.0 as i64, c.1 as i64);
        let k = k as i64;
        let mut visit = |x: i64, y: i64| {
            if x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny {
                out.extend_from_slice(&self.buckets[y as usize * self.nx + x as usize]);
            }
        };
        if k == 0 {
            visit(cx, cy);
            return;
        }
        for x in cx - k..=cx + k {
            visit(x, cy - k);
            visit(x, cy + k);
        }
        for y in cy - k + 1..cy + k {
            visit(cx - k, y);
            visit(cx + k, y);
        }
    }

    /// Largest ring index that still touches the grid.
    pub fn max_ring(&self, c: (usize, usize)) -> usize {
        c.0.max(self.nx - 1 - c.0).max(c.1).max(self.ny - 1 - c.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rings_partition_the_grid() {
        let mut g = SpatialGrid::new([0.0, 0.0, 7.0, 5.0], 1.0);
        let mut id = 0;
        for y in 0..5 {
            for x in 0..7 {
                g.insert(id, x as f64 + 0.5, y as f64 + 0.5);
                id += 1;
            }
        }
        let c = g.cell_of(2.2, 1.7);
        let mut all = Vec::new();
        for k in 0..=g.max_ring(c) {
            g.collect_ring(c, k, &mut all);
        }
        all.sort_unstable();
        assert_eq!(all, (0..35).collect::<Vec<_>>());
    }

    #[test]
    fn box_query_covers_radius() {
        let mut g = SpatialGrid::new([0.0, 0.0, 10.0, 10.0], 1.0);
        g.insert(7, 4.9, 5.0);
        g.insert(8, 9.5, 9.5);
        let mut out = Vec::new();
        g.collect_box(6.0, 5.0, 1.2, &mut out);
        assert_eq!(out, vec![7]);
    }
}
