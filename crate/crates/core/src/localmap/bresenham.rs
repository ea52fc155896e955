/// Integer grid cell `(ix, iy)`; `ix` grows with world x, `iy` with world y.
pub type Cell = (i64, i64);

/// Standard integer Bresenham line from `a` to `b`, both endpoints included.
///
/// The error term breaks ties toward stepping the major axis first, so the
/// reversed trace of `b -> a` can differ from `a -> b` on exact half-cell ties.
/// Axis-aligned and 45-degree lines are always symmetric.
pub fn bresenham_line(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}
