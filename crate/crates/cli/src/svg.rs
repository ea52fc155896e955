use std::fmt::Write;

use omniplan::localmap::LayeredGridMap;
use omniplan::{GoalPosition, Pose};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Maps world coordinates onto an SVG canvas with y pointing up.
struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(bounds: [f64; 4], target_width: f64) -> Self {
        let [x0, y0, x1, y1] = bounds;
        let span = (x1 - x0).max(1e-9);
        let scale = target_width / span;
        Self {
            x0,
            y1,
            scale,
            width: target_width,
            height: (y1 - y0).max(1e-9) * scale,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) * self.scale, (self.y1 - y) * self.scale)
    }
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn polyline(out: &mut String, f: &Frame, pts: impl Iterator<Item = (f64, f64)>, stroke: &str, width: f64, extra: &str) {
    let mut d = String::new();
    for (x, y) in pts {
        let (u, v) = f.px(x, y);
        let _ = write!(d, "{u:.2},{v:.2} ");
    }
    if d.is_empty() {
        return;
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"{extra}/>"#,
        d.trim_end()
    );
}

fn arrow(out: &mut String, f: &Frame, pose: &Pose, len: f64, stroke: &str) {
    let (u0, v0) = f.px(pose.x, pose.y);
    let (u1, v1) = f.px(pose.x + len * pose.theta.cos(), pose.y + len * pose.theta.sin());
    let _ = writeln!(
        out,
        r#"<line x1="{u0:.2}" y1="{v0:.2}" x2="{u1:.2}" y2="{v1:.2}" stroke="{stroke}" stroke-width="1.5"/>"#
    );
    let _ = writeln!(out, r#"<circle cx="{u0:.2}" cy="{v0:.2}" r="2.5" fill="{stroke}"/>"#);
}

fn goal_marker(out: &mut String, f: &Frame, goal: GoalPosition) {
    let (u, v) = f.px(goal.x, goal.y);
    let _ = writeln!(
        out,
        r#"<circle cx="{u:.2}" cy="{v:.2}" r="6" fill="none" stroke="black" stroke-width="2"/><circle cx="{u:.2}" cy="{v:.2}" r="2" fill="black"/>"#
    );
}

/// Elevation shading with obstacles, unknown and glass cells; rows are
/// run-length merged to keep the file small.
fn map_layer(out: &mut String, f: &Frame, map: &LayeredGridMap, glass: &[usize]) {
    let mut is_glass = vec![false; map.len()];
    for &i in glass {
        if i < is_glass.len() {
            is_glass[i] = true;
        }
    }
    let (lo, hi) = map
        .elevation
        .iter()
        .filter(|z| z.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let fill_of = |i: usize| -> String {
        if is_glass[i] {
            "#4fa3e0".into()
        } else if map.obstacle[i] {
            "#5a1e1e".into()
        } else if map.unknown[i] {
            "#b0b0b0".into()
        } else {
            let s = ((map.elevation[i] - lo) / span).clamp(0.0, 1.0);
            let g = (245.0 - 120.0 * (s * 16.0).round() / 16.0) as u8;
            format!("#{g:02x}{g:02x}{:02x}", g.saturating_sub(10))
        }
    };
    let cell = map.resolution * f.scale;
    for row in 0..map.height {
        let mut col = 0;
        while col < map.width {
            let i = row * map.width + col;
            let fill = fill_of(i);
            let mut end = col + 1;
            while end < map.width && fill_of(row * map.width + end) == fill {
                end += 1;
            }
            let x = map.origin[0] + col as f64 * map.resolution;
            let y = map.origin[1] + (row + 1) as f64 * map.resolution;
            let (u, v) = f.px(x, y);
            let _ = writeln!(
                out,
                r#"<rect x="{u:.2}" y="{v:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                (end - col) as f64 * cell + 0.3,
                cell + 0.3
            );
            col = end;
        }
    }
}

pub struct Overlay<'a> {
    pub map: &'a LayeredGridMap,
    pub glass: &'a [usize],
    /// Parent-to-child segments of the last tree.
    pub tree: &'a [([f64; 2], [f64; 2])],
    pub path: Option<&'a [Pose]>,
    pub trajectory: &'a [(f64, f64)],
    pub start: Option<Pose>,
    pub goal: Option<GoalPosition>,
}

pub fn render_overlay(o: &Overlay) -> String {
    let f = Frame::new(o.map.bounds(), 900.0);
    let mut out = String::new();
    header(&mut out, f.width, f.height);
    out.push_str("<g id=\"map\" shape-rendering=\"crispEdges\">\n");
    map_layer(&mut out, &f, o.map, o.glass);
    out.push_str("</g>\n<g id=\"tree\">\n");
    for (a, b) in o.tree {
        polyline(&mut out, &f, [(a[0], a[1]), (b[0], b[1])].into_iter(), "#7f9fbf", 0.6, r#" stroke-opacity="0.6""#);
    }
    out.push_str("</g>\n");
    if let Some(path) = o.path {
        polyline(&mut out, &f, path.iter().map(|p| (p.x, p.y)), "#ff7f0e", 2.5, "");
        for p in path {
            arrow(&mut out, &f, p, 0.3, "#ff7f0e");
        }
    }
    polyline(&mut out, &f, o.trajectory.iter().copied(), "#1f3fbf", 2.0, "");
    if let Some(s) = o.start {
        arrow(&mut out, &f, &s, 0.6, "#2ca02c");
    }
    if let Some(g) = o.goal {
        goal_marker(&mut out, &f, g);
    }
    out.push_str("</svg>\n");
    out
}

pub struct Family<'a> {
    pub label: String,
    pub poses: &'a [Pose],
}

/// Closed-loop trajectories in the world frame with heading arrows.
pub fn render_family(goal: GoalPosition, family: &[Family]) -> String {
    let mut b = [goal.x, goal.y, goal.x, goal.y];
    for t in family {
        for p in t.poses {
            b = [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)];
        }
    }
    let pad = 0.08 * (b[2] - b[0]).max(b[3] - b[1]).max(1.0);
    let f = Frame::new([b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad], 800.0);
    let arrow_len = 0.04 * (b[2] - b[0]).max(b[3] - b[1]).max(1.0);
    let mut out = String::new();
    header(&mut out, f.width, f.height + 20.0 * family.len() as f64);
    for (i, t) in family.iter().enumerate() {
        let c = colour(i);
        polyline(&mut out, &f, t.poses.iter().map(|p| (p.x, p.y)), c, 1.8, "");
        let every = (t.poses.len() / 8).max(1);
        for p in t.poses.iter().step_by(every) {
            arrow(&mut out, &f, p, arrow_len, c);
        }
        let _ = writeln!(
            out,
            r#"<text x="10" y="{:.1}" font-family="sans-serif" font-size="13" fill="{c}">{}</text>"#,
            f.height + 15.0 + 20.0 * i as f64,
            t.label
        );
    }
    goal_marker(&mut out, &f, goal);
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub label: String,
    pub t: Vec<f64>,
    pub values: [Vec<f64>; 4],
}

/// Four stacked panels (v_x, v_y, omega, theta) against time.
pub fn render_panels(series: &[Series]) -> String {
    const NAMES: [&str; 4] = ["v_x [m/s]", "v_y [m/s]", "omega [rad/s]", "theta [rad]"];
    let (w, h, gap) = (800.0, 170.0, 30.0);
    let t_max = series
        .iter()
        .filter_map(|s| s.t.last().copied())
        .fold(1e-9, f64::max);
    let mut out = String::new();
    header(&mut out, w, 4.0 * (h + gap) + 20.0 * series.len() as f64);
    for (k, name) in NAMES.iter().enumerate() {
        let (lo, hi) = series
            .iter()
            .flat_map(|s| s.values[k].iter().copied())
            .fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let top = k as f64 * (h + gap) + gap;
        let f = Frame {
            x0: 0.0,
            y1: hi + 0.05 * span,
            scale: 1.0,
            width: w,
            height: h,
        };
        let sy = h / (1.1 * span);
        let sx = (w - 60.0) / t_max;
        let _ = writeln!(
            out,
            r#"<text x="8" y="{:.1}" font-family="sans-serif" font-size="13">{name}</text>"#,
            top - 8.0
        );
        let _ = writeln!(
            out,
            r##"<rect x="50" y="{top:.1}" width="{:.1}" height="{h:.1}" fill="none" stroke="#999"/>"##,
            w - 60.0
        );
        for (v, dy) in [(hi, 4.0), (lo, 0.0)] {
            let _ = writeln!(
                out,
                r#"<text x="46" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.2}</text>"#,
                top + (f.y1 - v) * sy + dy
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">t = {t_max:.1} s</text>"#,
            w - 10.0,
            top + h + 12.0
        );
        let zero = top + (f.y1 - 0.0) * sy;
        let _ = writeln!(
            out,
            r##"<line x1="50" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="#ccc"/>"##,
            w - 10.0
        );
        for (i, s) in series.iter().enumerate() {
            let mut d = String::new();
            let stride = (s.t.len() / 600).max(1);
            for (t, v) in s.t.iter().zip(&s.values[k]).step_by(stride) {
                let _ = write!(d, "{:.2},{:.2} ", 50.0 + t * sx, top + (f.y1 - v) * sy);
            }
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.4"/>"#,
                d.trim_end(),
                colour(i)
            );
        }
    }
    for (i, s) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="10" y="{:.1}" font-family="sans-serif" font-size="13" fill="{}">{}</text>"#,
            4.0 * (h + gap) + 15.0 + 20.0 * i as f64,
            colour(i),
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_flips_y() {
        let f = Frame::new([0.0, 0.0, 10.0, 5.0], 100.0);
        assert_eq!(f.px(0.0, 5.0), (0.0, 0.0));
        assert_eq!(f.px(10.0, 0.0), (100.0, 50.0));
    }

    #[test]
    fn overlay_is_well_formed() {
        let map = LayeredGridMap::with_extent(0.0, 0.0, 2.0, 1.0, 0.5).unwrap();
        let traj = [(0.2, 0.2), (1.0, 0.5)];
        let svg = render_overlay(&Overlay {
            map: &map,
            glass: &[1],
            tree: &[([0.2, 0.2], [1.0, 0.5])],
            path: None,
            trajectory: &traj,
            start: Some(Pose::new(0.2, 0.2, 0.0)),
            goal: Some(GoalPosition::new(1.5, 0.5)),
        });
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("#4fa3e0"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
