use std::f64::consts::SQRT_2;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use omniplan::clf::{simulate_closed_loop, ClosedLoopTrajectory};
use omniplan::{to_egopolar, ClfParams, GoalPosition, Pose};

use crate::svg;
use crate::ConfigError;

pub const PRESETS: [&str; 3] = ["fig4", "fig5", "appendix-sweep"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub r0: Vec<f64>,
    /// Initial heading of the goal relative to the robot, degrees.
    pub delta0_deg: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Direction from the goal to the start, degrees.
    #[serde(default = "default_bearing")]
    pub bearing_deg: Vec<f64>,
}

fn default_bearing() -> Vec<f64> {
    vec![225.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_r_stop")]
    pub r_stop: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    /// Write every n-th integration step to the per-trajectory tables.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub goal: [f64; 2],
    #[serde(default)]
    pub clf: ClfParams,
    pub grid: SweepGrid,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_r_stop() -> f64 {
    0.05
}
fn default_max_time() -> f64 {
    120.0
}
fn default_sample_every() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCase {
    pub r0: f64,
    pub delta0_deg: f64,
    pub alpha: f64,
    pub bearing_deg: f64,
}

impl SweepCase {
    pub fn start(&self, goal: GoalPosition) -> Pose {
        let b = self.bearing_deg.to_radians();
        let x = goal.x + self.r0 * b.cos();
        let y = goal.y + self.r0 * b.sin();
        let los = (goal.y - y).atan2(goal.x - x);
        Pose::new(x, y, omniplan::geometry::wrap(los - self.delta0_deg.to_radians()))
    }
}

impl SweepConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_yaml::from_str(text).map_err(|e| ConfigError(format!("cannot parse sweep: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Option<Self> {
        let base = |name: &str, grid: SweepGrid| SweepConfig {
            name: name.into(),
            dt: default_dt(),
            r_stop: default_r_stop(),
            max_time: default_max_time(),
            sample_every: default_sample_every(),
            goal: [0.0, 0.0],
            clf: ClfParams::default(),
            grid,
        };
        let alphas = vec![1.0, 10.0, 100.0];
        match name {
            "fig4" => Some(base(
                name,
                SweepGrid {
                    r0: vec![2.0 * SQRT_2, 8.0 * SQRT_2, 15.0 * SQRT_2],
                    delta0_deg: vec![60.0],
                    alpha: alphas,
                    bearing_deg: default_bearing(),
                },
            )),
            "fig5" => Some(base(
                name,
                SweepGrid {
                    r0: vec![15.0],
                    delta0_deg: vec![-70.0, -60.0, -40.0, -20.0, 0.0, 20.0, 40.0, 60.0, 70.0],
                    alpha: vec![10.0],
                    bearing_deg: vec![180.0],
                },
            )),
            "appendix-sweep" => Some(base(
                name,
                SweepGrid {
                    r0: vec![15.0 * SQRT_2],
                    delta0_deg: vec![60.0],
                    alpha: alphas,
                    bearing_deg: default_bearing(),
                },
            )),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ConfigError(format!("invalid sweep: {m}")).into());
        if !(self.dt > 0.0 && self.r_stop > 0.0 && self.max_time > 0.0) {
            return bad("dt, r_stop and max_time must be positive");
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1");
        }
        let g = &self.grid;
        if g.r0.is_empty() || g.delta0_deg.is_empty() || g.alpha.is_empty() || g.bearing_deg.is_empty() {
            return bad("every grid axis needs at least one value");
        }
        if g.r0.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("r0 values must be positive");
        }
        if g.delta0_deg.iter().chain(&g.bearing_deg).any(|d| !d.is_finite()) {
            return bad("angles must be finite");
        }
        for &alpha in &g.alpha {
            ClfParams { alpha, ..self.clf }
                .validate()
                .map_err(|e| ConfigError(format!("invalid sweep: {e}")))?;
        }
        Ok(())
    }

    /// Grid in row-major order: r0, then delta0, then alpha, then bearing.
    pub fn cases(&self) -> Vec<SweepCase> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &r0 in &g.r0 {
            for &delta0_deg in &g.delta0_deg {
                for &alpha in &g.alpha {
                    for &bearing_deg in &g.bearing_deg {
                        out.push(SweepCase {
                            r0,
                            delta0_deg,
                            alpha,
                            bearing_deg,
                        });
                    }
                }
            }
        }
        out
    }
}

pub struct SweepResult {
    pub case: SweepCase,
    pub trajectory: ClosedLoopTrajectory,
}

pub fn simulate(cfg: &SweepConfig) -> Vec<SweepResult> {
    let goal = GoalPosition::new(cfg.goal[0], cfg.goal[1]);
    let max_steps = (cfg.max_time / cfg.dt).ceil() as usize;
    cfg.cases()
        .into_iter()
        .map(|case| {
            let p = ClfParams { alpha: case.alpha, ..cfg.clf };
            SweepResult {
                case,
                trajectory: simulate_closed_loop(case.start(goal), goal, &p, cfg.dt, cfg.r_stop, max_steps),
            }
        })
        .collect()
}

fn label(c: &SweepCase) -> String {
    format!(
        "r0={:.2} delta0={}deg alpha={} bearing={}deg",
        c.r0, c.delta0_deg, c.alpha, c.bearing_deg
    )
}

/// Writes summary.csv, traj_NN.csv, trajectories.svg and panels.svg.
pub fn write_outputs(cfg: &SweepConfig, results: &[SweepResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let goal = GoalPosition::new(cfg.goal[0], cfg.goal[1]);
    fs::write(dir.join("sweep.yaml"), serde_yaml::to_string(cfg)?)?;

    let mut summary = fs::File::create(dir.join("summary.csv"))?;
    writeln!(
        summary,
        "id,r0,delta0_deg,alpha,bearing_deg,converged,duration,length,net_heading_change,max_abs_v_y,max_abs_omega"
    )?;
    let mut series_t = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let tr = &r.trajectory;
        let c = &r.case;
        let max_vy = tr.samples.iter().map(|s| s.1.v_y.abs()).fold(0.0, f64::max);
        let max_w = tr.samples.iter().map(|s| s.1.omega.abs()).fold(0.0, f64::max);
        writeln!(
            summary,
            "{i},{:.6},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            c.r0,
            c.delta0_deg,
            c.alpha,
            c.bearing_deg,
            tr.converged(),
            (tr.samples.len() - 1) as f64 * tr.dt,
            tr.length(),
            tr.net_heading_change(),
            max_vy,
            max_w
        )?;

        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("traj_{i:02}.csv")))?);
        writeln!(f, "t,x,y,theta,v_x,v_y,omega,r,delta")?;
        let mut t = Vec::new();
        let mut vals: [Vec<f64>; 4] = Default::default();
        let last = tr.samples.len() - 1;
        for (k, (pose, cmd)) in tr.samples.iter().enumerate() {
            if k % cfg.sample_every != 0 && k != last {
                continue;
            }
            let e = to_egopolar(pose, goal);
            let time = k as f64 * tr.dt;
            writeln!(
                f,
                "{time:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                pose.x, pose.y, pose.theta, cmd.v_x, cmd.v_y, cmd.omega, e.r, e.delta
            )?;
            t.push(time);
            for (v, x) in vals.iter_mut().zip([cmd.v_x, cmd.v_y, cmd.omega, pose.theta]) {
                v.push(x);
            }
        }
        f.flush()?;
        series_t.push((t, vals));
    }

    let poses: Vec<Vec<Pose>> = results
        .iter()
        .map(|r| r.trajectory.samples.iter().step_by(cfg.sample_every).map(|s| s.0).collect())
        .collect();
    let family: Vec<svg::Family> = results
        .iter()
        .zip(&poses)
        .map(|(r, p)| svg::Family {
            label: label(&r.case),
            poses: p,
        })
        .collect();
    fs::write(dir.join("trajectories.svg"), svg::render_family(goal, &family))?;

    let series: Vec<svg::Series> = results
        .iter()
        .zip(series_t)
        .map(|(r, (t, values))| svg::Series {
            label: label(&r.case),
            t,
            values,
        })
        .collect();
    fs::write(dir.join("panels.svg"), svg::render_panels(&series))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_pose_has_the_requested_relative_heading() {
        let c = SweepCase {
            r0: 15.0 * SQRT_2,
            delta0_deg: 60.0,
            alpha: 10.0,
            bearing_deg: 225.0,
        };
        let goal = GoalPosition::new(0.0, 0.0);
        let s = c.start(goal);
        assert!((s.x + 15.0).abs() < 1e-9 && (s.y + 15.0).abs() < 1e-9);
        let e = to_egopolar(&s, goal);
        assert!((e.r - 15.0 * SQRT_2).abs() < 1e-9);
        assert!((e.delta - 60f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn presets_have_the_expected_grid_sizes() {
        let n = |p: &str| SweepConfig::preset(p).unwrap().cases().len();
        assert_eq!(n("fig4"), 9);
        assert_eq!(n("fig5"), 9);
        assert_eq!(n("appendix-sweep"), 3);
        for p in PRESETS {
            SweepConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(SweepConfig::preset("fig6").is_none());
    }

    #[test]
    fn yaml_round_trip_and_rejection() {
        let cfg = SweepConfig::preset("fig4").unwrap();
        let back = SweepConfig::from_yaml(&serde_yaml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = "name: x\ngrid: {r0: [], delta0_deg: [60], alpha: [1]}\n";
        let err = SweepConfig::from_yaml(bad).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }
}
