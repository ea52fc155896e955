mod svg;
mod sweep;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use omniplan::localmap::io::{load_map, save_map};
use omniplan::planner::{PathSnapshot, Tree};
use omniplan::robots::{AlipPlant, OmniPlant, Plant};
use omniplan::runtime::udp::{serve_plant, RemotePlant};
use omniplan::runtime::{self, Outcome, RunArtifacts};
use omniplan::terrains::{self, RobotModel, ScenarioConfig};
use omniplan::{GoalPosition, Pose};

use crate::sweep::SweepConfig;

/// Invalid or unreadable configuration; maps to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const EXIT_MISSION_FAILED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_COLLISION: u8 = 4;

#[derive(Parser)]
#[command(name = "omniplan", version, about = "Reactive CLF planning: scenarios, sweeps and plots")]
struct Cli {
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario YAML file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "OMNIPLAN_OUT", default_value = "omniplan-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario on the simulated clock.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Closed-loop CLF trajectories over a parameter grid.
    Sweep {
        /// Sweep YAML file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// fig4, fig5 or appendix-sweep.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-render the overlay of a finished run.
    Plot {
        /// Directory written by `run` or `bridge`.
        #[arg(long = "from")]
        from: PathBuf,
        /// Where to put plot.svg; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate and dump the truth and perception maps of a scenario.
    GenMap {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the planner side against a plant reached over UDP.
    Bridge {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Local address for command/pose traffic.
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: SocketAddr,
        /// Address of the external plant.
        #[arg(long, required_unless_present = "loopback")]
        plant: Option<SocketAddr>,
        /// Serve the scenario's own simulated plant on a loopback socket.
        #[arg(long)]
        loopback: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let say = |s: String| {
        if !cli.quiet {
            println!("{s}");
        }
    };
    match &cli.command {
        Command::Run { scenario, out } => {
            let cfg = load_scenario(scenario)?;
            let artifacts = runtime::run(&cfg).map_err(|e| ConfigError(e.to_string()))?;
            write_run(&cfg, &artifacts, &out.out)?;
            say(summary_line(&artifacts, &out.out));
            Ok(exit_code(artifacts.report.outcome))
        }
        Command::Sweep { config, preset, out } => {
            let cfg = match (config, preset) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                    SweepConfig::from_yaml(&text)?
                }
                (None, Some(name)) => SweepConfig::preset(name).ok_or_else(|| {
                    ConfigError(format!("unknown sweep preset {name:?}; expected one of {:?}", sweep::PRESETS))
                })?,
                (None, None) => unreachable!("clap requires one of --config and --preset"),
            };
            let results = sweep::simulate(&cfg);
            sweep::write_outputs(&cfg, &results, &out.out)?;
            let converged = results.iter().filter(|r| r.trajectory.converged()).count();
            say(format!(
                "{}: {} trajectories, {converged} converged -> {}",
                cfg.name,
                results.len(),
                out.out.display()
            ));
            Ok(0)
        }
        Command::Plot { from, out } => {
            let dest = out.clone().unwrap_or_else(|| from.clone());
            plot_from(from, &dest)?;
            say(format!("wrote {}", dest.join("plot.svg").display()));
            Ok(0)
        }
        Command::GenMap { scenario, out } => {
            let cfg = load_scenario(scenario)?;
            let terrain = cfg
                .terrain
                .generate(cfg.resolution, cfg.seed)
                .map_err(|e| ConfigError(e.to_string()))?;
            fs::create_dir_all(&out.out)?;
            save_map(&terrain.truth, &out.out, "truth")?;
            save_map(&terrain.perception, &out.out, "perception")?;
            let mut csv = BufWriter::new(fs::File::create(out.out.join("truth.csv"))?);
            omniplan::localmap::io::write_csv(&terrain.truth, &mut csv)?;
            csv.flush()?;
            let svg = svg::render_overlay(&svg::Overlay {
                map: &terrain.truth,
                glass: &terrain.glass,
                tree: &[],
                path: None,
                trajectory: &[],
                start: Some(cfg.start),
                goal: Some(cfg.goal),
            });
            fs::write(out.out.join("map.svg"), svg)?;
            say(format!(
                "{}: {} x {} cells, {} glass -> {}",
                cfg.name,
                terrain.truth.width,
                terrain.truth.height,
                terrain.glass.len(),
                out.out.display()
            ));
            Ok(0)
        }
        Command::Bridge {
            scenario,
            out,
            bind,
            plant,
            loopback,
        } => {
            let cfg = load_scenario(scenario)?;
            let socket = UdpSocket::bind(bind).with_context(|| format!("cannot bind {bind}"))?;
            let stop = Arc::new(AtomicBool::new(false));
            let (peer, server) = if *loopback {
                let plant_socket = UdpSocket::bind("127.0.0.1:0")?;
                let addr = plant_socket.local_addr()?;
                let sim: Box<dyn Plant + Send> = match cfg.robot {
                    RobotModel::Alip => Box::new(AlipPlant::new(cfg.start, cfg.alip, cfg.limits, cfg.seed)),
                    RobotModel::Omni => Box::new(OmniPlant::new(cfg.start, cfg.limits)),
                };
                let handle = serve_plant(plant_socket, socket.local_addr()?, sim, cfg.rates.sim_dt, stop.clone());
                (addr, Some(handle))
            } else {
                (plant.expect("clap requires --plant without --loopback"), None)
            };
            let remote = RemotePlant::new(socket, peer, cfg.start)?;
            let result = runtime::run_with_plant(&cfg, Box::new(remote));
            stop.store(true, Ordering::Relaxed);
            if let Some(h) = server {
                match h.join() {
                    Ok(Ok(steps)) => log::info!("loopback plant served {steps} steps"),
                    Ok(Err(e)) => log::warn!("loopback plant stopped: {e}"),
                    Err(_) => bail!("loopback plant thread panicked"),
                }
            }
            let artifacts = result.map_err(|e| ConfigError(e.to_string()))?;
            write_run(&cfg, &artifacts, &out.out)?;
            say(summary_line(&artifacts, &out.out));
            Ok(exit_code(artifacts.report.outcome))
        }
    }
}

fn exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::GoalReached => 0,
        Outcome::MissionFailed | Outcome::Timeout => EXIT_MISSION_FAILED,
        Outcome::Collision => EXIT_COLLISION,
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ScenarioConfig::load(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => terrains::preset(name).ok_or_else(|| {
            ConfigError(format!("unknown preset {name:?}; expected one of {:?}", terrains::PRESET_NAMES))
        })?,
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

fn summary_line(a: &RunArtifacts, dir: &Path) -> String {
    let r = &a.report;
    format!(
        "{} seed {}: {:?} after {:.2} s, path {:.2} m, {} replans -> {}",
        r.scenario,
        r.seed,
        r.outcome,
        r.sim_time,
        r.path_length,
        r.replans,
        dir.display()
    )
}

fn tree_segments(tree: &Tree) -> Vec<([f64; 2], [f64; 2])> {
    tree.nodes()
        .iter()
        .filter_map(|n| {
            n.parent.map(|p| {
                let q = tree.node(p).pose;
                ([q.x, q.y], [n.pose.x, n.pose.y])
            })
        })
        .collect()
}

fn path_poses(p: &PathSnapshot) -> Vec<Pose> {
    std::iter::once(p.root).chain(p.wayposes.iter().copied()).collect()
}

fn write_run(cfg: &ScenarioConfig, a: &RunArtifacts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(dir.join("scenario.yaml"), cfg.to_yaml())?;
    fs::write(dir.join("report.json"), a.report.to_json() + "\n")?;

    let mut f = BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?);
    a.write_trajectory_csv(&mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(fs::File::create(dir.join("events.jsonl"))?);
    a.write_events(&mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(fs::File::create(dir.join("tree.jsonl"))?);
    if let Some(t) = &a.last_tree {
        t.write_json_lines(&mut f)?;
    }
    f.flush()?;
    if let Some(p) = &a.last_path {
        fs::write(dir.join("path.json"), serde_json::to_string_pretty(p)? + "\n")?;
    }
    save_map(&a.terrain.truth, dir, "truth")?;
    save_map(&a.terrain.perception, dir, "perception")?;

    let segments = a.last_tree.as_ref().map(tree_segments).unwrap_or_default();
    let path = a.last_path.as_ref().map(path_poses);
    let traj: Vec<(f64, f64)> = a.trajectory.iter().map(|r| (r.x, r.y)).collect();
    let svg = svg::render_overlay(&svg::Overlay {
        map: &a.terrain.truth,
        glass: &a.terrain.glass,
        tree: &segments,
        path: path.as_deref(),
        trajectory: &traj,
        start: Some(cfg.start),
        goal: Some(cfg.goal),
    });
    fs::write(dir.join("trajectory.svg"), svg)?;
    Ok(())
}

#[derive(Deserialize)]
struct NodeLine {
    id: usize,
    x: f64,
    y: f64,
    parent: Option<usize>,
}

fn read_tree(path: &Path) -> Result<Vec<([f64; 2], [f64; 2])>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut nodes: Vec<NodeLine> = Vec::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        nodes.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), k + 1))?);
    }
    let pos: std::collections::HashMap<usize, [f64; 2]> = nodes.iter().map(|n| (n.id, [n.x, n.y])).collect();
    Ok(nodes
        .iter()
        .filter_map(|n| n.parent.and_then(|p| pos.get(&p)).map(|&a| (a, [n.x, n.y])))
        .collect())
}

fn read_trajectory(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate().skip(1) {
        let line = line?;
        let mut cols = line.split(',').skip(1);
        let mut next = || -> Result<f64> {
            cols.next()
                .context("short row")?
                .parse::<f64>()
                .with_context(|| format!("{}:{}", path.display(), k + 1))
        };
        out.push((next()?, next()?));
    }
    Ok(out)
}

fn plot_from(from: &Path, dest: &Path) -> Result<()> {
    let map = load_map(&from.join("truth.yaml")).with_context(|| format!("no map dump in {}", from.display()))?;
    let tree = read_tree(&from.join("tree.jsonl"))?;
    let traj = read_trajectory(&from.join("trajectory.csv"))?;
    let path = match fs::read_to_string(from.join("path.json")) {
        Ok(text) => Some(path_poses(&serde_json::from_str::<PathSnapshot>(&text)?)),
        Err(_) => None,
    };
    let scenario = ScenarioConfig::load(&from.join("scenario.yaml")).ok();
    let svg = svg::render_overlay(&svg::Overlay {
        map: &map,
        glass: &[],
        tree: &tree,
        path: path.as_deref(),
        trajectory: &traj,
        start: scenario.as_ref().map(|s| s.start),
        goal: scenario.as_ref().map(|s| GoalPosition::new(s.goal.x, s.goal.y)),
    });
    fs::create_dir_all(dest)?;
    fs::write(dest.join("plot.svg"), svg)?;
    Ok(())
}
