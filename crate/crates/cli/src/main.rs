//! `locgraph`: build maps, navigate, run the benchmark and print reports.
//!
//! Exit codes: 0 success, 2 navigation failed, 3 configuration error,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use locgraph::bench::scenario::{default_episodes, default_route, default_world};
use locgraph::bench::{
    compare, episodes_to_text, parse_episodes, parse_route, route_to_text, run_mapping,
    run_metric_episode, run_topo_episode_from, BenchReport, Episode, EpisodeResult, HarnessConfig,
};
use locgraph::config::{apply_harness, check_keys, harness_to_text, KeyValues, HARNESS_KEYS};
use locgraph::nav::{resolve_world_point, write_trace, TraceRow};
use locgraph::sim::World;
use locgraph::{GoalSpec, NavState, OccupancyGrid, Point2, Pose2D, TopoGraph};

const METRIC_MAP_FILE: &str = "metric.grid";

#[derive(Parser)]
#[command(name = "locgraph", version, about = "Topological navigation over a graph of locations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PipelineArg {
    Topo,
    Metric,
}

#[derive(clap::Args)]
struct Common {
    /// World grid file, or `default` for the built-in maze.
    #[arg(long, default_value = "default")]
    world: String,
    /// Harness configuration file (`key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the odometry noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Drive a route and write the resulting map.
    BuildMap {
        #[command(flatten)]
        common: Common,
        /// Route file (`x y theta` per line), or `default`.
        #[arg(long, default_value = "default")]
        route: String,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Navigate from a start pose to a goal point on a saved map.
    Navigate {
        #[command(flatten)]
        common: Common,
        /// Map directory written by `build-map` with the same pipeline.
        #[arg(long)]
        map: PathBuf,
        /// Start pose `x,y,theta` in world coordinates.
        #[arg(long)]
        start: String,
        /// Goal point `x,y` in world coordinates.
        #[arg(long)]
        goal: String,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        /// Per-tick trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Map the world once, then run every episode with both pipelines.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Episode file (`episode = name sx sy stheta gx gy`), or `default`.
        #[arg(long, default_value = "default")]
        episodes: String,
        /// Mapping route file, or `default`.
        #[arg(long, default_value = "default")]
        route: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary table of a report directory.
    Compare {
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the built-in world, route, episodes and configuration.
    ExportDefaults {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Navigation(String),
    Runtime(anyhow::Error),
}

type Result<T> = std::result::Result<T, Failure>;

trait OrConfig<T> {
    fn or_config(self, what: &str) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrConfig<T> for std::result::Result<T, E> {
    fn or_config(self, what: &str) -> Result<T> {
        self.map_err(|e| Failure::Config(e.into().context(what.to_string())))
    }
}

trait OrRuntime<T> {
    fn or_runtime(self, what: &str) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrRuntime<T> for std::result::Result<T, E> {
    fn or_runtime(self, what: &str) -> Result<T> {
        self.map_err(|e| Failure::Runtime(e.into().context(what.to_string())))
    }
}

fn load_world(arg: &str) -> Result<World> {
    if arg == "default" {
        return Ok(default_world());
    }
    let grid = OccupancyGrid::load(arg).or_config(&format!("reading world {arg}"))?;
    World::new(arg, grid).or_config(&format!("world {arg}"))
}

fn load_route(arg: &str) -> Result<Vec<Pose2D>> {
    if arg == "default" {
        return Ok(default_route());
    }
    let text = std::fs::read_to_string(arg).or_config(&format!("reading route {arg}"))?;
    parse_route(&text).or_config(&format!("route {arg}"))
}

fn load_episodes(arg: &str) -> Result<Vec<Episode>> {
    if arg == "default" {
        return Ok(default_episodes());
    }
    let kv = KeyValues::load(arg).or_config(&format!("reading episodes {arg}"))?;
    check_keys(&kv, &["episode"]).or_config(&format!("episodes {arg}"))?;
    let episodes = parse_episodes(&kv).or_config(&format!("episodes {arg}"))?;
    if episodes.is_empty() {
        return Err(Failure::Config(anyhow!("episodes {arg}: no episodes")));
    }
    Ok(episodes)
}

fn load_config(common: &Common) -> Result<HarnessConfig> {
    let mut cfg = HarnessConfig::default();
    if let Some(path) = &common.config {
        let what = format!("config {}", path.display());
        let kv = KeyValues::load(path).or_config(&what)?;
        check_keys(&kv, HARNESS_KEYS).or_config(&what)?;
        apply_harness(&kv, &mut cfg).or_config(&what)?;
    }
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

fn parse_numbers(arg: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = arg
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .ok()
        .filter(|v: &Vec<f64>| v.len() == n && v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Failure::Config(anyhow!("{what}: expected {n} comma-separated numbers, got {arg:?}")))?;
    Ok(v)
}

fn build_map(common: &Common, route: &str, pipeline: PipelineArg, out: &Path) -> Result<()> {
    let world = load_world(&common.world)?;
    let route = load_route(route)?;
    let cfg = load_config(common)?;
    let run = run_mapping(&world, &route, &cfg).or_runtime("mapping")?;
    match pipeline {
        PipelineArg::Topo => {
            run.graph.save(out).or_runtime("writing graph")?;
            println!(
                "topological map: {} locations, {} edges, {} bytes in {}",
                run.graph.num_locations(),
                run.graph.num_edges(),
                run.topo_bytes(),
                out.display()
            );
        }
        PipelineArg::Metric => {
            std::fs::create_dir_all(out).or_runtime("creating output directory")?;
            run.metric.save(out.join(METRIC_MAP_FILE)).or_runtime("writing metric map")?;
            println!("metric map: {} bytes in {}", run.metric_bytes(), out.display());
        }
    }
    Ok(())
}

fn print_result(r: &EpisodeResult) {
    println!(
        "{} {}: {} after {} ticks, traveled {:.2} m, shortest {:.2} m, efficiency {:.3}, final error {:.3} m{}",
        r.pipeline.as_str(),
        r.episode,
        if r.success { "reached" } else { "failed" },
        r.ticks,
        r.traveled,
        r.shortest,
        r.efficiency,
        r.final_error,
        if r.reason.is_empty() { String::new() } else { format!(" ({})", r.reason) }
    );
}

fn navigate(
    common: &Common,
    map: &Path,
    start: &str,
    goal: &str,
    pipeline: PipelineArg,
    trace: Option<&Path>,
) -> Result<()> {
    let world = load_world(&common.world)?;
    let cfg = load_config(common)?;
    let s = parse_numbers(start, 3, "--start")?;
    let g = parse_numbers(goal, 2, "--goal")?;
    let episode = Episode {
        name: "cli".into(),
        start: Pose2D::new(s[0], s[1], s[2]),
        goal: Point2::new(g[0], g[1]),
    };
    if !world.is_free(episode.start.translation()) {
        return Err(Failure::Config(anyhow!("start ({}, {}) is not in free space", s[0], s[1])));
    }
    let (result, rows): (EpisodeResult, Vec<TraceRow>) = match pipeline {
        PipelineArg::Topo => {
            let graph = TopoGraph::load(map).or_config(&format!("reading graph {}", map.display()))?;
            let resolve = |pose: &Pose2D| {
                resolve_world_point(
                    &graph,
                    &world,
                    &cfg.lidar,
                    pose,
                    &cfg.topo,
                    cfg.resolve_window_xy,
                    cfg.resolve_max_conflict,
                )
            };
            let (v_start, t_start) = resolve(&episode.start)
                .ok_or_else(|| Failure::Navigation("start outside the map".into()))?;
            let (v_goal, t_goal) = resolve(&Pose2D::new(g[0], g[1], 0.0))
                .ok_or_else(|| Failure::Navigation("goal outside the map".into()))?;
            let state = NavState {
                v_cur: v_start,
                t_cur: t_start,
            };
            let ep = run_topo_episode_from(&world, &graph, state, GoalSpec { v_goal, t_goal }, &episode, &cfg);
            (ep.result, ep.trace)
        }
        PipelineArg::Metric => {
            let path = map.join(METRIC_MAP_FILE);
            let grid = OccupancyGrid::load(&path).or_config(&format!("reading metric map {}", path.display()))?;
            run_metric_episode(&world, &grid, &episode, &cfg)
        }
    };
    if let Some(path) = trace {
        let file = std::fs::File::create(path).or_runtime("creating trace file")?;
        write_trace(&rows, std::io::BufWriter::new(file)).or_runtime("writing trace")?;
    }
    print_result(&result);
    if result.success {
        Ok(())
    } else {
        Err(Failure::Navigation(result.reason))
    }
}

fn bench(common: &Common, episodes: &str, route: &str, out: &Path) -> Result<()> {
    let world = load_world(&common.world)?;
    let episodes = load_episodes(episodes)?;
    let route = load_route(route)?;
    let cfg = load_config(common)?;
    for e in &episodes {
        if !world.is_free(e.start.translation()) {
            return Err(Failure::Config(anyhow!("episode {}: start is not in free space", e.name)));
        }
    }
    let run = run_mapping(&world, &route, &cfg).or_runtime("mapping")?;
    let report = compare(&world, &run, &episodes, &cfg).or_runtime("benchmark")?;
    report.write(out).or_runtime("writing report")?;
    for r in &report.rows {
        print_result(r);
    }
    print!("{}", report.table());
    Ok(())
}

fn show_report(dir: &Path) -> Result<()> {
    let report = BenchReport::load(dir).or_config(&format!("reading report {}", dir.display()))?;
    print!("{}", report.table());
    Ok(())
}

fn export_defaults(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).or_runtime("creating output directory")?;
    let write = |name: &str, text: String| std::fs::write(out.join(name), text).or_runtime(&format!("writing {name}"));
    write("world.grid", default_world().truth.to_text())?;
    write("route.txt", route_to_text(&default_route()))?;
    write("episodes.cfg", episodes_to_text(&default_episodes()))?;
    write("config.cfg", harness_to_text(&HarnessConfig::default()))?;
    println!("wrote world.grid, route.txt, episodes.cfg and config.cfg to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildMap {
            common,
            route,
            pipeline,
            out,
        } => build_map(&common, &route, pipeline, &out),
        Command::Navigate {
            common,
            map,
            start,
            goal,
            pipeline,
            trace,
        } => navigate(&common, &map, &start, &goal, pipeline, trace.as_deref()),
        Command::Bench {
            common,
            episodes,
            route,
            out,
        } => bench(&common, &episodes, &route, &out),
        Command::Compare { report } => show_report(&report),
        Command::ExportDefaults { out } => export_defaults(&out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Navigation(reason)) => {
            eprintln!("navigation failed: {reason}");
            ExitCode::from(2)
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
