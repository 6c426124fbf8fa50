//! Benchmark harness: a mapping run that feeds both pipelines identical
//! odometry, navigation episodes for each pipeline, and the comparison
//! report.

pub mod report;
pub mod scenario;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::geom::{normalize_angle, Cell, OccupancyGrid, Point2, Pose2D};
use crate::metric::{metric_map_bytes, GlobalMetricMap};
use crate::nav::{GoalSpec, MetricNavigator, NavConfig, NavPhase, NavServer, NavStatus, TraceRow};
use crate::planning::PlanConfig;
use crate::sim::{raycast_scan, step, LidarParams, MotionCommand, NoiseParams, Odometry, SimError, World};
use crate::topo::{LocationId, NavState, TopoConfig, TopoGraph, UpdateKind};

pub use report::{BenchReport, EpisodeResult, Pipeline, PipelineSummary};
pub use scenario::Episode;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("mapping aborted at tick {tick}: no motion for {stuck} ticks near ({x:.2}, {y:.2})")]
    MappingAborted { tick: u64, stuck: u32, x: f64, y: f64 },
    #[error("route has no poses")]
    EmptyRoute,
    #[error("no episodes")]
    NoEpisodes,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("report: {0}")]
    Report(String),
}

/// Every tunable the harness uses.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub noise: NoiseParams,
    pub lidar: LidarParams,
    pub topo: TopoConfig,
    pub plan: PlanConfig,
    pub nav: NavConfig,
    pub metric_resolution: f64,
    /// Ticks without motion before a mapping run is aborted.
    pub stuck_ticks: u32,
    /// Translation half-window for resolving world points to locations.
    pub resolve_window_xy: f64,
    /// Resolved world points must conflict with their location at most this much.
    pub resolve_max_conflict: f64,
    /// An episode succeeds when the robot stops this close to the goal.
    pub success_radius: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::none(),
            lidar: LidarParams::default(),
            topo: TopoConfig::default(),
            plan: PlanConfig::default(),
            // both navigators aim tighter than the success radius so that
            // estimation error at the stopping point does not decide the outcome
            nav: NavConfig {
                epsilon: 0.15,
                waypoint_radius: 0.1,
                ..NavConfig::default()
            },
            metric_resolution: 0.1,
            stuck_ticks: 200,
            resolve_window_xy: 6.0,
            resolve_max_conflict: 0.05,
            success_radius: 0.3,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, v: String| {
            Err(ConfigError::Value {
                key: key.into(),
                value: v,
            })
        };
        let positive: [(&str, f64); 14] = [
            ("lidar.max_range", self.lidar.max_range),
            ("lidar.fov", self.lidar.fov),
            ("match.step_xy", self.topo.matching.step_xy),
            ("match.step_theta", self.topo.matching.step_theta),
            ("topo.grid_resolution", self.topo.grid_resolution),
            ("topo.location_radius", self.topo.location_radius),
            ("nav.epsilon", self.nav.epsilon),
            ("nav.angle_threshold", self.nav.angle_threshold),
            ("nav.forward_speed", self.nav.forward_speed),
            ("nav.turn_speed", self.nav.turn_speed),
            ("metric.resolution", self.metric_resolution),
            ("resolve.window_xy", self.resolve_window_xy),
            ("bench.success_radius", self.success_radius),
            ("plan.local_window", self.plan.local_window),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, v.to_string());
            }
        }
        let non_negative: [(&str, f64); 12] = [
            ("resolve.max_conflict", self.resolve_max_conflict),
            ("noise.trans_sigma", self.noise.trans_sigma),
            ("noise.rot_sigma", self.noise.rot_sigma),
            ("match.window_xy", self.topo.matching.window_xy),
            ("match.window_theta", self.topo.matching.window_theta),
            ("topo.min_new_location_dist", self.topo.min_new_location_dist),
            ("topo.track_window_xy", self.topo.track_window_xy),
            ("topo.neighbor_window_xy", self.topo.neighbor_window_xy),
            ("plan.inflation_radius", self.plan.inflation_radius),
            ("topo.max_conflict", self.topo.max_conflict),
            ("topo.conflict_tolerance", self.topo.conflict_tolerance),
            ("nav.waypoint_radius", self.nav.waypoint_radius),
        ];
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(k, v.to_string());
            }
        }
        for (k, v) in [
            ("match.score_threshold", self.topo.matching.score_threshold),
            ("topo.overlap_threshold", self.topo.overlap_threshold),
            ("topo.recognition_score", self.topo.recognition_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(k, v.to_string());
            }
        }
        if self.lidar.num_rays == 0 {
            return bad("lidar.num_rays", "0".into());
        }
        if self.topo.descriptor_dim < 2 {
            return bad("descriptor.dim", self.topo.descriptor_dim.to_string());
        }
        if self.topo.candidates == 0 {
            return bad("topo.candidates", "0".into());
        }
        if self.nav.max_ticks == 0 {
            return bad("nav.max_ticks", "0".into());
        }
        Ok(())
    }
}

/// Heading tolerance the mapping driver turns to before moving.
const DRIVE_ALIGN: f64 = 1e-9;
/// Distance at which a route waypoint counts as reached.
const DRIVE_ARRIVE: f64 = 1e-6;

/// Drives the true robot along a route and feeds every observation to
/// both pipelines. Both see the same odometry stream.
pub struct Mapper<'w> {
    pub world: &'w World,
    pub cfg: HarnessConfig,
    pub truth: Pose2D,
    /// Dead-reckoned pose; the metric map is built in this frame.
    pub odom_pose: Pose2D,
    pub graph: TopoGraph,
    pub state: NavState,
    pub metric: GlobalMetricMap,
    pub ticks: u64,
    pub traveled: f64,
    /// Locations created by the topological pipeline, initial one included.
    pub locations_created: usize,
    /// True world pose of each location's observation point.
    pub location_truth: BTreeMap<LocationId, Pose2D>,
    /// Extra metric map fed alongside `metric` while set, e.g. one per lap.
    pub side_metric: Option<GlobalMetricMap>,
    odometry: Odometry,
}

impl<'w> Mapper<'w> {
    /// Starts at `start` with the initial observation already recorded.
    pub fn new(world: &'w World, start: Pose2D, cfg: &HarnessConfig) -> Result<Self, BenchError> {
        let scan = raycast_scan(world, &start, &cfg.lidar)?;
        let mut graph = TopoGraph::new();
        let v0 = graph.add_location(&scan, &cfg.topo);
        let mut metric = GlobalMetricMap::with_origin(cfg.metric_resolution, Pose2D::identity());
        metric.integrate_scan(&start, &scan);
        Ok(Self {
            world,
            cfg: cfg.clone(),
            truth: start,
            odom_pose: start,
            graph,
            state: NavState {
                v_cur: v0,
                t_cur: Pose2D::identity(),
            },
            metric,
            ticks: 0,
            traveled: 0.0,
            locations_created: 1,
            location_truth: BTreeMap::from([(v0, start)]),
            side_metric: None,
            odometry: Odometry::new(cfg.noise),
        })
    }

    fn command_towards(&self, target: Point2) -> Option<MotionCommand> {
        let dx = target.x - self.truth.x;
        let dy = target.y - self.truth.y;
        let dist = dx.hypot(dy);
        if dist < DRIVE_ARRIVE {
            return None;
        }
        let alpha = normalize_angle(dy.atan2(dx) - self.truth.theta);
        let turn = self.cfg.nav.turn_speed;
        Some(if alpha.abs() > DRIVE_ALIGN {
            if alpha > 0.0 {
                MotionCommand::turn_left(turn.min(alpha))
            } else {
                MotionCommand::turn_right(turn.min(-alpha))
            }
        } else {
            MotionCommand::forward(self.cfg.nav.forward_speed.min(dist))
        })
    }

    /// Executes one command and feeds the resulting observation.
    pub fn apply(&mut self, cmd: &MotionCommand) -> Result<UpdateKind, BenchError> {
        let next = step(&self.truth, cmd, self.world);
        let true_delta = self.truth.between(&next);
        self.traveled += true_delta.translation_norm();
        self.truth = next;
        self.ticks += 1;
        let odom = self.odometry.measure(&true_delta);
        self.odom_pose = self.odom_pose.compose(&odom);
        let scan = raycast_scan(self.world, &self.truth, &self.cfg.lidar)?;
        self.metric.integrate_scan(&self.odom_pose, &scan);
        if let Some(side) = &mut self.side_metric {
            side.integrate_scan(&self.odom_pose, &scan);
        }
        let upd = self
            .graph
            .update_state(&self.state, &odom, &scan, None, &self.cfg.topo);
        self.state = upd.state;
        if upd.kind == UpdateKind::NewLocation {
            self.locations_created += 1;
            self.location_truth.insert(upd.state.v_cur, self.truth);
        }
        Ok(upd.kind)
    }

    /// Turns in place, then drives straight to `target`.
    pub fn drive_to(&mut self, target: Point2) -> Result<(), BenchError> {
        let mut stuck = 0u32;
        while let Some(cmd) = self.command_towards(target) {
            let before = self.truth;
            self.apply(&cmd)?;
            if before == self.truth {
                stuck += 1;
                if stuck >= self.cfg.stuck_ticks {
                    return Err(BenchError::MappingAborted {
                        tick: self.ticks,
                        stuck,
                        x: self.truth.x,
                        y: self.truth.y,
                    });
                }
            } else {
                stuck = 0;
            }
        }
        Ok(())
    }

    pub fn drive_route(&mut self, waypoints: &[Pose2D]) -> Result<(), BenchError> {
        for p in waypoints {
            self.drive_to(p.translation())?;
        }
        Ok(())
    }
}

/// Both maps after a mapping run.
pub struct MappingRun {
    pub graph: TopoGraph,
    pub location_truth: BTreeMap<LocationId, Pose2D>,
    pub metric: GlobalMetricMap,
    pub ticks: u64,
    pub traveled: f64,
}

impl MappingRun {
    pub fn topo_bytes(&self) -> usize {
        self.graph.serialized_bytes()
    }

    pub fn metric_bytes(&self) -> usize {
        metric_map_bytes(&self.metric)
    }
}

/// Drives `route` (first pose is the start) and returns both maps.
pub fn run_mapping(world: &World, route: &[Pose2D], cfg: &HarnessConfig) -> Result<MappingRun, BenchError> {
    let (start, rest) = route.split_first().ok_or(BenchError::EmptyRoute)?;
    let mut m = Mapper::new(world, *start, cfg)?;
    m.drive_route(rest)?;
    Ok(MappingRun {
        graph: m.graph,
        location_truth: m.location_truth,
        metric: m.metric,
        ticks: m.ticks,
        traveled: m.traveled,
    })
}

/// Per-lap results of driving a closed loop repeatedly.
pub struct LoopRun {
    /// Locations created during each lap.
    pub new_locations: Vec<usize>,
    /// Thresholded metric map built from each lap's observations alone,
    /// all in the same odometry frame.
    pub lap_maps: Vec<OccupancyGrid>,
    pub graph: TopoGraph,
}

/// Drives the closed loop `lap` (first pose is the start and the end)
/// `laps` times.
pub fn run_loop(world: &World, lap: &[Pose2D], laps: usize, cfg: &HarnessConfig) -> Result<LoopRun, BenchError> {
    let (start, rest) = lap.split_first().ok_or(BenchError::EmptyRoute)?;
    let mut m = Mapper::new(world, *start, cfg)?;
    let mut new_locations = Vec::with_capacity(laps);
    let mut lap_maps = Vec::with_capacity(laps);
    for _ in 0..laps {
        let before = m.locations_created;
        m.side_metric = Some(GlobalMetricMap::with_origin(cfg.metric_resolution, Pose2D::identity()));
        m.drive_route(rest)?;
        m.drive_to(start.translation())?;
        new_locations.push(m.locations_created - before);
        lap_maps.push(m.side_metric.take().expect("set above").thresholded());
    }
    Ok(LoopRun {
        new_locations,
        lap_maps,
        graph: m.graph,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ground-truth shortest path length between the cells containing `a` and
/// `b`: Dijkstra over free cells, 8-connected, diagonal cost √2, no
/// diagonal step past an occupied corner. `None` if either cell is blocked
/// or no path exists.
pub fn shortest_path_length(grid: &OccupancyGrid, a: Point2, b: Point2) -> Option<f64> {
    let free = |ix: i64, iy: i64| grid.get(ix, iy) == Some(Cell::Free);
    let (sx, sy) = grid.coord_to_index(a);
    let (gx, gy) = grid.coord_to_index(b);
    if !free(sx, sy) || !free(gx, gy) {
        return None;
    }
    let w = grid.width as i64;
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let mut dist = vec![f64::INFINITY; grid.cells.len()];
    let mut heap = BinaryHeap::new();
    dist[idx(sx, sy)] = 0.0;
    heap.push(HeapEntry(0.0, idx(sx, sy)));
    let goal = idx(gx, gy);
    while let Some(HeapEntry(d, i)) = heap.pop() {
        if i == goal {
            return Some(d * grid.resolution);
        }
        if d > dist[i] {
            continue;
        }
        let (x, y) = (i as i64 % w, i as i64 / w);
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(free(x + dx, y) && free(x, y + dy)) {
                    continue;
                }
                let nd = d + if diag { SQRT_2 } else { 1.0 };
                let j = idx(x + dx, y + dy);
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(HeapEntry(nd, j));
                }
            }
        }
    }
    None
}

/// `shortest / traveled`, capped at 1, or 0 on failure.
pub fn efficiency(success: bool, shortest: f64, traveled: f64) -> f64 {
    if !success {
        0.0
    } else if traveled <= shortest {
        1.0
    } else {
        shortest / traveled
    }
}

/// Ground-truth metrics an episode is judged by.
struct Ledger {
    truth: Pose2D,
    traveled: f64,
    odometry: Odometry,
}

impl Ledger {
    /// Executes `cmd` and returns the odometry reading of the motion.
    fn advance(&mut self, world: &World, cmd: &MotionCommand) -> Pose2D {
        let next = step(&self.truth, cmd, world);
        let delta = self.truth.between(&next);
        self.traveled += delta.translation_norm();
        self.truth = next;
        self.odometry.measure(&delta)
    }
}

fn finish(
    episode: &Episode,
    pipeline: Pipeline,
    world: &World,
    status: &NavStatus,
    ledger: &Ledger,
    ticks: u32,
    planning_ms: Vec<f64>,
    cfg: &HarnessConfig,
) -> EpisodeResult {
    let shortest = shortest_path_length(&world.truth, episode.start.translation(), episode.goal).unwrap_or(f64::NAN);
    let final_error = ledger.truth.translation().dist(&episode.goal);
    let success = status.phase == NavPhase::Reached && final_error < cfg.success_radius;
    let reason = if status.phase == NavPhase::Reached && !success {
        "reached by estimate only".to_string()
    } else {
        status.reason.clone()
    };
    EpisodeResult {
        episode: episode.name.clone(),
        pipeline,
        success,
        reason,
        ticks,
        traveled: ledger.traveled,
        shortest,
        efficiency: efficiency(success, shortest, ledger.traveled),
        final_error,
        planning_ms,
    }
}

fn failed(episode: &Episode, pipeline: Pipeline, world: &World, reason: &str, cfg: &HarnessConfig) -> EpisodeResult {
    let ledger = Ledger {
        truth: episode.start,
        traveled: 0.0,
        odometry: Odometry::new(cfg.noise),
    };
    let status = NavStatus {
        phase: NavPhase::Failed,
        reason: reason.into(),
    };
    finish(episode, pipeline, world, &status, &ledger, 0, Vec::new(), cfg)
}

/// Full per-tick record of a topological episode.
pub struct TopoEpisode {
    pub result: EpisodeResult,
    pub trace: Vec<TraceRow>,
}

/// Graph coordinates of a world pose, from the true observation poses
/// recorded while mapping: among locations whose grid holds the pose in a
/// free cell, the one observed nearest to it. Ties go to the lower id.
pub fn resolve_by_truth(run: &MappingRun, pose: &Pose2D) -> Option<(LocationId, Pose2D)> {
    run.location_truth
        .iter()
        .filter_map(|(&id, observed)| {
            let rel = observed.inverse().compose(pose);
            let grid = &run.graph.location(id).ok()?.grid;
            let (ix, iy) = grid.coord_to_index(rel.translation());
            (grid.get(ix, iy) == Some(Cell::Free)).then_some((rel.translation_norm(), id, rel))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id, rel)| (id, rel))
}

/// Navigates the topological pipeline of `run` from `episode.start` to
/// `episode.goal`, both resolved with [`resolve_by_truth`]: the metric
/// baseline is likewise handed true coordinates in its map frame.
pub fn run_topo_episode(world: &World, run: &MappingRun, episode: &Episode, cfg: &HarnessConfig) -> TopoEpisode {
    let Some((v_start, t_start)) = resolve_by_truth(run, &episode.start) else {
        return TopoEpisode {
            result: failed(episode, Pipeline::Topo, world, "start outside the map", cfg),
            trace: Vec::new(),
        };
    };
    let goal_pose = Pose2D::new(episode.goal.x, episode.goal.y, 0.0);
    let Some((v_goal, t_goal)) = resolve_by_truth(run, &goal_pose) else {
        return TopoEpisode {
            result: failed(episode, Pipeline::Topo, world, "goal outside the map", cfg),
            trace: Vec::new(),
        };
    };
    let start = NavState {
        v_cur: v_start,
        t_cur: t_start,
    };
    run_topo_episode_from(world, &run.graph, start, GoalSpec { v_goal, t_goal }, episode, cfg)
}

/// Navigates `graph` from a known graph state towards `goal`; `episode`
/// supplies the true start pose and the goal point for scoring.
pub fn run_topo_episode_from(
    world: &World,
    graph: &TopoGraph,
    start: NavState,
    goal: GoalSpec,
    episode: &Episode,
    cfg: &HarnessConfig,
) -> TopoEpisode {
    let mut server = NavServer::new(graph.clone(), start, cfg.topo, cfg.plan, cfg.nav);
    server.submit(goal);
    let mut ledger = Ledger {
        truth: episode.start,
        traveled: 0.0,
        odometry: Odometry::new(cfg.noise),
    };
    let mut odom = Pose2D::identity();
    let mut ticks = 0;
    let status = loop {
        let scan = match raycast_scan(world, &ledger.truth, &cfg.lidar) {
            Ok(s) => s,
            Err(e) => {
                break NavStatus {
                    phase: NavPhase::Failed,
                    reason: e.to_string(),
                }
            }
        };
        let (cmd, status) = server.tick(&scan, &odom);
        ticks += 1;
        if status.phase.is_terminal() {
            break status;
        }
        odom = ledger.advance(world, &cmd);
    };
    let planning = std::mem::take(&mut server.planning_ms);
    TopoEpisode {
        result: finish(episode, Pipeline::Topo, world, &status, &ledger, ticks, planning, cfg),
        trace: std::mem::take(&mut server.trace),
    }
}

/// Navigates the metric baseline on the thresholded map `grid`.
pub fn run_metric_episode(world: &World, grid: &OccupancyGrid, episode: &Episode, cfg: &HarnessConfig) -> (EpisodeResult, Vec<TraceRow>) {
    let mut nav = MetricNavigator::new(grid.clone(), episode.start, episode.goal, cfg.plan, cfg.nav);
    let mut ledger = Ledger {
        truth: episode.start,
        traveled: 0.0,
        odometry: Odometry::new(cfg.noise),
    };
    let mut odom = Pose2D::identity();
    let mut ticks = 0;
    let status = loop {
        let (cmd, status) = nav.tick(&odom);
        ticks += 1;
        if status.phase.is_terminal() {
            break status;
        }
        odom = ledger.advance(world, &cmd);
    };
    let planning = std::mem::take(&mut nav.planning_ms);
    let result = finish(episode, Pipeline::Metric, world, &status, &ledger, ticks, planning, cfg);
    (result, std::mem::take(&mut nav.trace))
}

/// Runs both pipelines on every episode with the same noise seed.
pub fn compare(world: &World, run: &MappingRun, episodes: &[Episode], cfg: &HarnessConfig) -> Result<BenchReport, BenchError> {
    if episodes.is_empty() {
        return Err(BenchError::NoEpisodes);
    }
    let grid = run.metric.thresholded();
    let mut rows = Vec::with_capacity(2 * episodes.len());
    for ep in episodes {
        rows.push(run_topo_episode(world, run, ep, cfg).result);
        rows.push(run_metric_episode(world, &grid, ep, cfg).0);
    }
    Ok(BenchReport {
        rows,
        topo_map_bytes: run.topo_bytes() as u64,
        metric_map_bytes: run.metric_bytes() as u64,
    })
}

/// Episode files: `episode = name sx sy stheta gx gy`, one per episode,
/// in file order. Other keys are ignored.
pub fn parse_episodes(kv: &KeyValues) -> Result<Vec<Episode>, ConfigError> {
    kv.all("episode")
        .map(|v| {
            let bad = || ConfigError::Value {
                key: "episode".into(),
                value: v.into(),
            };
            let f: Vec<&str> = v.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let n = f[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            if n.iter().any(|x| !x.is_finite()) {
                return Err(bad());
            }
            Ok(Episode {
                name: f[0].to_string(),
                start: Pose2D::new(n[0], n[1], n[2]),
                goal: Point2::new(n[3], n[4]),
            })
        })
        .collect()
}

pub fn episodes_to_text(episodes: &[Episode]) -> String {
    episodes
        .iter()
        .map(|e| {
            format!(
                "episode = {} {} {} {} {} {}\n",
                e.name, e.start.x, e.start.y, e.start.theta, e.goal.x, e.goal.y
            )
        })
        .collect()
}

/// Route files: one `x y theta` pose per line, `#` comments allowed.
pub fn parse_route(text: &str) -> Result<Vec<Pose2D>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::Syntax {
                line: n + 1,
                msg: "expected three numbers".into(),
            })?;
        if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::Syntax {
                line: n + 1,
                msg: "expected x y theta".into(),
            });
        }
        out.push(Pose2D::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

pub fn route_to_text(route: &[Pose2D]) -> String {
    route
        .iter()
        .map(|p| format!("{} {} {}\n", p.x, p.y, p.theta))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_room(n: usize) -> World {
        let mut g = OccupancyGrid::filled(0.1, Pose2D::identity(), n, n, Cell::Free);
        for i in 0..n as i64 {
            for (x, y) in [(i, 0), (i, n as i64 - 1), (0, i), (n as i64 - 1, i)] {
                g.set(x, y, Cell::Occupied);
            }
        }
        World::new("room", g).unwrap()
    }

    #[test]
    fn efficiency_arithmetic() {
        assert!((efficiency(true, 10.0, 12.5) - 0.8).abs() < 1e-12);
        assert_eq!(efficiency(true, 0.0, 0.0), 1.0);
        assert_eq!(efficiency(true, 5.0, 4.9), 1.0);
        assert_eq!(efficiency(false, 10.0, 12.5), 0.0);
    }

    #[test]
    fn shortest_path_cases() {
        let w = open_room(50);
        let g = &w.truth;
        let d = shortest_path_length(g, Point2::new(1.0, 1.0), Point2::new(4.0, 1.0)).unwrap();
        assert!((d - 3.0).abs() < 1e-9);
        let d = shortest_path_length(g, Point2::new(1.0, 1.0), Point2::new(4.0, 4.0)).unwrap();
        assert!((d - 30.0 * SQRT_2 * 0.1).abs() < 1e-9);
        assert_eq!(shortest_path_length(g, Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)), None);
        assert_eq!(shortest_path_length(g, Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)), Some(0.0));
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = OccupancyGrid::filled(1.0, Pose2D::identity(), 3, 3, Cell::Free);
        g.set(1, 0, Cell::Occupied);
        g.set(0, 1, Cell::Occupied);
        assert_eq!(shortest_path_length(&g, Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)), None);
    }

    #[test]
    fn single_pose_route_keeps_initial_observation() {
        let w = open_room(80);
        let run = run_mapping(&w, &[Pose2D::new(4.0, 4.0, 0.0)], &HarnessConfig::default()).unwrap();
        assert_eq!(run.graph.num_locations(), 1);
        assert_eq!(run.ticks, 0);
        assert!(run.metric.thresholded().count(Cell::Occupied) > 0);
        assert!(matches!(run_mapping(&w, &[], &HarnessConfig::default()), Err(BenchError::EmptyRoute)));
    }

    #[test]
    fn blocked_route_aborts() {
        let w = open_room(80);
        let mut cfg = HarnessConfig::default();
        cfg.stuck_ticks = 20;
        let route = [Pose2D::new(4.0, 4.0, 0.0), Pose2D::new(9.0, 4.0, 0.0)];
        assert!(matches!(run_mapping(&w, &route, &cfg), Err(BenchError::MappingAborted { .. })));
    }

    #[test]
    fn start_equals_goal_is_trivial_success() {
        let w = open_room(80);
        let start = Pose2D::new(4.0, 4.0, 0.3);
        let run = run_mapping(&w, &[start], &HarnessConfig::default()).unwrap();
        let ep = Episode {
            name: "here".into(),
            start,
            goal: start.translation(),
        };
        let report = compare(&w, &run, &[ep], &HarnessConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert!(r.success, "{r:?}");
            assert!(r.traveled < 1e-9);
            assert_eq!(r.efficiency, 1.0);
        }
    }

    #[test]
    fn text_formats_round_trip() {
        let eps = scenario::default_episodes();
        let kv = KeyValues::parse(&episodes_to_text(&eps)).unwrap();
        assert_eq!(parse_episodes(&kv).unwrap(), eps);
        let route = scenario::default_route();
        assert_eq!(parse_route(&route_to_text(&route)).unwrap(), route);
        assert!(parse_route("1 2\n").is_err());
        let kv = KeyValues::parse("episode = a 1 2 3 4").unwrap();
        assert!(parse_episodes(&kv).is_err());
    }

    #[test]
    fn validate_rejects_bad_values() {
        assert!(HarnessConfig::default().validate().is_ok());
        let mut c = HarnessConfig::default();
        c.topo.overlap_threshold = 1.5;
        assert!(c.validate().is_err());
        let mut c = HarnessConfig::default();
        c.lidar.num_rays = 0;
        assert!(c.validate().is_err());
        let mut c = HarnessConfig::default();
        c.noise.trans_sigma = f64::NAN;
        assert!(c.validate().is_err());
    }
}
