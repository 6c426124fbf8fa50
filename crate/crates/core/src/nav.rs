//! Goal executive: keeps the robot's place in the graph up to date,
//! dispatches the global and local planners, and turns local paths into
//! motion commands.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::geom::{normalize_angle, OccupancyGrid, Point2, Pose2D, Scan2D};
use crate::perception::conflict;
use crate::planning::{
    build_local_grid_within, nearest_traversable, next_target, plan_global, plan_local, GlobalPath,
    LocalPath, PlanConfig, PlanError,
};
use crate::sim::{raycast_scan, LidarParams, MotionCommand, MotionKind, World};
use crate::topo::{LocationId, NavState, TopoConfig, TopoGraph, UpdateKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalSpec {
    pub v_goal: LocationId,
    pub t_goal: Pose2D,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavConfig {
    pub epsilon: f64,
    pub angle_threshold: f64,
    pub forward_speed: f64,
    pub turn_speed: f64,
    pub replan_period: u32,
    pub max_ticks: u32,
    pub waypoint_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            angle_threshold: 0.35,
            forward_speed: 0.15,
            turn_speed: 0.15,
            replan_period: 10,
            max_ticks: 4000,
            waypoint_radius: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NavPhase {
    Planning,
    Following,
    Reached,
    Failed,
}

impl NavPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            NavPhase::Planning => "planning",
            NavPhase::Following => "following",
            NavPhase::Reached => "reached",
            NavPhase::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, NavPhase::Reached | NavPhase::Failed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavStatus {
    pub phase: NavPhase,
    pub reason: String,
}

impl NavStatus {
    fn new(phase: NavPhase, reason: impl Into<String>) -> Self {
        Self {
            phase,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum NavError {
    #[error("path has no waypoints")]
    EmptyPath,
}

/// Goal test: same location and translation error below `epsilon`.
pub fn goal_reached(state: &NavState, goal: &GoalSpec, epsilon: f64) -> bool {
    state.v_cur == goal.v_goal && goal.t_goal.inverse().compose(&state.t_cur).translation_norm() < epsilon
}

/// Index of the active waypoint: the first one after every waypoint the
/// robot is already within `waypoint_radius` of. `None` once the last
/// waypoint is reached.
fn active_waypoint(robot_xy: Point2, waypoints: &[Point2], radius: f64) -> Option<usize> {
    let last_within = waypoints.iter().rposition(|w| w.dist(&robot_xy) <= radius);
    match last_within {
        Some(i) if i + 1 == waypoints.len() => None,
        Some(i) => Some(i + 1),
        None => Some(0),
    }
}

/// One follower decision: drive at the active waypoint if it lies within
/// the angle threshold, otherwise turn towards it; stop at the end.
pub fn follow_step(
    robot_heading: f64,
    robot_xy: Point2,
    path: &LocalPath,
    config: &NavConfig,
) -> Result<MotionCommand, NavError> {
    if path.waypoints.is_empty() {
        return Err(NavError::EmptyPath);
    }
    Ok(match active_waypoint(robot_xy, &path.waypoints, config.waypoint_radius) {
        None => MotionCommand::stop(),
        Some(i) => steer(robot_heading, robot_xy, path.waypoints[i], config),
    })
}

fn steer(heading: f64, from: Point2, to: Point2, config: &NavConfig) -> MotionCommand {
    let alpha = bearing_error(heading, from, to);
    if alpha.abs() <= config.angle_threshold {
        MotionCommand::forward(config.forward_speed.min(from.dist(&to)))
    } else {
        turn_towards(alpha, config)
    }
}

fn bearing_error(heading: f64, from: Point2, to: Point2) -> f64 {
    normalize_angle((to.y - from.y).atan2(to.x - from.x) - heading)
}

fn turn_towards(alpha: f64, config: &NavConfig) -> MotionCommand {
    if alpha > 0.0 {
        MotionCommand::turn_left(config.turn_speed.min(alpha))
    } else {
        MotionCommand::turn_right(config.turn_speed.min(-alpha))
    }
}

/// Heading error the follower turns down to once it has started turning.
pub const ALIGN_TOLERANCE: f64 = 0.02;

/// Path plus progress along it; waypoints are only ever consumed forward.
///
/// Same decision rule as [`follow_step`] with hysteresis: after a turn is
/// triggered, or when a new waypoint becomes active, the follower keeps
/// turning until the heading error is below [`ALIGN_TOLERANCE`].
#[derive(Clone, Debug, PartialEq)]
pub struct Follower {
    pub path: LocalPath,
    next: usize,
    aimed: Option<usize>,
    aligning: bool,
}

impl Follower {
    pub fn new(path: LocalPath) -> Self {
        Self {
            path,
            next: 0,
            aimed: None,
            aligning: false,
        }
    }

    pub fn step(&mut self, heading: f64, xy: Point2, config: &NavConfig) -> MotionCommand {
        let rest = &self.path.waypoints[self.next.min(self.path.waypoints.len())..];
        match active_waypoint(xy, rest, config.waypoint_radius) {
            None => {
                self.next = self.path.waypoints.len();
                MotionCommand::stop()
            }
            Some(i) => {
                self.next += i;
                let to = self.path.waypoints[self.next];
                if self.aimed != Some(self.next) {
                    self.aimed = Some(self.next);
                    self.aligning = true;
                }
                let alpha = bearing_error(heading, xy, to);
                if alpha.abs() > config.angle_threshold {
                    self.aligning = true;
                }
                if self.aligning && alpha.abs() > ALIGN_TOLERANCE {
                    turn_towards(alpha, config)
                } else {
                    self.aligning = false;
                    MotionCommand::forward(config.forward_speed.min(xy.dist(&to)))
                }
            }
        }
    }

    pub fn finished(&self) -> bool {
        self.next >= self.path.waypoints.len()
    }
}

/// One line of the per-tick trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub tick: u32,
    pub phase: NavPhase,
    pub v_cur: Option<LocationId>,
    pub action: MotionCommand,
    pub planning_ms: Option<f64>,
}

/// Trace CSV header: `tick,phase,v_cur,action,magnitude,planning_ms`.
/// `v_cur` is empty for the metric pipeline, `planning_ms` is empty on
/// ticks without a planner call.
pub const TRACE_HEADER: &str = "tick,phase,v_cur,action,magnitude,planning_ms";

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},", self.tick, self.phase.as_str())?;
        if let Some(v) = self.v_cur {
            write!(f, "{v}")?;
        }
        write!(f, ",{},{:.4},", self.action.kind.as_str(), self.action.magnitude)?;
        if let Some(ms) = self.planning_ms {
            write!(f, "{ms:.4}")?;
        }
        Ok(())
    }
}

pub fn write_trace(rows: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Local plan in the union frame, falling back to snapped endpoints and
/// then to no inflation when the robot or the target hugs an obstacle.
fn plan_with_fallbacks(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlanConfig) -> Result<LocalPath, PlanError> {
    match plan_local(grid, start, goal, cfg) {
        Ok(p) => return Ok(p),
        Err(PlanError::StartInObstacle) | Err(PlanError::GoalUnreachable) => {}
        Err(e) => return Err(e),
    }
    let snap = 1.0;
    let s = nearest_traversable(grid, start, cfg, snap);
    let g = nearest_traversable(grid, goal, cfg, snap);
    if let (Some(s), Some(g)) = (s, g) {
        if let Ok(mut p) = plan_local(grid, s, g, cfg) {
            p.waypoints.insert(0, start);
            return Ok(p);
        }
    }
    let bare = PlanConfig {
        inflation_radius: 0.0,
        ..*cfg
    };
    plan_local(grid, start, goal, &bare)
}

/// Topological goal server. Owns the graph and advances one tick per
/// observation.
pub struct NavServer {
    pub graph: TopoGraph,
    pub state: NavState,
    pub topo_cfg: TopoConfig,
    pub plan_cfg: PlanConfig,
    pub cfg: NavConfig,
    goal: Option<GoalSpec>,
    global: Option<GlobalPath>,
    local_grid: Option<(OccupancyGrid, Pose2D)>,
    follower: Option<Follower>,
    target: Option<Pose2D>,
    since_local: u32,
    tick: u32,
    status: NavStatus,
    pub trace: Vec<TraceRow>,
    pub planning_ms: Vec<f64>,
}

impl NavServer {
    pub fn new(graph: TopoGraph, state: NavState, topo_cfg: TopoConfig, plan_cfg: PlanConfig, cfg: NavConfig) -> Self {
        Self {
            graph,
            state,
            topo_cfg,
            plan_cfg,
            cfg,
            goal: None,
            global: None,
            local_grid: None,
            follower: None,
            target: None,
            since_local: 0,
            tick: 0,
            status: NavStatus::new(NavPhase::Planning, "no goal"),
            trace: Vec::new(),
            planning_ms: Vec::new(),
        }
    }

    pub fn submit(&mut self, goal: GoalSpec) {
        self.goal = Some(goal);
        self.global = None;
        self.follower = None;
        self.target = None;
        self.tick = 0;
        self.status = NavStatus::new(NavPhase::Planning, "");
    }

    pub fn status(&self) -> &NavStatus {
        &self.status
    }

    pub fn global_path(&self) -> Option<&GlobalPath> {
        self.global.as_ref()
    }

    /// Current local path and its grid, in the union frame.
    pub fn local_plan(&self) -> Option<(&OccupancyGrid, &LocalPath)> {
        Some((&self.local_grid.as_ref()?.0, &self.follower.as_ref()?.path))
    }

    fn finish(&mut self, phase: NavPhase, reason: &str, planning: Option<f64>) -> (MotionCommand, NavStatus) {
        self.status = NavStatus::new(phase, reason);
        let cmd = MotionCommand::stop();
        self.trace.push(TraceRow {
            tick: self.tick,
            phase,
            v_cur: Some(self.state.v_cur),
            action: cmd,
            planning_ms: planning,
        });
        (cmd, self.status.clone())
    }

    /// Advances by one observation. Terminal statuses are sticky.
    pub fn tick(&mut self, scan: &Scan2D, odom_delta: &Pose2D) -> (MotionCommand, NavStatus) {
        let Some(goal) = self.goal else {
            return (MotionCommand::stop(), NavStatus::new(NavPhase::Failed, "no goal submitted"));
        };
        if self.status.phase.is_terminal() {
            return (MotionCommand::stop(), self.status.clone());
        }
        self.tick += 1;
        if self.tick > self.cfg.max_ticks {
            return self.finish(NavPhase::Failed, "max ticks exceeded", None);
        }

        let prev_v = self.state.v_cur;
        let upd = self
            .graph
            .update_state(&self.state, odom_delta, scan, self.global.as_ref(), &self.topo_cfg);
        self.state = upd.state;
        if goal_reached(&self.state, &goal, self.cfg.epsilon) {
            return self.finish(NavPhase::Reached, "", None);
        }
        if !self.graph.contains(goal.v_goal) {
            return self.finish(NavPhase::Failed, "goal location missing", None);
        }

        let moved = self.state.v_cur != prev_v;
        let path_cut = self.global.as_ref().is_some_and(|p| {
            upd.removed_edges.iter().any(|&(a, b)| p.contains_edge(a, b))
        });
        let mut planning = 0.0;
        let mut planned = false;
        if self.global.is_none() || moved || path_cut {
            let t = Instant::now();
            let res = plan_global(&self.graph, self.state.v_cur, goal.v_goal);
            planning += elapsed_ms(t);
            planned = true;
            match res {
                Ok(p) => self.global = Some(p),
                Err(_) => {
                    self.planning_ms.push(planning);
                    return self.finish(NavPhase::Failed, "Unreachable", Some(planning));
                }
            }
        }
        let path = self.global.as_ref().expect("planned above");
        let target = match next_target(&self.state, &goal, path) {
            Ok(t) => t,
            Err(_) => return self.finish(NavPhase::Failed, "inconsistent path", None),
        };

        let graph_changed = upd.kind != UpdateKind::Stayed || !upd.removed_edges.is_empty();
        let follower_done = self.follower.as_ref().is_none_or(Follower::finished);
        let need_local = self.follower.is_none()
            || moved
            || graph_changed
            || self.target != Some(target)
            || self.since_local >= self.cfg.replan_period
            || follower_done;
        if need_local {
            let t = Instant::now();
            if self.local_grid.is_none() || moved || graph_changed {
                self.local_grid = Some(
                    build_local_grid_within(&self.graph, self.state.v_cur, self.plan_cfg.local_window)
                        .expect("current location exists"),
                );
            }
            let (grid, offset) = self.local_grid.as_ref().expect("built above");
            let start = offset.transform_point(self.state.t_cur.translation());
            let goal_xy = offset.transform_point(target.translation());
            let path = plan_with_fallbacks(grid, start, goal_xy, &self.plan_cfg)
                // no plan on the local grid: head straight for the target
                .unwrap_or(LocalPath {
                    waypoints: vec![start, goal_xy],
                });
            planning += elapsed_ms(t);
            planned = true;
            self.follower = Some(Follower::new(path));
            self.target = Some(target);
            self.since_local = 0;
        } else {
            self.since_local += 1;
        }

        let offset = self.local_grid.as_ref().expect("local grid").1;
        let robot = offset.compose(&self.state.t_cur);
        let cmd = self
            .follower
            .as_mut()
            .expect("follower")
            .step(robot.theta, robot.translation(), &self.cfg);
        let phase = if planned { NavPhase::Planning } else { NavPhase::Following };
        if planned {
            self.planning_ms.push(planning);
        }
        // a finished local path means the next tick replans from scratch
        if cmd.kind == MotionKind::Stop {
            self.since_local = self.cfg.replan_period;
        }
        self.status = NavStatus::new(phase, "");
        self.trace.push(TraceRow {
            tick: self.tick,
            phase,
            v_cur: Some(self.state.v_cur),
            action: cmd,
            planning_ms: planned.then_some(planning),
        });
        (cmd, self.status.clone())
    }
}

/// Resolves a world-frame point to a location and an in-location pose by
/// matching a synthetic scan taken there against every location. The hit
/// with the least free-space conflict wins, provided it is at most
/// `max_conflict`; ties go to the higher score.
pub fn resolve_world_point(
    graph: &TopoGraph,
    world: &World,
    lidar: &LidarParams,
    pose: &Pose2D,
    cfg: &TopoConfig,
    window_xy: f64,
    max_conflict: f64,
) -> Option<(LocationId, Pose2D)> {
    let scan = raycast_scan(world, pose, lidar).ok()?;
    let every = TopoConfig {
        candidates: graph.num_locations(),
        ..*cfg
    };
    let matching = cfg.matching.with_window(window_xy, std::f64::consts::PI);
    graph
        .localize_with(&scan, &every, &matching)
        .into_iter()
        .filter_map(|h| {
            let grid = &graph.location(h.location_id).ok()?.grid;
            let c = conflict(&scan, grid, &h.rel_pose, cfg.location_radius, cfg.conflict_tolerance);
            Some((c, h))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.score.total_cmp(&a.1.score)))
        .filter(|(c, _)| *c <= max_conflict)
        .map(|(_, h)| (h.location_id, h.rel_pose))
}

/// Dead-reckoning navigator on a fixed metric map: plans once on the full
/// grid and replans only when the robot stops making progress.
pub struct MetricNavigator {
    pub grid: OccupancyGrid,
    pub pose: Pose2D,
    pub plan_cfg: PlanConfig,
    pub cfg: NavConfig,
    goal: Point2,
    follower: Option<Follower>,
    tick: u32,
    stalled: u32,
    last: Option<MotionKind>,
    /// Closest estimated approach to the goal, and stall replans since.
    best: f64,
    futile: u32,
    status: NavStatus,
    pub trace: Vec<TraceRow>,
    pub planning_ms: Vec<f64>,
}

/// Ticks of stop or blocked commands before the metric navigator replans.
const STALL_TICKS: u32 = 5;
/// Stall replans without getting `PROGRESS` closer to the goal before the
/// metric navigator gives up.
const MAX_FUTILE_REPLANS: u32 = 20;
const PROGRESS: f64 = 0.5;

impl MetricNavigator {
    pub fn new(grid: OccupancyGrid, start: Pose2D, goal: Point2, plan_cfg: PlanConfig, cfg: NavConfig) -> Self {
        Self {
            grid,
            pose: start,
            plan_cfg,
            cfg,
            goal,
            follower: None,
            tick: 0,
            stalled: 0,
            last: None,
            best: start.translation().dist(&goal),
            futile: 0,
            status: NavStatus::new(NavPhase::Planning, ""),
            trace: Vec::new(),
            planning_ms: Vec::new(),
        }
    }

    pub fn status(&self) -> &NavStatus {
        &self.status
    }

    fn record(&mut self, phase: NavPhase, reason: &str, cmd: MotionCommand, planning: Option<f64>) -> (MotionCommand, NavStatus) {
        self.status = NavStatus::new(phase, reason);
        self.trace.push(TraceRow {
            tick: self.tick,
            phase,
            v_cur: None,
            action: cmd,
            planning_ms: planning,
        });
        (cmd, self.status.clone())
    }

    pub fn tick(&mut self, odom_delta: &Pose2D) -> (MotionCommand, NavStatus) {
        if self.status.phase.is_terminal() {
            return (MotionCommand::stop(), self.status.clone());
        }
        self.tick += 1;
        self.pose = self.pose.compose(odom_delta);
        if self.tick > self.cfg.max_ticks {
            return self.record(NavPhase::Failed, "max ticks exceeded", MotionCommand::stop(), None);
        }
        if self.pose.translation().dist(&self.goal) < self.cfg.epsilon {
            return self.record(NavPhase::Reached, "", MotionCommand::stop(), None);
        }
        let remaining = self.pose.translation().dist(&self.goal);
        if remaining < self.best - PROGRESS {
            self.best = remaining;
            self.futile = 0;
        }
        let mut planning = None;
        if self.follower.is_none() || self.stalled >= STALL_TICKS {
            if self.follower.is_some() {
                self.futile += 1;
                if self.futile > MAX_FUTILE_REPLANS {
                    return self.record(NavPhase::Failed, "stuck", MotionCommand::stop(), None);
                }
            }
            let t = Instant::now();
            let res = plan_with_fallbacks(&self.grid, self.pose.translation(), self.goal, &self.plan_cfg);
            let ms = elapsed_ms(t);
            self.planning_ms.push(ms);
            planning = Some(ms);
            self.stalled = 0;
            match res {
                Ok(p) => self.follower = Some(Follower::new(p)),
                Err(e) => {
                    let reason = format!("{e}");
                    return self.record(NavPhase::Failed, &reason, MotionCommand::stop(), planning);
                }
            }
        }
        let cmd = self
            .follower
            .as_mut()
            .expect("planned")
            .step(self.pose.theta, self.pose.translation(), &self.cfg);
        // a forward command that did not move the robot means it is pressed
        // against an obstacle the map does not show where the robot thinks
        let blocked = self.last == Some(MotionKind::Forward) && odom_delta.translation_norm() < 1e-9;
        if cmd.kind == MotionKind::Stop || blocked {
            self.stalled += 1;
        } else {
            self.stalled = 0;
        }
        self.last = Some(cmd.kind);
        let phase = if planning.is_some() { NavPhase::Planning } else { NavPhase::Following };
        self.record(phase, "", cmd, planning)
    }
}
