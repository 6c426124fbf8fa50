//! Global routing over the location graph and any-angle local planning on
//! occupancy grids.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::geom::{walk_cells, Cell, OccupancyGrid, Point2, Pose2D};
use crate::nav::GoalSpec;
use crate::topo::{LocationId, NavState, TopoEdge, TopoGraph};

/// Added to every edge weight so zero-length edges still cost something.
pub const EDGE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown location {0}")]
    UnknownLocation(LocationId),
    #[error("no route between the locations")]
    Unreachable,
    #[error("goal cannot be reached on the grid")]
    GoalUnreachable,
    #[error("start lies in an obstacle")]
    StartInObstacle,
    #[error("path does not depart the current location")]
    InconsistentPath,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanConfig {
    /// Obstacles are grown by this radius before local planning.
    pub inflation_radius: f64,
    /// Neighbor grids are clipped to this distance from the current
    /// location's observation point when building the local grid.
    pub local_window: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            inflation_radius: 0.2,
            local_window: 20.0,
        }
    }
}

/// Chain of edges, each oriented so that its `u` is the previous edge's `v`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalPath {
    pub edges: Vec<TopoEdge>,
}

impl GlobalPath {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.edges.iter().map(edge_weight).sum()
    }

    /// Vertex sequence, starting at the first edge's `u`.
    pub fn vertices(&self) -> Vec<LocationId> {
        let mut out: Vec<LocationId> = self.edges.first().map(|e| e.u).into_iter().collect();
        out.extend(self.edges.iter().map(|e| e.v));
        out
    }

    pub fn contains_edge(&self, a: LocationId, b: LocationId) -> bool {
        self.edges
            .iter()
            .any(|e| (e.u == a && e.v == b) || (e.u == b && e.v == a))
    }
}

pub fn edge_weight(e: &TopoEdge) -> f64 {
    e.t_uv.translation_norm() + EDGE_EPSILON
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalPath {
    pub waypoints: Vec<Point2>,
}

impl LocalPath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].dist(&w[1])).sum()
    }
}

/// Search label: path cost plus the vertex sequence for tie-breaking.
#[derive(Clone, Debug, PartialEq)]
struct Label {
    cost: f64,
    seq: Vec<LocationId>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-weight edge chain from `start` to `goal`; equal weights go to
/// the lexicographically smallest vertex sequence.
pub fn plan_global(graph: &TopoGraph, start: LocationId, goal: LocationId) -> Result<GlobalPath, PlanError> {
    for id in [start, goal] {
        if !graph.contains(id) {
            return Err(PlanError::UnknownLocation(id));
        }
    }
    if start == goal {
        return Ok(GlobalPath::default());
    }
    let mut adj: BTreeMap<LocationId, Vec<TopoEdge>> = BTreeMap::new();
    for e in graph.edges() {
        for from in [e.u, e.v] {
            adj.entry(from).or_default().push(e.oriented_from(from).expect("endpoint"));
        }
    }
    let mut best: BTreeMap<LocationId, Label> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let first = Label {
        cost: 0.0,
        seq: vec![start],
    };
    best.insert(start, first.clone());
    heap.push(std::cmp::Reverse(first));
    while let Some(std::cmp::Reverse(label)) = heap.pop() {
        let at = *label.seq.last().expect("non-empty");
        if best.get(&at) != Some(&label) {
            continue;
        }
        if at == goal {
            break;
        }
        for e in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            if label.seq.contains(&e.v) {
                continue;
            }
            let mut seq = label.seq.clone();
            seq.push(e.v);
            let next = Label {
                cost: label.cost + edge_weight(e),
                seq,
            };
            if best.get(&e.v).is_none_or(|b| next < *b) {
                best.insert(e.v, next.clone());
                heap.push(std::cmp::Reverse(next));
            }
        }
    }
    let label = best.remove(&goal).ok_or(PlanError::Unreachable)?;
    let edges = label
        .seq
        .windows(2)
        .map(|w| {
            graph
                .edge(w[0], w[1])
                .and_then(|e| e.oriented_from(w[0]))
                .expect("edge on the search path")
        })
        .collect();
    Ok(GlobalPath { edges })
}

/// Union of `v_cur`'s grid with its neighbors' grids, fused so that
/// occupied beats free beats unknown. See [`build_local_grid_within`].
pub fn build_local_grid(graph: &TopoGraph, v_cur: LocationId) -> Result<(OccupancyGrid, Pose2D), PlanError> {
    build_local_grid_within(graph, v_cur, f64::INFINITY)
}

/// Local planning grid around `v_cur`, with neighbor grids clipped to
/// `window` meters from `v_cur`'s observation point.
///
/// The union grid has `v_cur`'s resolution and its lattice is aligned with
/// `v_cur`'s grid. Its origin is the identity; the returned offset maps
/// points in `v_cur`'s frame into the union grid's frame.
pub fn build_local_grid_within(
    graph: &TopoGraph,
    v_cur: LocationId,
    window: f64,
) -> Result<(OccupancyGrid, Pose2D), PlanError> {
    let center = &graph
        .location(v_cur)
        .map_err(|_| PlanError::UnknownLocation(v_cur))?
        .grid;
    let res = center.resolution;
    // frame of the center grid's lattice
    let lattice = center.origin;
    let to_lattice = lattice.inverse();
    let mut parts: Vec<(&OccupancyGrid, Pose2D)> = vec![(center, Pose2D::identity())];
    for (n, t) in graph.neighbors(v_cur) {
        let g = &graph.location(n).expect("neighbor exists").grid;
        // neighbor-grid coordinates → v_cur coordinates
        parts.push((g, t));
    }

    let (mut x0, mut y0, mut x1, mut y1) = (0i64, 0i64, center.width as i64 - 1, center.height as i64 - 1);
    for (g, t) in &parts[1..] {
        for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let local = Point2::new(
                (cx * g.width as f64 - 0.5) * g.resolution,
                (cy * g.height as f64 - 0.5) * g.resolution,
            );
            let p = to_lattice.transform_point(t.transform_point(g.origin.transform_point(local)));
            x0 = x0.min((p.x / res).floor() as i64);
            y0 = y0.min((p.y / res).floor() as i64);
            x1 = x1.max((p.x / res).ceil() as i64);
            y1 = y1.max((p.y / res).ceil() as i64);
        }
    }
    if window.is_finite() {
        let c = to_lattice.transform_point(Point2::new(0.0, 0.0));
        let r = (window / res).ceil() as i64;
        let (cx, cy) = ((c.x / res).round() as i64, (c.y / res).round() as i64);
        x0 = x0.max(cx - r).min(0);
        y0 = y0.max(cy - r).min(0);
        x1 = x1.min(cx + r).max(center.width as i64 - 1);
        y1 = y1.min(cy + r).max(center.height as i64 - 1);
    }
    let w = (x1 - x0 + 1) as usize;
    let h = (y1 - y0 + 1) as usize;
    let mut union = OccupancyGrid::new(res, Pose2D::identity(), w, h);
    let fuse = |g: &mut OccupancyGrid, ix: i64, iy: i64, c: Cell| {
        let cur = g.get_or_unknown(ix, iy);
        if c.rank() > cur.rank() {
            g.set(ix, iy, c);
        }
    };
    for iy in 0..center.height as i64 {
        for ix in 0..center.width as i64 {
            fuse(&mut union, ix - x0, iy - y0, center.get_or_unknown(ix, iy));
        }
    }
    for (g, t) in &parts[1..] {
        // union lattice → neighbor grid
        let to_grid = g.origin.inverse().compose(&t.inverse()).compose(&lattice);
        for uy in 0..h as i64 {
            for ux in 0..w as i64 {
                let p = Point2::new((ux + x0) as f64 * res, (uy + y0) as f64 * res);
                let q = to_grid.transform_point(p);
                let gx = (q.x / g.resolution + 0.5).floor() as i64;
                let gy = (q.y / g.resolution + 0.5).floor() as i64;
                fuse(&mut union, ux, uy, g.get_or_unknown(gx, gy));
            }
        }
        // occupied cells also mark the union cell their center lands in, so
        // resampling a rotated wall cannot open gaps in it
        let to_union = to_lattice.compose(t).compose(&g.origin);
        for gy in 0..g.height as i64 {
            for gx in 0..g.width as i64 {
                if g.get_or_unknown(gx, gy) != Cell::Occupied {
                    continue;
                }
                let p = to_union.transform_point(Point2::new(gx as f64 * g.resolution, gy as f64 * g.resolution));
                let ux = (p.x / res + 0.5).floor() as i64 - x0;
                let uy = (p.y / res + 0.5).floor() as i64 - y0;
                fuse(&mut union, ux, uy, Cell::Occupied);
            }
        }
    }
    let offset = Pose2D::new(-(x0 as f64) * res, -(y0 as f64) * res, 0.0).compose(&to_lattice);
    Ok((union, offset))
}

/// Traversability with obstacle inflation, evaluated lazily per cell.
struct Traversable<'a> {
    grid: &'a OccupancyGrid,
    offsets: Vec<(i64, i64)>,
    memo: Vec<u8>,
}

impl<'a> Traversable<'a> {
    fn new(grid: &'a OccupancyGrid, inflation_radius: f64) -> Self {
        let r = (inflation_radius / grid.resolution).max(0.0);
        let k = r.floor() as i64;
        let mut offsets = Vec::new();
        for dy in -k..=k {
            for dx in -k..=k {
                if ((dx * dx + dy * dy) as f64) <= r * r + 1e-9 {
                    offsets.push((dx, dy));
                }
            }
        }
        Self {
            grid,
            offsets,
            memo: vec![0; grid.width * grid.height],
        }
    }

    fn ok(&mut self, ix: i64, iy: i64) -> bool {
        if !self.grid.in_bounds(ix, iy) {
            return false;
        }
        let i = self.grid.index(ix as usize, iy as usize);
        if self.memo[i] == 0 {
            let free = self.grid.get_or_unknown(ix, iy) == Cell::Free
                && self
                    .offsets
                    .iter()
                    .all(|&(dx, dy)| self.grid.get_or_unknown(ix + dx, iy + dy) != Cell::Occupied);
            self.memo[i] = if free { 1 } else { 2 };
        }
        self.memo[i] == 1
    }

    /// Every cell touched by the segment (cell space) is traversable.
    fn line_of_sight(&mut self, a: Point2, b: Point2) -> bool {
        let mut clear = true;
        walk_cells(a, b, |ix, iy, _| {
            clear = self.ok(ix, iy);
            clear
        });
        clear
    }
}

#[derive(Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // reversed: BinaryHeap pops the smallest f, then g, then row-major index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) const NEIGHBORS8: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Any-angle (Theta*) path from `start` to `goal`, both in the grid's world
/// frame. Unknown cells and cells within the inflation radius of an
/// occupied cell are not traversable.
pub fn plan_local(
    grid: &OccupancyGrid,
    start: Point2,
    goal: Point2,
    cfg: &PlanConfig,
) -> Result<LocalPath, PlanError> {
    let mut trav = Traversable::new(grid, cfg.inflation_radius);
    let s_cs = grid.coord_to_cell_space(start);
    let g_cs = grid.coord_to_cell_space(goal);
    let cell_of = |p: Point2| ((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64);
    let (sx, sy) = cell_of(s_cs);
    let (gx, gy) = cell_of(g_cs);
    if !trav.ok(sx, sy) {
        return Err(PlanError::StartInObstacle);
    }
    if !trav.ok(gx, gy) {
        return Err(PlanError::GoalUnreachable);
    }
    let w = grid.width;
    let idx = |x: i64, y: i64| y as usize * w + x as usize;
    let s_idx = idx(sx, sy);
    let g_idx = idx(gx, gy);
    if s_idx == g_idx {
        return Ok(LocalPath {
            waypoints: vec![start, goal],
        });
    }
    let pos = |i: usize| -> Point2 {
        if i == s_idx {
            s_cs
        } else if i == g_idx {
            g_cs
        } else {
            Point2::new((i % w) as f64, (i / w) as f64)
        }
    };
    let n = w * grid.height;
    let mut g_val = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g_val[s_idx] = 0.0;
    parent[s_idx] = s_idx;
    open.push(OpenEntry {
        f: s_cs.dist(&g_cs),
        g: 0.0,
        idx: s_idx,
    });
    while let Some(OpenEntry { g, idx: cur, .. }) = open.pop() {
        if closed[cur] || g > g_val[cur] {
            continue;
        }
        if cur == g_idx {
            break;
        }
        closed[cur] = true;
        let (cx, cy) = ((cur % w) as i64, (cur / w) as i64);
        for (dx, dy) in NEIGHBORS8 {
            let (nx, ny) = (cx + dx, cy + dy);
            if !trav.ok(nx, ny) {
                continue;
            }
            if dx != 0 && dy != 0 && !(trav.ok(cx + dx, cy) && trav.ok(cx, cy + dy)) {
                continue;
            }
            let nb = idx(nx, ny);
            if closed[nb] {
                continue;
            }
            let pn = pos(nb);
            let par = parent[cur];
            let (cand_parent, cand_g) = if trav.line_of_sight(pos(par), pn) {
                (par, g_val[par] + pos(par).dist(&pn))
            } else if (cur != s_idx && nb != g_idx) || trav.line_of_sight(pos(cur), pn) {
                (cur, g_val[cur] + pos(cur).dist(&pn))
            } else {
                continue;
            };
            if cand_g < g_val[nb] {
                g_val[nb] = cand_g;
                parent[nb] = cand_parent;
                open.push(OpenEntry {
                    f: cand_g + pn.dist(&g_cs),
                    g: cand_g,
                    idx: nb,
                });
            }
        }
    }
    if !g_val[g_idx].is_finite() {
        return Err(PlanError::GoalUnreachable);
    }
    let mut chain = vec![g_idx];
    let mut at = g_idx;
    while at != s_idx {
        at = parent[at];
        chain.push(at);
    }
    chain.reverse();
    let res = grid.resolution;
    let waypoints = chain
        .into_iter()
        .map(|i| {
            if i == s_idx {
                start
            } else if i == g_idx {
                goal
            } else {
                let p = pos(i);
                grid.origin.transform_point(Point2::new(p.x * res, p.y * res))
            }
        })
        .collect();
    Ok(LocalPath { waypoints })
}

/// Traversable cell center nearest to `p` within `max_dist`, for goals or
/// starts that fall inside inflated obstacles. Ties go to the lower
/// row-major index.
pub fn nearest_traversable(grid: &OccupancyGrid, p: Point2, cfg: &PlanConfig, max_dist: f64) -> Option<Point2> {
    let mut trav = Traversable::new(grid, cfg.inflation_radius);
    let c = grid.coord_to_cell_space(p);
    let (cx, cy) = ((c.x + 0.5).floor() as i64, (c.y + 0.5).floor() as i64);
    let r = (max_dist / grid.resolution).ceil() as i64;
    let mut best: Option<(f64, i64, i64)> = None;
    for iy in cy - r..=cy + r {
        for ix in cx - r..=cx + r {
            let d = ((ix as f64 - c.x).powi(2) + (iy as f64 - c.y).powi(2)).sqrt() * grid.resolution;
            if d > max_dist || !trav.ok(ix, iy) {
                continue;
            }
            if best.is_none_or(|(bd, ..)| d < bd) {
                best = Some((d, ix, iy));
            }
        }
    }
    best.map(|(_, ix, iy)| grid.index_to_coord(ix, iy))
}

/// Pose to steer towards: the goal pose inside the goal location, else
/// the observation point of the next location on the route.
pub fn next_target(state: &NavState, goal: &GoalSpec, path: &GlobalPath) -> Result<Pose2D, PlanError> {
    if state.v_cur == goal.v_goal {
        return Ok(goal.t_goal);
    }
    path.edges
        .first()
        .and_then(|e| e.pose_from(state.v_cur))
        .ok_or(PlanError::InconsistentPath)
}
