//! The graph of locations: structure, maintenance of the robot's place in
//! it, and two-stage localization (descriptor retrieval, then scan match).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::geom::{Cell, GeomError, OccupancyGrid, Pose2D, Scan2D};
use crate::perception::{
    conflict,
    compute_descriptor_dim, overlap_within, scan_to_grid_within, Descriptor, MatchConfig,
    MatchResult, PreparedReference, DEFAULT_DESCRIPTOR_DIM,
};
use crate::planning::GlobalPath;

enum Entry {
    Inside(Pose2D),
    Short,
    Mismatch,
}

/// Score margin a tracking match needs over the odometry prior.
const TRACK_MIN_GAIN: f64 = 0.01;

pub type LocationId = u32;

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("unknown location {0}")]
    UnknownLocation(LocationId),
    #[error("edge would connect location {0} to itself")]
    SelfLoop(LocationId),
    #[error("no edge between {0} and {1}")]
    UnknownEdge(LocationId, LocationId),
    #[error("graph file error: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GeomError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopoConfig {
    /// Cell size of location grids.
    pub grid_resolution: f64,
    /// Scan rays are clipped at this range when building location grids,
    /// measuring overlap and matching against a location.
    pub location_radius: f64,
    pub overlap_threshold: f64,
    /// A new location is only created once the robot is this far from the
    /// current observation point.
    pub min_new_location_dist: f64,
    pub candidates: usize,
    pub descriptor_dim: usize,
    /// Window used for place-recognition matches (no prior).
    pub matching: MatchConfig,
    /// Half-windows for refining the odometry prior inside a location.
    pub track_window_xy: f64,
    pub track_window_theta: f64,
    /// Half-windows for matching against a neighbor through an edge.
    pub neighbor_window_xy: f64,
    pub neighbor_window_theta: f64,
    /// Place-recognition hits need at least this match score...
    pub recognition_score: f64,
    /// ...and at most this two-way free-space conflict with the location.
    pub max_conflict: f64,
    /// Distance to a wall within which conflicts are ignored.
    pub conflict_tolerance: f64,
}

impl Default for TopoConfig {
    fn default() -> Self {
        let location_radius = 7.5;
        Self {
            grid_resolution: 0.25,
            location_radius,
            overlap_threshold: 0.5,
            min_new_location_dist: 1.0,
            candidates: 5,
            descriptor_dim: DEFAULT_DESCRIPTOR_DIM,
            matching: MatchConfig {
                max_point_range: location_radius,
                ..MatchConfig::default()
            },
            track_window_xy: 0.3,
            track_window_theta: 6f64.to_radians(),
            neighbor_window_xy: 0.6,
            neighbor_window_theta: 12f64.to_radians(),
            recognition_score: 0.8,
            max_conflict: 0.01,
            conflict_tolerance: 0.35,
        }
    }
}

impl TopoConfig {
    fn track_cfg(&self) -> MatchConfig {
        self.matching
            .with_window(self.track_window_xy, self.track_window_theta)
    }

    fn neighbor_cfg(&self) -> MatchConfig {
        self.matching
            .with_window(self.neighbor_window_xy, self.neighbor_window_theta)
    }
}

#[derive(Debug)]
pub struct Location {
    pub id: LocationId,
    pub grid: OccupancyGrid,
    pub descriptor: Descriptor,
    reference: OnceLock<(u64, PreparedReference)>,
}

impl Clone for Location {
    fn clone(&self) -> Self {
        Self::new(self.id, self.grid.clone(), self.descriptor.clone())
    }
}

impl PartialEq for Location {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.grid == other.grid && self.descriptor == other.descriptor
    }
}

impl Location {
    pub fn new(id: LocationId, grid: OccupancyGrid, descriptor: Descriptor) -> Self {
        Self {
            id,
            grid,
            descriptor,
            reference: OnceLock::new(),
        }
    }

    fn reference(&self, cfg: &MatchConfig) -> PreparedReference {
        let key = cfg.step_xy.to_bits();
        let (k, r) = self
            .reference
            .get_or_init(|| (key, PreparedReference::new(&self.grid, cfg)));
        if *k == key {
            r.clone()
        } else {
            PreparedReference::new(&self.grid, cfg)
        }
    }

    fn with_reference<T>(&self, cfg: &MatchConfig, f: impl FnOnce(&PreparedReference) -> T) -> T {
        let key = cfg.step_xy.to_bits();
        let (k, r) = self
            .reference
            .get_or_init(|| (key, PreparedReference::new(&self.grid, cfg)));
        if *k == key {
            f(r)
        } else {
            f(&self.reference(cfg))
        }
    }
}

/// Undirected edge labelled with the pose of `v`'s observation point in
/// `u`'s frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopoEdge {
    pub u: LocationId,
    pub v: LocationId,
    pub t_uv: Pose2D,
}

impl TopoEdge {
    pub fn other(&self, from: LocationId) -> Option<LocationId> {
        if from == self.u {
            Some(self.v)
        } else if from == self.v {
            Some(self.u)
        } else {
            None
        }
    }

    /// Edge pose oriented to depart `from`.
    pub fn pose_from(&self, from: LocationId) -> Option<Pose2D> {
        if from == self.u {
            Some(self.t_uv)
        } else if from == self.v {
            Some(self.t_uv.inverse())
        } else {
            None
        }
    }

    /// The same edge stored as departing `from`.
    pub fn oriented_from(&self, from: LocationId) -> Option<TopoEdge> {
        Some(TopoEdge {
            u: from,
            v: self.other(from)?,
            t_uv: self.pose_from(from)?,
        })
    }

    pub fn weight(&self) -> f64 {
        self.t_uv.translation_norm()
    }
}

fn key(u: LocationId, v: LocationId) -> (LocationId, LocationId) {
    (u.min(v), u.max(v))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TopoGraph {
    locations: BTreeMap<LocationId, Location>,
    edges: BTreeMap<(LocationId, LocationId), TopoEdge>,
    next_id: LocationId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub v_cur: LocationId,
    /// Robot pose relative to `v_cur`'s observation point.
    pub t_cur: Pose2D,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationHit {
    pub location_id: LocationId,
    pub rel_pose: Pose2D,
    pub score: f64,
}

/// What a call to [`TopoGraph::update_state`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    /// Still inside the current location.
    Stayed,
    /// Moved along an edge.
    Transitioned,
    /// Re-associated through place recognition.
    Relocalized,
    NewLocation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateUpdate {
    pub state: NavState,
    pub kind: UpdateKind,
    pub removed_edges: Vec<(LocationId, LocationId)>,
}

impl TopoGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: LocationId) -> bool {
        self.locations.contains_key(&id)
    }

    pub fn location(&self, id: LocationId) -> Result<&Location, TopoError> {
        self.locations.get(&id).ok_or(TopoError::UnknownLocation(id))
    }

    pub fn locations(&self) -> impl Iterator<Item = &Location> {
        self.locations.values()
    }

    pub fn location_ids(&self) -> impl Iterator<Item = LocationId> + '_ {
        self.locations.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &TopoEdge> {
        self.edges.values()
    }

    pub fn edge(&self, u: LocationId, v: LocationId) -> Option<&TopoEdge> {
        self.edges.get(&key(u, v))
    }

    /// Neighbors of `id` with the edge pose oriented away from `id`,
    /// ordered by edge weight, then id.
    pub fn neighbors(&self, id: LocationId) -> Vec<(LocationId, Pose2D)> {
        let mut out: Vec<(LocationId, Pose2D)> = self
            .edges
            .values()
            .filter_map(|e| Some((e.other(id)?, e.pose_from(id)?)))
            .collect();
        out.sort_by(|a, b| {
            a.1.translation_norm()
                .total_cmp(&b.1.translation_norm())
                .then(a.0.cmp(&b.0))
        });
        out
    }

    /// Inserts a location built from a scan taken at its observation point.
    pub fn add_location(&mut self, scan: &Scan2D, cfg: &TopoConfig) -> LocationId {
        let mut grid = scan_to_grid_within(
            scan,
            &Pose2D::identity(),
            cfg.grid_resolution,
            cfg.location_radius.min(scan.max_range),
        );
        // the observation point itself is always free space
        let (sx, sy) = grid.coord_to_index(Pose2D::identity().translation());
        if grid.get(sx, sy) == Some(Cell::Unknown) {
            grid.set(sx, sy, Cell::Free);
        }
        let descriptor = compute_descriptor_dim(scan, cfg.descriptor_dim);
        self.insert_location(grid, descriptor)
    }

    pub fn insert_location(&mut self, grid: OccupancyGrid, descriptor: Descriptor) -> LocationId {
        let id = self.next_id;
        self.next_id += 1;
        self.locations.insert(id, Location::new(id, grid, descriptor));
        id
    }

    /// Adds or replaces the edge between `u` and `v`.
    pub fn connect(&mut self, u: LocationId, v: LocationId, t_uv: Pose2D) -> Result<(), TopoError> {
        if u == v {
            return Err(TopoError::SelfLoop(u));
        }
        for id in [u, v] {
            if !self.contains(id) {
                return Err(TopoError::UnknownLocation(id));
            }
        }
        self.edges.insert(key(u, v), TopoEdge { u, v, t_uv });
        Ok(())
    }

    pub fn remove_edge(&mut self, u: LocationId, v: LocationId) -> Result<(), TopoError> {
        self.edges
            .remove(&key(u, v))
            .map(|_| ())
            .ok_or(TopoError::UnknownEdge(u, v))
    }

    /// Up to `k` location ids, nearest descriptor first; ties by id.
    pub fn retrieve_candidates(&self, desc: &Descriptor, k: usize) -> Vec<LocationId> {
        let mut scored: Vec<(f64, LocationId)> = self
            .locations
            .values()
            .map(|l| (l.descriptor.distance(desc), l.id))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, id)| id).collect()
    }

    /// Place recognition followed by scan matching, keeping only hits that
    /// pass [`TopoGraph::accept_hit`]. Hits are sorted by score, best first.
    pub fn localize(&self, scan: &Scan2D, cfg: &TopoConfig) -> Vec<LocalizationHit> {
        self.localize_with(scan, cfg, &cfg.matching)
            .into_iter()
            .filter(|h| self.accept_hit(h, scan, cfg))
            .collect()
    }

    /// Candidates that match at all under `matching`, before verification.
    pub fn localize_with(
        &self,
        scan: &Scan2D,
        cfg: &TopoConfig,
        matching: &MatchConfig,
    ) -> Vec<LocalizationHit> {
        if self.locations.is_empty() {
            return Vec::new();
        }
        let desc = compute_descriptor_dim(scan, cfg.descriptor_dim);
        let mut hits: Vec<LocalizationHit> = self
            .retrieve_candidates(&desc, cfg.candidates)
            .into_iter()
            .filter_map(|id| {
                let loc = &self.locations[&id];
                let m = loc.with_reference(matching, |r| {
                    r.match_scan(scan, &Pose2D::identity(), matching)
                });
                m.ok().map(|m| LocalizationHit {
                    location_id: id,
                    rel_pose: m.rel_pose,
                    score: m.score,
                })
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.location_id.cmp(&b.location_id)));
        hits
    }

    fn match_in(
        &self,
        id: LocationId,
        scan: &Scan2D,
        prior: &Pose2D,
        mcfg: &MatchConfig,
    ) -> Option<MatchResult> {
        let loc = self.locations.get(&id)?;
        loc.with_reference(mcfg, |r| r.match_scan(scan, prior, mcfg).ok())
    }

    /// Refined pose near `prior`, only when it scores clearly better than
    /// the prior itself; near-ties keep the prior so the estimate does not
    /// hop between neighbouring search cells.
    fn track(&self, id: LocationId, scan: &Scan2D, prior: &Pose2D, mcfg: &MatchConfig) -> Option<Pose2D> {
        let loc = self.locations.get(&id)?;
        loc.with_reference(mcfg, |r| {
            let base = r.score(scan, prior, mcfg);
            r.match_scan(scan, prior, mcfg)
                .ok()
                .filter(|m| m.score > base + TRACK_MIN_GAIN)
                .map(|m| m.rel_pose)
        })
    }

    pub fn overlap_with(&self, id: LocationId, scan: &Scan2D, pose: &Pose2D, cfg: &TopoConfig) -> f64 {
        match self.locations.get(&id) {
            Some(l) => overlap_within(scan, &l.grid, pose, cfg.location_radius),
            None => 0.0,
        }
    }

    /// Geometric verification of a place-recognition hit: strong match
    /// score, enough overlap and no free-space conflict with the location.
    pub fn accept_hit(&self, hit: &LocalizationHit, scan: &Scan2D, cfg: &TopoConfig) -> bool {
        let Some(loc) = self.locations.get(&hit.location_id) else {
            return false;
        };
        hit.score >= cfg.recognition_score
            && self.overlap_with(hit.location_id, scan, &hit.rel_pose, cfg) >= cfg.overlap_threshold
            && conflict(scan, &loc.grid, &hit.rel_pose, cfg.location_radius, cfg.conflict_tolerance) <= cfg.max_conflict
    }

    /// Whether the scan matches location `id` near `prior`, and with enough
    /// overlap to count as being inside it. A failed match only counts as
    /// a mismatch near the location's observation point; farther out much
    /// of the scan may fall where the location never looked.
    fn try_enter(
        &self,
        id: LocationId,
        scan: &Scan2D,
        prior: &Pose2D,
        cfg: &TopoConfig,
    ) -> Entry {
        match self.match_in(id, scan, prior, &cfg.neighbor_cfg()) {
            None if prior.translation_norm() > 0.25 * cfg.location_radius => Entry::Short,
            None => Entry::Mismatch,
            Some(m) if self.overlap_with(id, scan, &m.rel_pose, cfg) >= cfg.overlap_threshold => {
                Entry::Inside(m.rel_pose)
            }
            Some(_) => Entry::Short,
        }
    }

    /// Advances the robot's place in the graph by one observation.
    ///
    /// 1. The odometry prior is refined against the current location; if
    ///    the scan still overlaps it enough the robot stays there. When a
    ///    route is given and the robot is already closer to the next
    ///    route node than to the current observation point, a transition
    ///    is attempted first.
    /// 2. Transition to the next route node. If the robot is too far from
    ///    it, or the scan matches it without overlapping it enough, the
    ///    robot stays where it is; if the scan does not match it at all
    ///    while the robot is outside the current location, the edge is
    ///    removed.
    /// 3. Transition to any other neighbor, nearest edge first.
    /// 4. Place recognition over the other locations; a hit that passes
    ///    [`TopoGraph::accept_hit`] is linked to the previous location with
    ///    the matched pose.
    /// 5. Otherwise a new location is created at the robot's position and
    ///    linked to the previous one, once the robot has moved at least
    ///    `min_new_location_dist` from the current observation point.
    pub fn update_state(
        &mut self,
        state: &NavState,
        odom_delta: &Pose2D,
        scan: &Scan2D,
        route: Option<&GlobalPath>,
        cfg: &TopoConfig,
    ) -> StateUpdate {
        let v_cur = state.v_cur;
        let stay = |t: Pose2D, removed: Vec<(LocationId, LocationId)>| StateUpdate {
            state: NavState { v_cur, t_cur: t },
            kind: UpdateKind::Stayed,
            removed_edges: removed,
        };
        if !self.contains(v_cur) {
            // never produced by this module; recover by starting over
            let id = self.add_location(scan, cfg);
            return StateUpdate {
                state: NavState {
                    v_cur: id,
                    t_cur: Pose2D::identity(),
                },
                kind: UpdateKind::NewLocation,
                removed_edges: Vec::new(),
            };
        }

        let prior = state.t_cur.compose(odom_delta);
        let t_tmp = self.track(v_cur, scan, &prior, &cfg.track_cfg()).unwrap_or(prior);
        let inside = self.overlap_with(v_cur, scan, &t_tmp, cfg) >= cfg.overlap_threshold;

        let route_next = route
            .and_then(|r| r.edges.first())
            .and_then(|e| e.oriented_from(v_cur))
            .filter(|e| self.contains(e.v));
        let prefer_next = route_next.is_some_and(|e| {
            t_tmp.translation().dist(&e.t_uv.translation()) < t_tmp.translation_norm()
        });
        if inside && !prefer_next {
            return stay(t_tmp, Vec::new());
        }

        let mut removed = Vec::new();
        if let Some(e) = route_next {
            let prior_next = e.t_uv.inverse().compose(&t_tmp);
            match self.try_enter(e.v, scan, &prior_next, cfg) {
                Entry::Inside(t) => {
                    return StateUpdate {
                        state: NavState { v_cur: e.v, t_cur: t },
                        kind: UpdateKind::Transitioned,
                        removed_edges: removed,
                    };
                }
                Entry::Short => return stay(t_tmp, removed),
                Entry::Mismatch if inside => return stay(t_tmp, removed),
                Entry::Mismatch => {
                    if self.remove_edge(v_cur, e.v).is_ok() {
                        removed.push((v_cur, e.v));
                    }
                }
            }
        }

        for (n, t_e) in self.neighbors(v_cur) {
            if route_next.is_some_and(|e| e.v == n) {
                continue;
            }
            let prior_n = t_e.inverse().compose(&t_tmp);
            if let Entry::Inside(t) = self.try_enter(n, scan, &prior_n, cfg) {
                return StateUpdate {
                    state: NavState { v_cur: n, t_cur: t },
                    kind: UpdateKind::Transitioned,
                    removed_edges: removed,
                };
            }
        }

        // v_cur and its neighbors were already tried against the odometry
        // prior; a hit on them elsewhere contradicts odometry
        let tried: Vec<LocationId> = self.neighbors(v_cur).into_iter().map(|(n, _)| n).collect();
        // verification is the expensive part, so it runs after the cheap filters
        for hit in self.localize_with(scan, cfg, &cfg.matching) {
            if hit.location_id == v_cur || tried.contains(&hit.location_id) || !self.accept_hit(&hit, scan, cfg) {
                continue;
            }
            let t_link = t_tmp.compose(&hit.rel_pose.inverse());
            self.connect(v_cur, hit.location_id, t_link)
                .expect("both locations exist");
            return StateUpdate {
                state: NavState {
                    v_cur: hit.location_id,
                    t_cur: hit.rel_pose,
                },
                kind: UpdateKind::Relocalized,
                removed_edges: removed,
            };
        }

        if t_tmp.translation_norm() <= cfg.min_new_location_dist {
            return stay(t_tmp, removed);
        }
        let id = self.add_location(scan, cfg);
        self.connect(v_cur, id, t_tmp).expect("both locations exist");
        StateUpdate {
            state: NavState {
                v_cur: id,
                t_cur: Pose2D::identity(),
            },
            kind: UpdateKind::NewLocation,
            removed_edges: removed,
        }
    }

    /// Writes `graph.txt` plus one `loc_<id>.grid` per location.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), TopoError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("graph.txt"), self.index_text())?;
        for loc in self.locations.values() {
            loc.grid.save(dir.join(format!("loc_{}.grid", loc.id)))?;
        }
        Ok(())
    }

    /// Bytes [`TopoGraph::save`] writes, without touching the disk.
    pub fn serialized_bytes(&self) -> usize {
        self.index_text().len()
            + self.locations.values().map(|l| l.grid.to_text().len()).sum::<usize>()
    }

    fn index_text(&self) -> String {
        let mut s = String::new();
        for loc in self.locations.values() {
            let _ = write!(s, "loc {}", loc.id);
            for v in &loc.descriptor.values {
                let _ = write!(s, " {}", *v as f32);
            }
            s.push('\n');
        }
        for e in self.edges.values() {
            let _ = writeln!(s, "edge {} {} {} {} {}", e.u, e.v, e.t_uv.x, e.t_uv.y, e.t_uv.theta);
        }
        s
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TopoError> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("graph.txt"))?;
        let mut g = TopoGraph::new();
        let mut pending_edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |m: &str| TopoError::Format(format!("graph.txt line {}: {m}", n + 1));
            let mut f = line.split_whitespace();
            match f.next() {
                Some("loc") => {
                    let id: LocationId = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("id"))?;
                    let values = f
                        .map(|s| s.parse::<f32>().map(f64::from))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("descriptor value"))?;
                    if values.is_empty() {
                        return Err(bad("empty descriptor"));
                    }
                    let grid = OccupancyGrid::load(dir.join(format!("loc_{id}.grid")))?;
                    g.locations
                        .insert(id, Location::new(id, grid, Descriptor::from_values(values)));
                    g.next_id = g.next_id.max(id + 1);
                }
                Some("edge") => {
                    let nums: Vec<&str> = f.collect();
                    if nums.len() != 5 {
                        return Err(bad("edge needs 5 fields"));
                    }
                    let u: LocationId = nums[0].parse().map_err(|_| bad("u"))?;
                    let v: LocationId = nums[1].parse().map_err(|_| bad("v"))?;
                    let p: Vec<f64> = nums[2..]
                        .iter()
                        .map(|s| s.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("pose"))?;
                    // stored verbatim: theta was normalized when written
                    pending_edges.push(TopoEdge {
                        u,
                        v,
                        t_uv: Pose2D {
                            x: p[0],
                            y: p[1],
                            theta: p[2],
                        },
                    });
                }
                None => {}
                Some(other) => return Err(bad(&format!("unknown record {other:?}"))),
            }
        }
        for e in pending_edges {
            if e.u == e.v {
                return Err(TopoError::SelfLoop(e.u));
            }
            for id in [e.u, e.v] {
                if !g.contains(id) {
                    return Err(TopoError::UnknownLocation(id));
                }
            }
            g.edges.insert(key(e.u, e.v), e);
        }
        Ok(g)
    }
}

/// Total size in bytes of the regular files in `dir`.
pub fn directory_bytes(dir: impl AsRef<Path>) -> std::io::Result<u64> {
    let mut total = 0;
    for entry in std::fs::read_dir(dir)? {
        let meta = entry?.metadata()?;
        if meta.is_file() {
            total += meta.len();
        }
    }
    Ok(total)
}

/// Angular window that covers every heading.
pub const FULL_TURN: f64 = PI;
