//! Correlative scan-to-grid matching.
//!
//! The reference grid is turned into a likelihood field (Gaussian falloff
//! around occupied cells) on the fine translation lattice. Candidate poses
//! are scored by the mean field value under the transformed query points.
//! The search is exhaustive over the discrete window but uses branch and
//! bound on max-pooled copies of the field, coarse to fine, so whole blocks
//! of translations are discarded when their upper bound cannot beat the
//! best score found so far.

use std::cmp::Ordering;
use std::f64::consts::PI;

use thiserror::Error;

use super::raster::{scan_to_grid, ENDPOINT_NUDGE};
use crate::geom::{Cell, OccupancyGrid, Point2, Pose2D, Scan2D};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchConfig {
    /// Half-width of the translation window, meters.
    pub window_xy: f64,
    /// Half-width of the rotation window, radians.
    pub window_theta: f64,
    pub step_xy: f64,
    pub step_theta: f64,
    pub score_threshold: f64,
    /// Query points farther than this from the sensor are ignored.
    pub max_point_range: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window_xy: 3.0,
            window_theta: PI,
            step_xy: 0.1,
            step_theta: 2f64.to_radians(),
            score_threshold: 0.55,
            max_point_range: f64::INFINITY,
        }
    }
}

impl MatchConfig {
    pub fn with_window(mut self, xy: f64, theta: f64) -> Self {
        self.window_xy = xy;
        self.window_theta = theta;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    /// Pose of the query sensor in the reference frame.
    pub rel_pose: Pose2D,
    pub score: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum MatchError {
    #[error("no pose in the search window reaches the score threshold")]
    NoMatch,
}

/// Likelihood field over a reference grid, in the grid's parent frame.
#[derive(Clone, Debug)]
pub struct LikelihoodField {
    resolution: f64,
    origin: Point2,
    width: i64,
    height: i64,
    data: Vec<f32>,
}

impl LikelihoodField {
    pub fn new(grid: &OccupancyGrid, resolution: f64) -> Self {
        let sigma = grid.resolution.max(1.5 * resolution);
        let reach = 3.0 * sigma;
        let pad = (reach / resolution).ceil() as i64 + 1;
        let corners = [
            (-0.5, -0.5),
            (grid.width as f64 - 0.5, -0.5),
            (-0.5, grid.height as f64 - 0.5),
            (grid.width as f64 - 0.5, grid.height as f64 - 0.5),
        ]
        .map(|(i, j)| grid.origin.transform_point(Point2::new(i * grid.resolution, j * grid.resolution)));
        let min_x = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let max_y = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // keep the field lattice on the grid's own lattice when they coincide
        let base = grid.index_to_coord(0, 0);
        let kx = ((min_x - base.x) / resolution).floor() as i64 - pad;
        let ky = ((min_y - base.y) / resolution).floor() as i64 - pad;
        let origin = Point2::new(base.x + kx as f64 * resolution, base.y + ky as f64 * resolution);
        let width = ((max_x - origin.x) / resolution).ceil() as i64 + pad + 1;
        let height = ((max_y - origin.y) / resolution).ceil() as i64 + pad + 1;
        let mut data = vec![0f32; (width * height) as usize];
        let r = (reach / resolution).ceil() as i64;
        let inv2s2 = 1.0 / (2.0 * sigma * sigma);
        for iy in 0..grid.height as i64 {
            for ix in 0..grid.width as i64 {
                if grid.get(ix, iy) != Some(Cell::Occupied) {
                    continue;
                }
                let c = grid.index_to_coord(ix, iy);
                let fx = ((c.x - origin.x) / resolution).round() as i64;
                let fy = ((c.y - origin.y) / resolution).round() as i64;
                for y in (fy - r).max(0)..=(fy + r).min(height - 1) {
                    for x in (fx - r).max(0)..=(fx + r).min(width - 1) {
                        let px = origin.x + x as f64 * resolution - c.x;
                        let py = origin.y + y as f64 * resolution - c.y;
                        let d2 = px * px + py * py;
                        if d2 > reach * reach {
                            continue;
                        }
                        let v = (-d2 * inv2s2).exp() as f32;
                        let slot = &mut data[(y * width + x) as usize];
                        if v > *slot {
                            *slot = v;
                        }
                    }
                }
            }
        }
        Self {
            resolution,
            origin,
            width,
            height,
            data,
        }
    }

    fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution + 0.5).floor() as i64,
            ((p.y - self.origin.y) / self.resolution + 0.5).floor() as i64,
        )
    }

    pub fn value_at(&self, p: Point2) -> f64 {
        let (x, y) = self.cell_of(p);
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            0.0
        } else {
            self.data[(y * self.width + x) as usize] as f64
        }
    }
}

/// Max-pooled copies of a field: level `h` stores, at each cell, the max
/// over the `2^h × 2^h` block whose lowest corner is that cell.
struct Pyramid {
    pad: i64,
    width: i64,
    height: i64,
    levels: Vec<Vec<f32>>,
}

impl Pyramid {
    fn new(field: &LikelihoodField, depth: u32) -> Self {
        let pad = (1i64 << depth) - 1;
        let width = field.width + pad;
        let height = field.height + pad;
        let mut base = vec![0f32; (width * height) as usize];
        for y in 0..field.height {
            let src = &field.data[(y * field.width) as usize..((y + 1) * field.width) as usize];
            let start = ((y + pad) * width + pad) as usize;
            base[start..start + field.width as usize].copy_from_slice(src);
        }
        let mut levels = vec![base];
        for h in 1..=depth {
            let s = 1i64 << (h - 1);
            let prev = &levels[(h - 1) as usize];
            let mut next = vec![0f32; prev.len()];
            for y in 0..height {
                for x in 0..width {
                    let mut m = prev[(y * width + x) as usize];
                    if x + s < width {
                        m = m.max(prev[(y * width + x + s) as usize]);
                    }
                    if y + s < height {
                        m = m.max(prev[((y + s) * width + x) as usize]);
                        if x + s < width {
                            m = m.max(prev[((y + s) * width + x + s) as usize]);
                        }
                    }
                    next[(y * width + x) as usize] = m;
                }
            }
            levels.push(next);
        }
        Self {
            pad,
            width,
            height,
            levels,
        }
    }

    fn sum(&self, level: usize, cells: &[(i64, i64)], a: i64, b: i64) -> f64 {
        let data = &self.levels[level];
        let mut s = 0.0f64;
        for &(cx, cy) in cells {
            let x = cx + a + self.pad;
            let y = cy + b + self.pad;
            if x >= 0 && y >= 0 && x < self.width && y < self.height {
                s += data[(y * self.width + x) as usize] as f64;
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    score: f64,
    k: i64,
    a: i64,
    b: i64,
}

impl Candidate {
    /// Higher score first; among equal scores the smallest rotation, then
    /// the smallest L1 translation offset, then lexicographic offsets.
    fn better_than(&self, other: &Candidate) -> bool {
        match self.score.partial_cmp(&other.score) {
            Some(Ordering::Greater) => return true,
            Some(Ordering::Less) => return false,
            _ => {}
        }
        let key = |c: &Candidate| (c.k.abs(), c.a.abs() + c.b.abs(), c.k, c.a, c.b);
        key(self) < key(other)
    }
}

struct Query {
    points: Vec<Point2>,
    dirs: Vec<Point2>,
}

impl Query {
    fn new(scan: &Scan2D, max_range: f64) -> Self {
        let mut points = Vec::new();
        let mut dirs = Vec::new();
        for p in &scan.points {
            let r = p.norm();
            if r > 0.0 && r <= max_range {
                points.push(*p);
                dirs.push(Point2::new(p.x / r, p.y / r));
            }
        }
        Self { points, dirs }
    }

    fn cells(&self, field: &LikelihoodField, pose: &Pose2D) -> Vec<(i64, i64)> {
        let (s, c) = pose.theta.sin_cos();
        self.points
            .iter()
            .zip(&self.dirs)
            .map(|(p, d)| {
                let x = pose.x + c * (p.x + ENDPOINT_NUDGE * d.x) - s * (p.y + ENDPOINT_NUDGE * d.y);
                let y = pose.y + s * (p.x + ENDPOINT_NUDGE * d.x) + c * (p.y + ENDPOINT_NUDGE * d.y);
                field.cell_of(Point2::new(x, y))
            })
            .collect()
    }
}

/// Reference grid prepared for repeated matching.
#[derive(Clone, Debug)]
pub struct PreparedReference {
    field: LikelihoodField,
}

impl PreparedReference {
    pub fn new(grid: &OccupancyGrid, cfg: &MatchConfig) -> Self {
        Self {
            field: LikelihoodField::new(grid, cfg.step_xy),
        }
    }

    /// Mean field value of the query points at `pose`.
    pub fn score(&self, query: &Scan2D, pose: &Pose2D, cfg: &MatchConfig) -> f64 {
        let q = Query::new(query, cfg.max_point_range);
        if q.points.is_empty() {
            return 0.0;
        }
        let total: f64 = q
            .points
            .iter()
            .zip(&q.dirs)
            .map(|(p, d)| {
                let nudged = Point2::new(p.x + ENDPOINT_NUDGE * d.x, p.y + ENDPOINT_NUDGE * d.y);
                self.field.value_at(pose.transform_point(nudged))
            })
            .sum();
        total / q.points.len() as f64
    }

    /// Best pose in the window around `prior` whose score is at least
    /// `min_score`, if any.
    pub fn search(
        &self,
        query: &Scan2D,
        prior: &Pose2D,
        cfg: &MatchConfig,
        min_score: f64,
    ) -> Option<MatchResult> {
        let q = Query::new(query, cfg.max_point_range);
        if q.points.is_empty() {
            return None;
        }
        let n = q.points.len() as f64;
        let w = (cfg.window_xy / cfg.step_xy + 1e-9).floor().max(0.0) as i64;
        let mut kmax = (cfg.window_theta / cfg.step_theta + 1e-9).floor().max(0.0) as i64;
        let k_lo = -kmax;
        // ±π windows would visit the same heading twice
        if 2.0 * kmax as f64 * cfg.step_theta >= 2.0 * PI - 1e-9 {
            kmax -= 1;
        }
        let span = 2 * w + 1;
        let mut depth = 0u32;
        while (1i64 << depth) < span {
            depth += 1;
        }
        let pyramid = Pyramid::new(&self.field, depth);

        let mut roots: Vec<(f64, i64, Vec<(i64, i64)>)> = (k_lo..=kmax)
            .map(|k| {
                let pose = Pose2D::new(prior.x, prior.y, prior.theta + k as f64 * cfg.step_theta);
                let cells = q.cells(&self.field, &pose);
                let bound = pyramid.sum(depth as usize, &cells, -w, -w) / n;
                (bound, k, cells)
            })
            .collect();
        roots.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.abs().cmp(&y.1.abs()))
                .then(x.1.cmp(&y.1))
        });

        let mut best: Option<Candidate> = None;
        let keep = |bound: f64, best: &Option<Candidate>| match best {
            Some(b) => bound >= b.score,
            None => bound >= min_score,
        };
        for (bound, k, cells) in &roots {
            if !keep(*bound, &best) {
                continue;
            }
            // DFS stack of (level, a0, b0, bound)
            let mut stack = vec![(depth, -w, -w, *bound)];
            while let Some((h, a0, b0, bnd)) = stack.pop() {
                if !keep(bnd, &best) {
                    continue;
                }
                if h == 0 {
                    let cand = Candidate {
                        score: bnd,
                        k: *k,
                        a: a0,
                        b: b0,
                    };
                    if cand.score >= min_score && best.is_none_or(|b| cand.better_than(&b)) {
                        best = Some(cand);
                    }
                    continue;
                }
                let s = 1i64 << (h - 1);
                let mut children = Vec::with_capacity(4);
                for (da, db) in [(0, 0), (s, 0), (0, s), (s, s)] {
                    let (a, b) = (a0 + da, b0 + db);
                    if a > w || b > w {
                        continue;
                    }
                    let cb = pyramid.sum((h - 1) as usize, cells, a, b) / n;
                    if keep(cb, &best) {
                        children.push((h - 1, a, b, cb));
                    }
                }
                // best child last so it is popped first; ties go to the
                // smaller offset
                children.sort_by(|x, y| {
                    x.3.partial_cmp(&y.3)
                        .unwrap_or(Ordering::Equal)
                        .then((y.1.abs() + y.2.abs()).cmp(&(x.1.abs() + x.2.abs())))
                });
                stack.extend(children);
            }
        }
        best.map(|c| MatchResult {
            rel_pose: Pose2D::new(
                prior.x + c.a as f64 * cfg.step_xy,
                prior.y + c.b as f64 * cfg.step_xy,
                prior.theta + c.k as f64 * cfg.step_theta,
            ),
            score: c.score,
        })
    }

    pub fn match_scan(
        &self,
        query: &Scan2D,
        prior: &Pose2D,
        cfg: &MatchConfig,
    ) -> Result<MatchResult, MatchError> {
        self.search(query, prior, cfg, cfg.score_threshold)
            .ok_or(MatchError::NoMatch)
    }
}

/// Matches a scan against an occupancy grid, searching around `prior`.
pub fn match_scan_to_grid(
    query: &Scan2D,
    reference: &OccupancyGrid,
    prior: &Pose2D,
    cfg: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    PreparedReference::new(reference, cfg).match_scan(query, prior, cfg)
}

/// Finds the pose of `query`'s sensor in `reference`'s sensor frame.
pub fn match_scans(query: &Scan2D, reference: &Scan2D, cfg: &MatchConfig) -> Result<MatchResult, MatchError> {
    let grid = scan_to_grid(reference, &Pose2D::identity(), cfg.step_xy);
    match_scan_to_grid(query, &grid, &Pose2D::identity(), cfg)
}

/// Highest-scoring pose regardless of the threshold.
pub fn best_match(query: &Scan2D, reference: &Scan2D, cfg: &MatchConfig) -> Option<MatchResult> {
    let grid = scan_to_grid(reference, &Pose2D::identity(), cfg.step_xy);
    PreparedReference::new(&grid, cfg).search(query, &Pose2D::identity(), cfg, f64::NEG_INFINITY)
}
