//! Global log-odds occupancy mapping from scans plus odometry, without loop
//! closure, and full-grid any-angle planning on the result.

use std::collections::HashSet;
use std::path::Path;

use crate::geom::{walk_cells, Cell, GeomError, OccupancyGrid, Point2, Pose2D, Scan2D};
use crate::perception::ENDPOINT_NUDGE;
use crate::planning::{plan_local, LocalPath, PlanConfig, PlanError};

pub const LOG_ODDS_FREE: f64 = -0.4;
pub const LOG_ODDS_OCCUPIED: f64 = 0.85;
pub const LOG_ODDS_CLAMP: f64 = 10.0;
pub const LOG_ODDS_THRESHOLD: f64 = 0.5;

/// Cells added on each side when the map has to grow.
const GROW_MARGIN: i64 = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMetricMap {
    pub resolution: f64,
    /// Map frame; cell `(i, j)` of the lattice is centered at
    /// `origin ∘ (i·res, j·res)`. Stored cells start at lattice index
    /// `(x0, y0)`.
    pub origin: Pose2D,
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    log_odds: Vec<f32>,
}

impl GlobalMetricMap {
    pub fn new(resolution: f64) -> Self {
        Self::with_origin(resolution, Pose2D::identity())
    }

    pub fn with_origin(resolution: f64, origin: Pose2D) -> Self {
        assert!(resolution > 0.0);
        Self {
            resolution,
            origin,
            x0: 0,
            y0: 0,
            width: 0,
            height: 0,
            log_odds: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Log-odds at a lattice index; 0 outside the stored bounds.
    pub fn log_odds_at(&self, ix: i64, iy: i64) -> f64 {
        let (lx, ly) = (ix - self.x0, iy - self.y0);
        if lx < 0 || ly < 0 || lx >= self.width as i64 || ly >= self.height as i64 {
            return 0.0;
        }
        self.log_odds[ly as usize * self.width + lx as usize] as f64
    }

    fn ensure(&mut self, bx0: i64, by0: i64, bx1: i64, by1: i64) {
        let (cx1, cy1) = (self.x0 + self.width as i64 - 1, self.y0 + self.height as i64 - 1);
        let empty = self.width == 0;
        if !empty && bx0 >= self.x0 && by0 >= self.y0 && bx1 <= cx1 && by1 <= cy1 {
            return;
        }
        let (nx0, ny0, nx1, ny1) = if empty {
            (bx0 - GROW_MARGIN, by0 - GROW_MARGIN, bx1 + GROW_MARGIN, by1 + GROW_MARGIN)
        } else {
            (
                if bx0 < self.x0 { bx0 - GROW_MARGIN } else { self.x0 },
                if by0 < self.y0 { by0 - GROW_MARGIN } else { self.y0 },
                if bx1 > cx1 { bx1 + GROW_MARGIN } else { cx1 },
                if by1 > cy1 { by1 + GROW_MARGIN } else { cy1 },
            )
        };
        let nw = (nx1 - nx0 + 1) as usize;
        let nh = (ny1 - ny0 + 1) as usize;
        let mut data = vec![0f32; nw * nh];
        for ly in 0..self.height {
            let dst = (ly as i64 + self.y0 - ny0) as usize * nw + (self.x0 - nx0) as usize;
            data[dst..dst + self.width].copy_from_slice(&self.log_odds[ly * self.width..(ly + 1) * self.width]);
        }
        self.x0 = nx0;
        self.y0 = ny0;
        self.width = nw;
        self.height = nh;
        self.log_odds = data;
    }

    fn add(&mut self, ix: i64, iy: i64, delta: f64) {
        let i = (iy - self.y0) as usize * self.width + (ix - self.x0) as usize;
        let v = (self.log_odds[i] as f64 + delta).clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP);
        self.log_odds[i] = v as f32;
    }

    /// Fuses one scan taken at `pose` (map frame). Every ray lowers the
    /// log-odds of each cell it crosses and raises its endpoint cell; cells
    /// that hold an endpoint of this scan receive no free update from it.
    pub fn integrate_scan(&mut self, pose: &Pose2D, scan: &Scan2D) {
        if scan.is_empty() {
            return;
        }
        let to_cells = self.origin.inverse().compose(pose);
        let res = self.resolution;
        let from = to_cells.translation();
        let from = Point2::new(from.x / res, from.y / res);
        let mut rays = Vec::with_capacity(scan.len());
        for p in &scan.points {
            let r = p.norm();
            if !(r > 0.0) {
                continue;
            }
            let k = (r + ENDPOINT_NUDGE) / r;
            let q = to_cells.transform_point(Point2::new(p.x * k, p.y * k));
            rays.push(Point2::new(q.x / res, q.y / res));
        }
        if rays.is_empty() {
            return;
        }
        let cell = |p: &Point2| ((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64);
        let (sx, sy) = cell(&from);
        let (mut bx0, mut by0, mut bx1, mut by1) = (sx, sy, sx, sy);
        for p in &rays {
            let (ix, iy) = cell(p);
            bx0 = bx0.min(ix - 1);
            by0 = by0.min(iy - 1);
            bx1 = bx1.max(ix + 1);
            by1 = by1.max(iy + 1);
        }
        self.ensure(bx0, by0, bx1, by1);
        let ends: HashSet<(i64, i64)> = rays.iter().map(cell).collect();
        for p in &rays {
            walk_cells(from, *p, |ix, iy, _| {
                if !ends.contains(&(ix, iy)) {
                    self.add(ix, iy, LOG_ODDS_FREE);
                }
                true
            });
        }
        for p in &rays {
            let (ix, iy) = cell(p);
            self.add(ix, iy, LOG_ODDS_OCCUPIED);
        }
    }

    /// Tri-state view over the stored bounds.
    pub fn thresholded(&self) -> OccupancyGrid {
        let origin = self.origin.compose(&Pose2D::new(
            self.x0 as f64 * self.resolution,
            self.y0 as f64 * self.resolution,
            0.0,
        ));
        let mut g = OccupancyGrid::new(self.resolution, origin, self.width, self.height);
        for (c, &v) in g.cells.iter_mut().zip(&self.log_odds) {
            let v = v as f64;
            *c = if v >= LOG_ODDS_THRESHOLD {
                Cell::Occupied
            } else if v <= -LOG_ODDS_THRESHOLD {
                Cell::Free
            } else {
                Cell::Unknown
            };
        }
        g
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeomError> {
        self.thresholded().save(path)
    }
}

/// Serialized size of the thresholded map in the grid text format.
pub fn metric_map_bytes(map: &GlobalMetricMap) -> usize {
    map.thresholded().to_text().len()
}

/// Theta* over the whole thresholded map. Poses are in the map frame.
pub fn plan_metric(
    map: &GlobalMetricMap,
    start: &Pose2D,
    goal: &Pose2D,
    cfg: &PlanConfig,
) -> Result<LocalPath, PlanError> {
    plan_on_grid(&map.thresholded(), start, goal, cfg)
}

/// As [`plan_metric`] on an already thresholded snapshot.
pub fn plan_on_grid(
    grid: &OccupancyGrid,
    start: &Pose2D,
    goal: &Pose2D,
    cfg: &PlanConfig,
) -> Result<LocalPath, PlanError> {
    plan_local(grid, start.translation(), goal.translation(), cfg)
}

/// Mean distance from each occupied cell of `b` to the nearest occupied
/// cell of `a`, both grids in the same frame. `None` if either has no
/// occupied cells.
pub fn wall_separation(a: &OccupancyGrid, b: &OccupancyGrid) -> Option<f64> {
    let pts = |g: &OccupancyGrid| -> Vec<Point2> {
        let mut out = Vec::new();
        for iy in 0..g.height as i64 {
            for ix in 0..g.width as i64 {
                if g.get_or_unknown(ix, iy) == Cell::Occupied {
                    out.push(g.index_to_coord(ix, iy));
                }
            }
        }
        out
    };
    let pa = pts(a);
    let pb = pts(b);
    if pa.is_empty() || pb.is_empty() {
        return None;
    }
    // bucket `a` on a coarse hash grid and search outward ring by ring
    let bucket = 1.0;
    let key = |p: &Point2| ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<Point2>> = Default::default();
    for p in &pa {
        buckets.entry(key(p)).or_default().push(*p);
    }
    let total: f64 = pb
        .iter()
        .map(|p| {
            let (kx, ky) = key(p);
            let mut best = f64::INFINITY;
            let mut ring = 0i64;
            loop {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs() != ring && dy.abs() != ring {
                            continue;
                        }
                        if let Some(v) = buckets.get(&(kx + dx, ky + dy)) {
                            for q in v {
                                best = best.min(p.dist(q));
                            }
                        }
                    }
                }
                // every unvisited bucket is at least `ring` buckets away
                if best <= ring as f64 * bucket || ring > 1000 {
                    break;
                }
                ring += 1;
            }
            best
        })
        .sum();
    Some(total / pb.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::scan_to_grid;
    use crate::sim::{raycast_scan, LidarParams, World};

    fn square_room() -> World {
        let mut g = OccupancyGrid::filled(0.1, Pose2D::identity(), 80, 80, Cell::Free);
        for i in 0..80 {
            for (a, b) in [(i, 0), (i, 79), (0, i), (79, i)] {
                g.set(a, b, Cell::Occupied);
            }
        }
        World::new("square", g).unwrap()
    }

    #[test]
    fn empty_scan_leaves_map_unchanged() {
        let mut m = GlobalMetricMap::new(0.1);
        let before = m.clone();
        m.integrate_scan(&Pose2D::new(1.0, 1.0, 0.0), &Scan2D::empty(15.0));
        assert_eq!(m, before);
    }

    #[test]
    fn repeated_scan_reaches_fixed_point() {
        let w = square_room();
        let pose = Pose2D::new(3.0, 4.0, 0.3);
        let scan = raycast_scan(&w, &pose, &LidarParams::default()).unwrap();
        let mut m = GlobalMetricMap::new(0.1);
        let mut views = Vec::new();
        for _ in 0..40 {
            m.integrate_scan(&pose, &scan);
            views.push(m.thresholded());
        }
        assert_eq!(views[19], views[39]);
        for iy in 0..views[39].height as i64 {
            for ix in 0..views[39].width as i64 {
                let lx = m.log_odds_at(ix + m.x0, iy + m.y0);
                assert!(lx.abs() <= LOG_ODDS_CLAMP);
            }
        }
    }

    #[test]
    fn single_scan_agrees_with_rasterization_on_known_cells() {
        let w = square_room();
        let pose = Pose2D::new(3.0, 4.0, 0.0);
        let scan = raycast_scan(&w, &pose, &LidarParams::default()).unwrap();
        let mut m = GlobalMetricMap::new(0.1);
        m.integrate_scan(&pose, &scan);
        let view = m.thresholded();
        let raster = scan_to_grid(&scan, &pose, 0.1);
        let mut known = 0;
        for iy in 0..view.height as i64 {
            for ix in 0..view.width as i64 {
                let c = view.get_or_unknown(ix, iy);
                if c == Cell::Unknown {
                    continue;
                }
                known += 1;
                let (rx, ry) = raster.coord_to_index(view.index_to_coord(ix, iy));
                assert_eq!(raster.get_or_unknown(rx, ry), c, "cell {ix},{iy}");
            }
        }
        assert!(known > 300);
        assert!(view.count(Cell::Occupied) > 0 && view.count(Cell::Free) > 0);
    }

    #[test]
    fn occupied_cells_lie_on_true_walls() {
        let w = square_room();
        let mut m = GlobalMetricMap::new(0.1);
        for (x, y) in [(2.0, 2.0), (5.0, 3.0), (4.0, 6.0)] {
            let pose = Pose2D::new(x, y, 0.7);
            m.integrate_scan(&pose, &raycast_scan(&w, &pose, &LidarParams::default()).unwrap());
        }
        let view = m.thresholded();
        for iy in 0..view.height as i64 {
            for ix in 0..view.width as i64 {
                if view.get_or_unknown(ix, iy) != Cell::Occupied {
                    continue;
                }
                let (tx, ty) = w.truth.coord_to_index(view.index_to_coord(ix, iy));
                let near = (-1..=1).any(|dy| (-1..=1).any(|dx| w.truth.get(tx + dx, ty + dy) == Some(Cell::Occupied)));
                assert!(near);
            }
        }
    }

    #[test]
    fn byte_count_arithmetic() {
        let mut m = GlobalMetricMap::new(0.1);
        m.ensure(0, 0, 9, 9);
        // force exactly 10x10 stored cells
        m.x0 = 0;
        m.y0 = 0;
        m.width = 10;
        m.height = 10;
        m.log_odds = vec![0.0; 100];
        let header = m.thresholded().to_text().lines().next().unwrap().len() + 1;
        assert_eq!(metric_map_bytes(&m), header + 10 * 11);
        let before = metric_map_bytes(&m);
        m.ensure(0, 0, 10, 9);
        assert!(metric_map_bytes(&m) > before);
    }

    #[test]
    fn trivial_and_unreachable_metric_plans() {
        let mut m = GlobalMetricMap::new(0.1);
        m.ensure(0, 0, 1, 0);
        m.log_odds.iter_mut().for_each(|v| *v = -5.0);
        let cfg = PlanConfig {
            inflation_radius: 0.0,
            ..PlanConfig::default()
        };
        let (s, g) = (m.thresholded().index_to_coord(0, 0), m.thresholded().index_to_coord(1, 0));
        let start = Pose2D::new(s.x, s.y, 0.0);
        let goal = Pose2D::new(g.x, g.y, 0.0);
        let p = plan_metric(&m, &start, &goal, &cfg).unwrap();
        assert_eq!(p.waypoints, vec![start.translation(), goal.translation()]);
        let far = Pose2D::new(100.0, 0.0, 0.0);
        assert_eq!(plan_metric(&m, &start, &far, &cfg), Err(PlanError::GoalUnreachable));
    }

    #[test]
    fn separation_of_shifted_walls() {
        let mut a = OccupancyGrid::filled(0.1, Pose2D::identity(), 50, 50, Cell::Free);
        let mut b = a.clone();
        for i in 0..50 {
            a.set(i, 10, Cell::Occupied);
            b.set(i, 13, Cell::Occupied);
        }
        let d = wall_separation(&a, &b).unwrap();
        assert!((d - 0.3).abs() < 1e-9);
        assert_eq!(wall_separation(&a, &a), Some(0.0));
    }
}
