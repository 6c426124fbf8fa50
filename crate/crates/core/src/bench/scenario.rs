//! The default desk-scale world, its mapping route and episode suite.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{Cell, OccupancyGrid, Point2, Pose2D};
use crate::sim::World;

pub const WORLD_RES: f64 = 0.1;
pub const WORLD_WIDTH_M: f64 = 60.0;
pub const WORLD_HEIGHT_M: f64 = 40.0;

/// Corridor lattice: node `(i, j)` sits at `(4 + 6i, 4 + 6j)` meters.
pub fn node(i: i32, j: i32) -> Point2 {
    Point2::new(4.0 + 6.0 * i as f64, 4.0 + 6.0 * j as f64)
}

struct Builder {
    grid: OccupancyGrid,
}

impl Builder {
    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: Cell) {
        let to = |v: f64| (v / WORLD_RES).round() as i64;
        for iy in to(y0.min(y1))..to(y0.max(y1)) {
            for ix in to(x0.min(x1))..to(x0.max(x1)) {
                self.grid.set(ix, iy, c);
            }
        }
    }

    fn carve(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.rect(x0, y0, x1, y1, Cell::Free);
    }

    fn fill(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.rect(x0, y0, x1, y1, Cell::Occupied);
    }

    /// 2 m wide corridor through consecutive lattice nodes, with shallow
    /// niches of random size and spacing cut into both walls.
    fn corridor(&mut self, nodes: &[(i32, i32)], rng: &mut ChaCha8Rng) {
        for w in nodes.windows(2) {
            let (a, b) = (node(w[0].0, w[0].1), node(w[1].0, w[1].1));
            self.carve(a.x.min(b.x) - 1.0, a.y.min(b.y) - 1.0, a.x.max(b.x) + 1.0, a.y.max(b.y) + 1.0);
            let len = a.dist(&b);
            let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
            for side in [-1.0, 1.0] {
                // niche footprint in (along, across) coordinates
                let mut s = NICHE_END_CLEARANCE + rng.gen_range(0.0..1.5);
                loop {
                    let l = rng.gen_range(0.5..1.8);
                    if s + l > len - NICHE_END_CLEARANCE {
                        break;
                    }
                    let d = rng.gen_range(0.3..0.9);
                    let corner = |t: f64, c: f64| Point2::new(a.x + ux * t - uy * c * side, a.y + uy * t + ux * c * side);
                    let (p, q) = (corner(s, 1.0), corner(s + l, 1.0 + d));
                    self.carve(p.x.min(q.x), p.y.min(q.y), p.x.max(q.x), p.y.max(q.y));
                    s += l + rng.gen_range(1.0..3.0);
                }
            }
        }
    }
}

/// Niches keep this far from corridor junctions.
const NICHE_END_CLEARANCE: f64 = 1.5;
const NICHE_SEED: u64 = 2024;

/// Branched corridor maze, 60 m × 40 m at 0.1 m. Straight corridor runs
/// are at most two lattice edges long so every lidar ray finds a wall
/// within 15 m. Random wall niches break the corridors' symmetry. It has
/// two 12 m loops, a furnished dead-end room, wall
/// alcoves that make junctions distinguishable, and a sealed room that no
/// route can reach.
pub fn default_world() -> World {
    let w = (WORLD_WIDTH_M / WORLD_RES).round() as usize;
    let h = (WORLD_HEIGHT_M / WORLD_RES).round() as usize;
    let mut b = Builder {
        grid: OccupancyGrid::filled(WORLD_RES, Pose2D::identity(), w, h, Cell::Occupied),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(NICHE_SEED);
    b.corridor(&[(0, 0), (2, 0), (2, 2), (0, 2), (0, 0)], &mut rng);
    b.corridor(&[(2, 1), (4, 1)], &mut rng);
    b.corridor(&[(4, 0), (4, 2)], &mut rng);
    b.corridor(&[(4, 0), (6, 0), (6, 1), (8, 1), (8, 3), (6, 3), (6, 5), (8, 5)], &mut rng);
    b.corridor(&[(4, 2), (5, 2), (5, 4), (3, 4)], &mut rng);
    b.corridor(&[(3, 3), (3, 5), (1, 5), (1, 3), (3, 3)], &mut rng);

    b.carve(46.0, 29.5, 53.5, 38.0);
    b.fill(49.0, 33.0, 50.0, 35.0);
    b.fill(51.5, 36.0, 52.5, 37.6);
    b.fill(47.0, 30.5, 48.2, 31.3);
    b.fill(46.8, 35.6, 47.6, 36.4);

    b.carve(18.5, 12.5, 25.5, 19.5);
    b.fill(20.0, 14.0, 21.0, 15.0);
    b.fill(23.0, 17.0, 24.5, 18.0);
    b.fill(22.0, 13.5, 22.5, 16.0);

    for &(x0, y0, x1, y1) in ALCOVES {
        b.carve(x0, y0, x1, y1);
    }
    World::new("default", b.grid).expect("only free and occupied cells")
}

const ALCOVES: &[(f64, f64, f64, f64)] = &[
    (6.0, 2.2, 7.5, 3.0),
    (12.0, 5.0, 13.0, 6.0),
    (2.2, 9.0, 3.0, 10.5),
    (17.0, 12.0, 18.0, 13.2),
    (24.0, 8.0, 25.5, 9.0),
    (30.0, 2.3, 31.0, 3.0),
    (36.0, 5.0, 37.5, 5.8),
    (41.0, 6.0, 41.8, 7.0),
    (44.0, 11.0, 45.0, 11.8),
    (53.0, 15.0, 53.8, 16.5),
    (47.0, 23.0, 48.0, 23.8),
    (41.0, 27.0, 41.8, 28.5),
    (31.0, 23.0, 32.0, 23.8),
    (24.0, 29.0, 25.0, 29.8),
    (17.0, 35.0, 18.5, 35.8),
    (9.2, 26.0, 10.0, 27.0),
    (13.0, 21.2, 14.0, 22.0),
    (35.0, 19.0, 35.8, 20.0),
];

/// A point inside the sealed room.
pub fn sealed_room_point() -> Pose2D {
    Pose2D::new(19.5, 17.5, 0.0)
}

fn poses(points: &[Point2], heading: f64) -> Vec<Pose2D> {
    let mut out: Vec<Pose2D> = points.iter().map(|p| Pose2D::new(p.x, p.y, 0.0)).collect();
    if let Some(first) = out.first_mut() {
        first.theta = heading;
    }
    out
}

fn nodes(list: &[(i32, i32)]) -> Vec<Point2> {
    list.iter().map(|&(i, j)| node(i, j)).collect()
}

/// Mapping route (about 345 m): loop A, out to the dead-end room, back,
/// then around loop B. Only the first pose's heading matters.
pub fn default_route() -> Vec<Pose2D> {
    let mut pts = nodes(&[
        (0, 0),
        (2, 0),
        (2, 2),
        (0, 2),
        (0, 0),
        (2, 0),
        (2, 1),
        (4, 1),
        (4, 0),
        (6, 0),
        (6, 1),
        (8, 1),
        (8, 3),
        (6, 3),
        (6, 5),
        (7, 5),
    ]);
    pts.extend(
        [
            (47.0, 34.0),
            (48.5, 32.0),
            (52.5, 32.5),
            (52.8, 35.0),
            (50.8, 35.8),
            (48.2, 35.6),
            (47.0, 34.0),
        ]
        .iter()
        .map(|&(x, y)| Point2::new(x, y)),
    );
    pts.extend(nodes(&[
        (7, 5),
        (6, 5),
        (6, 3),
        (8, 3),
        (8, 1),
        (6, 1),
        (6, 0),
        (4, 0),
        (4, 1),
        (4, 2),
        (5, 2),
        (5, 4),
        (3, 4),
        (3, 5),
        (1, 5),
        (1, 3),
        (3, 3),
        (3, 4),
    ]));
    poses(&pts, 0.0)
}

/// Loop A driven `laps` times from its south-west corner.
pub fn loop_route(laps: usize) -> Vec<Pose2D> {
    let mut pts = vec![node(0, 0)];
    for _ in 0..laps {
        pts.extend(nodes(&[(2, 0), (2, 2), (0, 2), (0, 0)]));
    }
    poses(&pts, 0.0)
}

/// One lap of loop A, closed: the first and last poses coincide.
pub fn loop_lap() -> Vec<Pose2D> {
    loop_route(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub name: String,
    pub start: Pose2D,
    pub goal: Point2,
}

/// Twenty start/goal pairs spread over the maze.
pub fn default_episodes() -> Vec<Episode> {
    let n = |i, j| node(i, j);
    let list: [(Point2, f64, Point2); 20] = [
        (n(0, 0), 0.0, n(4, 0)),
        (n(1, 2), PI, n(6, 1)),
        (n(2, 1), FRAC_PI_2, n(8, 2)),
        (n(4, 2), 0.0, n(1, 4)),
        (n(0, 1), -FRAC_PI_2, n(3, 5)),
        (n(6, 0), PI, n(2, 3)),
        (n(8, 1), FRAC_PI_2, n(0, 2)),
        (n(6, 4), -FRAC_PI_2, n(4, 0)),
        (Point2::new(51.0, 31.8), PI, n(1, 0)),
        (n(5, 3), FRAC_PI_2, n(8, 3)),
        (n(3, 4), 0.0, n(2, 0)),
        (n(2, 5), 0.0, n(6, 3)),
        (n(7, 1), PI, n(5, 4)),
        (n(4, 1), FRAC_PI_2, n(2, 5)),
        (n(8, 3), PI, n(0, 0)),
        (n(2, 2), -FRAC_PI_2, n(7, 5)),
        (n(3, 3), PI, n(6, 1)),
        (n(5, 0), 0.0, n(1, 3)),
        (n(0, 2), 0.0, Point2::new(51.0, 32.5)),
        (n(7, 3), PI, n(3, 4)),
    ];
    list.iter()
        .enumerate()
        .map(|(k, &(s, th, g))| Episode {
            name: format!("ep{:02}", k + 1),
            start: Pose2D::new(s.x, s.y, th),
            goal: g,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::shortest_path_length;
    use crate::sim::{raycast_scan, LidarParams};

    #[test]
    fn nearly_every_ray_returns() {
        let w = default_world();
        let lidar = LidarParams::default();
        let mut sampled = 0;
        for iy in (5..400).step_by(7) {
            for ix in (5..600).step_by(7) {
                let p = w.truth.index_to_coord(ix, iy);
                if !w.is_free(p) {
                    continue;
                }
                let scan = raycast_scan(&w, &Pose2D::new(p.x, p.y, 0.0), &lidar).unwrap();
                assert!(scan.len() * 20 >= lidar.num_rays * 19, "{} returns at {p:?}", scan.len());
                sampled += 1;
            }
        }
        assert!(sampled > 500, "{sampled}");
    }

    #[test]
    fn route_and_episodes_lie_in_one_free_component() {
        let w = default_world();
        let route = default_route();
        let start = route[0].translation();
        for p in &route {
            assert!(shortest_path_length(&w.truth, start, p.translation()).is_some(), "{p:?}");
        }
        let eps = default_episodes();
        assert_eq!(eps.len(), 20);
        for e in &eps {
            assert!(shortest_path_length(&w.truth, start, e.start.translation()).is_some(), "{}", e.name);
            assert!(shortest_path_length(&w.truth, start, e.goal).is_some(), "{}", e.name);
        }
        let room = sealed_room_point().translation();
        assert!(w.is_free(room));
        assert_eq!(shortest_path_length(&w.truth, start, room), None);
    }

    #[test]
    fn route_length_near_desk_scale_target() {
        let len: f64 = default_route()
            .windows(2)
            .map(|w| w[0].translation().dist(&w[1].translation()))
            .sum();
        assert!((300.0..=420.0).contains(&len), "{len}");
    }
}
