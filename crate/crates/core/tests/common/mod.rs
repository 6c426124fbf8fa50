//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::sync::OnceLock;

use locgraph::bench::scenario::{default_route, default_world};
use locgraph::bench::{run_mapping, HarnessConfig, MappingRun};
use locgraph::perception::Descriptor;
use locgraph::sim::World;
use locgraph::{Cell, LocationId, OccupancyGrid, Point2, TopoGraph};

pub fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(default_world)
}

/// Zero-noise mapping run of the default route, built once per test binary.
pub fn mapping() -> &'static MappingRun {
    static M: OnceLock<MappingRun> = OnceLock::new();
    M.get_or_init(|| run_mapping(world(), &default_route(), &HarnessConfig::default()).expect("mapping run"))
}

/// True if every sample along the segment lies in free space at least
/// `margin` from the nearest wall sample.
pub fn segment_clear(world: &World, a: Point2, b: Point2, margin: f64) -> bool {
    let n = (a.dist(&b) / 0.05).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        let p = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        (0..16).all(|j| {
            let ang = j as f64 * std::f64::consts::PI / 8.0;
            world.is_free(Point2::new(p.x + margin * ang.cos(), p.y + margin * ang.sin()))
        }) && world.is_free(p)
    })
}

/// Hop distance between two locations by breadth-first search.
pub fn hops(graph: &TopoGraph, a: LocationId, b: LocationId) -> Option<usize> {
    let mut seen = BTreeSet::from([a]);
    let mut queue = VecDeque::from([(a, 0)]);
    while let Some((v, d)) = queue.pop_front() {
        if v == b {
            return Some(d);
        }
        for (n, _) in graph.neighbors(v) {
            if seen.insert(n) {
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

/// Minimum weight over every simple path, by exhaustive enumeration.
pub fn brute_force_weight(n: usize, adj: &[Vec<f64>], s: usize, g: usize) -> Option<f64> {
    fn go(v: usize, g: usize, adj: &[Vec<f64>], used: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if v == g {
            *best = Some(best.map_or(acc, |b: f64| b.min(acc)));
            return;
        }
        for w in 0..adj.len() {
            if !used[w] && adj[v][w].is_finite() {
                used[w] = true;
                go(w, g, adj, used, acc + adj[v][w], best);
                used[w] = false;
            }
        }
    }
    let mut used = vec![false; n];
    used[s] = true;
    let mut best = None;
    go(s, g, adj, &mut used, 0.0, &mut best);
    best
}

/// Ids of the `k` descriptors nearest to `q`, ties to the lower id.
pub fn brute_force_knn(set: &[(LocationId, Descriptor)], q: &Descriptor, k: usize) -> Vec<LocationId> {
    let mut all: Vec<(f64, LocationId)> = set.iter().map(|(id, d)| (d.distance(q), *id)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

/// 8-connected A* length between two cell centers. A cell is passable when
/// it is free and no occupied cell lies within `clearance` cells of it;
/// diagonal steps past an impassable corner are not allowed.
pub fn astar_length(grid: &OccupancyGrid, s: (i64, i64), g: (i64, i64), clearance: i64) -> Option<f64> {
    let ok = |x: i64, y: i64| -> bool {
        grid.get(x, y) == Some(Cell::Free)
            && (-clearance..=clearance).all(|dy| {
                (-clearance..=clearance).all(|dx| {
                    dx * dx + dy * dy > clearance * clearance || grid.get(x + dx, y + dy) != Some(Cell::Occupied)
                })
            })
    };
    if !ok(s.0, s.1) || !ok(g.0, g.1) {
        return None;
    }
    let w = grid.width as i64;
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let h = |x: i64, y: i64| (((x - g.0).pow(2) + (y - g.1).pow(2)) as f64).sqrt();
    let mut dist = vec![f64::INFINITY; grid.width * grid.height];
    let mut heap = BinaryHeap::new();
    dist[idx(s.0, s.1)] = 0.0;
    heap.push((Reverse(ordered(h(s.0, s.1))), s));
    while let Some((_, (x, y))) = heap.pop() {
        if (x, y) == g {
            return Some(dist[idx(x, y)] * grid.resolution);
        }
        let d = dist[idx(x, y)];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if !ok(nx, ny) || (dx != 0 && dy != 0 && (!ok(x + dx, y) || !ok(x, y + dy))) {
                continue;
            }
            let nd = d + if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            if nd + 1e-12 < dist[idx(nx, ny)] {
                dist[idx(nx, ny)] = nd;
                heap.push((Reverse(ordered(nd + h(nx, ny))), (nx, ny)));
            }
        }
    }
    None
}

fn ordered(x: f64) -> u64 {
    // non-negative floats order like their bit patterns
    x.to_bits()
}
