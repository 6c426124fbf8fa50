//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p locgraph --test acceptance`.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{astar_length, brute_force_knn, brute_force_weight, hops};
use locgraph::bench::report::median;
use locgraph::bench::scenario::{default_episodes, default_route, default_world, loop_lap};
use locgraph::bench::{compare, run_loop, run_mapping, BenchReport, HarnessConfig, MappingRun, Pipeline};
use locgraph::geom::transform_scan;
use locgraph::metric::{plan_on_grid, wall_separation};
use locgraph::perception::{match_scans, Descriptor, MatchConfig};
use locgraph::planning::{build_local_grid_within, next_target, plan_global, plan_local, EDGE_EPSILON};
use locgraph::sim::{raycast_scan, LidarParams, NoiseParams, World};
use locgraph::topo::directory_bytes;
use locgraph::{Cell, GoalSpec, NavState, OccupancyGrid, PlanConfig, Point2, Pose2D, TopoGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn noisy(sigma: f64, seed: u64) -> HarnessConfig {
    // rotational noise per radian is set equal to translational noise per meter
    HarnessConfig {
        noise: NoiseParams {
            trans_sigma: sigma,
            rot_sigma: sigma,
            seed,
        },
        ..HarnessConfig::default()
    }
}

fn memory(world: &World, run: &MappingRun) -> Outcome {
    let _ = world;
    let dir = tempfile::tempdir().expect("tempdir");
    let topo_dir = dir.path().join("topo");
    run.graph.save(&topo_dir).expect("save graph");
    let metric_file = dir.path().join("metric.grid");
    run.metric.save(&metric_file).expect("save metric map");
    let topo = directory_bytes(&topo_dir).expect("size");
    let metric = std::fs::metadata(&metric_file).expect("size").len();
    outcome(
        2 * topo <= metric,
        format!("topological {topo} B, metric {metric} B, ratio {:.3}", topo as f64 / metric as f64),
    )
}

fn planning_latency(run: &MappingRun) -> Outcome {
    let cfg = HarnessConfig::default();
    let grid = run.metric.thresholded();
    let ids: Vec<_> = run.graph.location_ids().collect();
    let mut pairs = Vec::new();
    for &a in &ids {
        for &b in &ids {
            if a != b && hops(&run.graph, a, b).is_some_and(|h| h >= 3) {
                pairs.push((a, b));
            }
        }
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    pairs.truncate(150);
    let mut topo_ms = Vec::new();
    let mut metric_ms = Vec::new();
    for &(a, b) in &pairs {
        let state = NavState {
            v_cur: a,
            t_cur: Pose2D::identity(),
        };
        let goal = GoalSpec {
            v_goal: b,
            t_goal: Pose2D::identity(),
        };
        let t = Instant::now();
        let path = plan_global(&run.graph, a, b).expect("connected");
        let target = next_target(&state, &goal, &path).expect("target");
        let (local, offset) = build_local_grid_within(&run.graph, a, cfg.plan.local_window).expect("grid");
        let _ = plan_local(
            &local,
            offset.transform_point(state.t_cur.translation()),
            offset.transform_point(target.translation()),
            &cfg.plan,
        );
        topo_ms.push(t.elapsed().as_secs_f64() * 1e3);

        let (sa, sb) = (run.location_truth[&a], run.location_truth[&b]);
        let t = Instant::now();
        let _ = plan_on_grid(&grid, &sa, &sb, &cfg.plan);
        metric_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (mt, mm) = (median(&topo_ms), median(&metric_ms));
    outcome(
        topo_ms.len() >= 100 && mt * 10.0 <= mm,
        format!("{} calls, median topological {mt:.3} ms vs metric {mm:.3} ms (ratio {:.0}x)", topo_ms.len(), mm / mt),
    )
}

fn efficiency(report: &BenchReport) -> Outcome {
    let t = report.pipeline_summary(Pipeline::Topo);
    let m = report.pipeline_summary(Pipeline::Metric);
    outcome(
        t.mean_efficiency >= 0.80 && m.mean_efficiency >= 0.85,
        format!(
            "mean efficiency topological {:.3}, metric {:.3}",
            t.mean_efficiency, m.mean_efficiency
        ),
    )
}

fn success(clean: &BenchReport, noisy: &BenchReport) -> Outcome {
    let t0 = clean.pipeline_summary(Pipeline::Topo).successes;
    let t1 = noisy.pipeline_summary(Pipeline::Topo).successes;
    let m0 = clean.pipeline_summary(Pipeline::Metric).successes;
    let m1 = noisy.pipeline_summary(Pipeline::Metric).successes;
    outcome(
        t0 == 20 && t1 >= 16,
        format!("topological {t0}/20 without noise, {t1}/20 at trans_sigma 0.03 (metric {m0}/20, {m1}/20)"),
    )
}

fn loop_closure(world: &World) -> Outcome {
    let run = run_loop(world, &loop_lap(), 2, &HarnessConfig::default()).expect("loop");
    let (first, second) = (run.new_locations[0], run.new_locations[1]);
    outcome(
        10 * second <= first,
        format!("new locations lap 1: {first}, lap 2: {second}"),
    )
}

fn drift(world: &World) -> Outcome {
    let run = run_loop(world, &loop_lap(), 2, &noisy(0.05, 42)).expect("loop");
    let cell = HarnessConfig::default().metric_resolution;
    let sep = wall_separation(&run.lap_maps[0], &run.lap_maps[1]).unwrap_or(0.0);
    let (first, second) = (run.new_locations[0], run.new_locations[1]);
    outcome(
        sep > cell && 10 * second <= first,
        format!("metric wall separation {sep:.3} m (cell {cell} m); topological new locations {first} then {second}"),
    )
}

fn dummy_grid() -> OccupancyGrid {
    OccupancyGrid::filled(0.25, Pose2D::identity(), 2, 2, Cell::Free)
}

fn unit_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> Descriptor {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Descriptor::from_values(v.into_iter().map(|x| x / n).collect())
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    let mut global_ok = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let mut g = TopoGraph::new();
        for _ in 0..n {
            g.insert_location(dummy_grid(), unit_descriptor(&mut rng, 8));
        }
        let mut adj = vec![vec![f64::INFINITY; n]; n];
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(0.4) {
                    let t = Pose2D::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0));
                    g.connect(u as _, v as _, t).unwrap();
                    let w = t.x.hypot(t.y) + EDGE_EPSILON;
                    adj[u][v] = w;
                    adj[v][u] = w;
                }
            }
        }
        let (s, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let agree = match (plan_global(&g, s as _, t as _), brute_force_weight(n, &adj, s, t)) {
            (Ok(p), Some(w)) => (p.weight() - w).abs() <= 1e-9 * w.max(1.0),
            (Err(_), None) => true,
            _ => false,
        };
        global_ok += agree as usize;
    }

    let mut retrieve_ok = 0;
    for _ in 0..100 {
        let dim = rng.gen_range(4..=32);
        let mut g = TopoGraph::new();
        let mut set = Vec::new();
        for _ in 0..rng.gen_range(1..=40) {
            let d = unit_descriptor(&mut rng, dim);
            let id = g.insert_location(dummy_grid(), d.clone());
            set.push((id, d));
        }
        let q = unit_descriptor(&mut rng, dim);
        let k = rng.gen_range(1..=8);
        retrieve_ok += (g.retrieve_candidates(&q, k) == brute_force_knn(&set, &q, k)) as usize;
    }

    let mut theta_ok = 0;
    let mut grids = 0;
    let cfg = PlanConfig {
        inflation_radius: 0.1,
        ..PlanConfig::default()
    };
    while grids < 50 {
        let mut g = OccupancyGrid::filled(0.1, Pose2D::identity(), 64, 64, Cell::Free);
        for _ in 0..rng.gen_range(10..40) {
            let (x, y) = (rng.gen_range(0..64), rng.gen_range(0..64));
            let (w, h) = (rng.gen_range(1..10), rng.gen_range(1..10));
            for j in y..(y + h).min(64) {
                for i in x..(x + w).min(64) {
                    g.set(i, j, Cell::Occupied);
                }
            }
        }
        let s = (rng.gen_range(0..64), rng.gen_range(0..64));
        let t = (rng.gen_range(0..64), rng.gen_range(0..64));
        let Some(a) = astar_length(&g, s, t, 1) else {
            continue;
        };
        grids += 1;
        let (sp, tp) = (g.index_to_coord(s.0, s.1), g.index_to_coord(t.0, t.1));
        if let Ok(p) = plan_local(&g, sp, tp, &cfg) {
            theta_ok += (p.length() <= a + 1e-9 && p.length() >= sp.dist(&tp) - 1e-9) as usize;
        }
    }

    outcome(
        global_ok == 100 && retrieve_ok == 100 && theta_ok == 50,
        format!("global planner {global_ok}/100, retrieval {retrieve_ok}/100, Theta* bounds {theta_ok}/50"),
    )
}

/// A walled room with random boxes and a random notch cut from one corner.
fn random_room(rng: &mut ChaCha8Rng) -> World {
    let (w, h) = (rng.gen_range(80..140), rng.gen_range(60..100));
    let mut g = OccupancyGrid::filled(0.1, Pose2D::identity(), w, h, Cell::Free);
    for i in 0..w as i64 {
        g.set(i, 0, Cell::Occupied);
        g.set(i, h as i64 - 1, Cell::Occupied);
    }
    for j in 0..h as i64 {
        g.set(0, j, Cell::Occupied);
        g.set(w as i64 - 1, j, Cell::Occupied);
    }
    let (nw, nh) = (rng.gen_range(10..w as i64 / 3), rng.gen_range(10..h as i64 / 3));
    for i in w as i64 - nw..w as i64 {
        for j in h as i64 - nh..h as i64 {
            g.set(i, j, Cell::Occupied);
        }
    }
    for _ in 0..rng.gen_range(3..7) {
        let (x, y) = (rng.gen_range(5..w as i64 - 10), rng.gen_range(5..h as i64 - 10));
        let (bw, bh) = (rng.gen_range(2..10), rng.gen_range(2..10));
        for i in x..x + bw {
            for j in y..y + bh {
                g.set(i, j, Cell::Occupied);
            }
        }
    }
    World::new("room", g).expect("world")
}

fn free_pose(rng: &mut ChaCha8Rng, world: &World) -> Pose2D {
    let g = &world.truth;
    loop {
        let p = Point2::new(
            rng.gen_range(0.0..g.width as f64 * g.resolution),
            rng.gen_range(0.0..g.height as f64 * g.resolution),
        );
        let clear = world.is_free(p) && (0..8).all(|k| {
            let a = k as f64 * PI / 4.0;
            world.is_free(Point2::new(p.x + 0.5 * a.cos(), p.y + 0.5 * a.sin()))
        });
        if clear {
            return Pose2D::new(p.x, p.y, rng.gen_range(-PI..PI));
        }
    }
}

fn matcher_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = MatchConfig::default();
    let lidar = LidarParams::default();
    let within = |a: &Pose2D, b: &Pose2D| {
        (a.x - b.x).abs() <= cfg.step_xy + 1e-9
            && (a.y - b.y).abs() <= cfg.step_xy + 1e-9
            && locgraph::geom::normalize_angle(a.theta - b.theta).abs() <= cfg.step_theta + 1e-9
    };
    let mut recovered = 0;
    let mut self_ok = 0;
    for _ in 0..100 {
        let world = random_room(&mut rng);
        let s = raycast_scan(&world, &free_pose(&mut rng, &world), &lidar).expect("scan");
        let t = Pose2D::new(
            rng.gen_range(-0.8..0.8) * cfg.window_xy,
            rng.gen_range(-0.8..0.8) * cfg.window_xy,
            rng.gen_range(-0.9..0.9) * cfg.window_theta,
        );
        // the same points seen from a sensor placed at `t` in the scan's frame
        let q = transform_scan(&s, &t.inverse());
        recovered += match_scans(&q, &s, &cfg).is_ok_and(|m| within(&m.rel_pose, &t)) as usize;
        self_ok += match_scans(&s, &s, &cfg).is_ok_and(|m| m.score >= 0.9 && within(&m.rel_pose, &Pose2D::identity()))
            as usize;
    }
    outcome(
        recovered >= 99 && self_ok == 100,
        format!("recovered {recovered}/100, self-match {self_ok}/100"),
    )
}

fn report_bytes(report: &BenchReport) -> (Vec<u8>, Vec<u8>) {
    let dir = tempfile::tempdir().expect("tempdir");
    report.write(dir.path()).expect("write report");
    let read = |f: &str| std::fs::read(dir.path().join(f)).expect("read report");
    (read("episodes.csv"), read("summary.json"))
}

fn bench(world: &World, cfg: &HarnessConfig) -> BenchReport {
    let run = run_mapping(world, &default_route(), cfg).expect("mapping");
    compare(world, &run, &default_episodes(), cfg).expect("compare")
}

fn determinism(world: &World, first: &BenchReport, cfg: &HarnessConfig) -> Outcome {
    let second = bench(world, cfg);
    let same = report_bytes(first) == report_bytes(&second);
    outcome(same, format!("episodes.csv and summary.json byte-identical across two runs: {same}"))
}

fn main() {
    let start = Instant::now();
    let world = default_world();
    let clean_cfg = HarnessConfig::default();
    let clean_run = run_mapping(&world, &default_route(), &clean_cfg).expect("mapping");
    let clean = compare(&world, &clean_run, &default_episodes(), &clean_cfg).expect("compare");
    let noisy_cfg = noisy(0.03, 42);
    let noisy_report = bench(&world, &noisy_cfg);

    let mut results: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("map memory", Box::new(|| memory(&world, &clean_run))),
        ("planning latency", Box::new(|| planning_latency(&clean_run))),
        ("navigation efficiency", Box::new(|| efficiency(&clean))),
        ("success rate", Box::new(|| success(&clean, &noisy_report))),
        ("loop closure", Box::new(|| loop_closure(&world))),
        ("odometry drift", Box::new(|| drift(&world))),
        ("oracle equivalences", Box::new(oracles)),
        ("matcher recovery", Box::new(matcher_recovery)),
        ("determinism", Box::new(|| determinism(&world, &noisy_report, &noisy_cfg))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in results.drain(..).enumerate() {
        let t = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {}: {} {name}: {} [{:.1} s]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 passed in {:.0} s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
