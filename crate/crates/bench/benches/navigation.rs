use criterion::{black_box, criterion_group, criterion_main, Criterion};
use locgraph::bench::scenario::{default_route, default_world};
use locgraph::bench::{run_mapping, HarnessConfig, MappingRun};
use locgraph::metric::plan_on_grid;
use locgraph::perception::match_scans;
use locgraph::planning::{build_local_grid_within, next_target, plan_global, plan_local};
use locgraph::sim::raycast_scan;
use locgraph::{GoalSpec, LocationId, NavState, Pose2D};

struct Fixture {
    cfg: HarnessConfig,
    run: MappingRun,
    world: locgraph::sim::World,
    /// The two mapped locations farthest apart in hops.
    far: (LocationId, LocationId),
}

fn fixture() -> Fixture {
    let cfg = HarnessConfig::default();
    let world = default_world();
    let run = run_mapping(&world, &default_route(), &cfg).expect("mapping");
    let ids: Vec<_> = run.graph.location_ids().collect();
    let mut far = (ids[0], ids[0]);
    let mut best = 0;
    for &a in &ids {
        for &b in &ids {
            if let Ok(p) = plan_global(&run.graph, a, b) {
                if p.edges.len() > best {
                    best = p.edges.len();
                    far = (a, b);
                }
            }
        }
    }
    Fixture { cfg, run, world, far }
}

fn planning(c: &mut Criterion) {
    let f = fixture();
    let (a, b) = f.far;
    let state = NavState { v_cur: a, t_cur: Pose2D::identity() };
    let goal = GoalSpec { v_goal: b, t_goal: Pose2D::identity() };
    c.bench_function("plan_global", |bench| bench.iter(|| plan_global(black_box(&f.run.graph), a, b)));
    c.bench_function("topological_step", |bench| {
        bench.iter(|| {
            let path = plan_global(&f.run.graph, a, b).unwrap();
            let target = next_target(&state, &goal, &path).unwrap();
            let (grid, offset) = build_local_grid_within(&f.run.graph, a, f.cfg.plan.local_window).unwrap();
            plan_local(
                &grid,
                offset.transform_point(state.t_cur.translation()),
                offset.transform_point(target.translation()),
                &f.cfg.plan,
            )
        })
    });
    let grid = f.run.metric.thresholded();
    let (sa, sb) = (f.run.location_truth[&a], f.run.location_truth[&b]);
    c.bench_function("plan_metric", |bench| bench.iter(|| plan_on_grid(black_box(&grid), &sa, &sb, &f.cfg.plan)));
}

fn perception(c: &mut Criterion) {
    let f = fixture();
    let (_, pose) = f.run.location_truth.iter().nth(f.run.location_truth.len() / 2).unwrap();
    let reference = raycast_scan(&f.world, pose, &f.cfg.lidar).unwrap();
    let moved = pose.compose(&Pose2D::new(0.4, -0.3, 0.2));
    let query = raycast_scan(&f.world, &moved, &f.cfg.lidar).unwrap();
    c.bench_function("match_scans", |bench| {
        bench.iter(|| match_scans(black_box(&query), &reference, &f.cfg.topo.matching))
    });
    c.bench_function("localize", |bench| bench.iter(|| f.run.graph.localize(black_box(&query), &f.cfg.topo)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = planning, perception
}
criterion_main!(benches);
