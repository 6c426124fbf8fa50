use std::path::Path;
use std::process::{Command, Output};

use locgraph::{Cell, OccupancyGrid, Pose2D};

fn locgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locgraph"))
        .args(args)
        .output()
        .expect("run locgraph")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A 12 m × 8 m room with a partition and a sealed closet around (10.5, 6.5).
fn write_world(dir: &Path) -> String {
    let mut g = OccupancyGrid::filled(0.1, Pose2D::identity(), 120, 80, Cell::Free);
    for i in 0..120 {
        g.set(i, 0, Cell::Occupied);
        g.set(i, 79, Cell::Occupied);
    }
    for j in 0..80 {
        g.set(0, j, Cell::Occupied);
        g.set(119, j, Cell::Occupied);
    }
    for j in 0..50 {
        g.set(60, j, Cell::Occupied);
    }
    for i in 95..120 {
        g.set(i, 55, Cell::Occupied);
    }
    for j in 55..80 {
        g.set(95, j, Cell::Occupied);
    }
    for (x, y) in [(20, 20), (80, 30), (40, 60)] {
        for i in x..x + 6 {
            for j in y..y + 4 {
                g.set(i, j, Cell::Occupied);
            }
        }
    }
    let path = dir.join("world.grid");
    g.save(&path).unwrap();
    path.to_str().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

struct Fixture {
    dir: tempfile::TempDir,
    world: String,
    route: String,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let world = write_world(dir.path());
        let route = write(dir.path(), "route.txt", "1.5 1.5 0\n5 1.5 0\n5 6.5 0\n9 6.5 0\n9 1.5 0\n");
        Self { dir, world, route }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn build(&self, pipeline: &str) -> String {
        let out = self.path(pipeline);
        let res = locgraph(&[
            "build-map", "--world", &self.world, "--route", &self.route, "--pipeline", pipeline, "--out", &out,
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        out
    }
}

#[test]
fn build_map_writes_both_map_kinds() {
    let f = Fixture::new();
    let topo = f.build("topo");
    assert!(Path::new(&topo).join("graph.txt").exists());
    assert!(Path::new(&topo).join("loc_0.grid").exists());
    let metric = f.build("metric");
    assert!(Path::new(&metric).join("metric.grid").exists());
}

#[test]
fn navigate_reaches_goal_and_writes_trace() {
    let f = Fixture::new();
    for pipeline in ["topo", "metric"] {
        let map = f.build(pipeline);
        let trace = f.path(&format!("{pipeline}.csv"));
        let res = locgraph(&[
            "navigate", "--world", &f.world, "--map", &map, "--start", "1.5,1.5,0", "--goal", "8.5,6",
            "--pipeline", pipeline, "--trace", &trace,
        ]);
        let stdout = String::from_utf8_lossy(&res.stdout);
        assert_eq!(code(&res), 0, "{pipeline}: {stdout} {}", String::from_utf8_lossy(&res.stderr));
        assert!(stdout.contains("reached"), "{stdout}");
        let text = std::fs::read_to_string(&trace).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tick,phase,v_cur,action,magnitude,planning_ms"));
        assert!(lines.count() > 10);
    }
}

#[test]
fn goal_outside_the_map_exits_with_two() {
    let f = Fixture::new();
    let map = f.build("topo");
    let res = locgraph(&[
        "navigate", "--world", &f.world, "--map", &map, "--start", "1.5,1.5,0", "--goal", "10.5,6.5",
        "--pipeline", "topo",
    ]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stdout));
}

#[test]
fn configuration_errors_exit_with_three() {
    let f = Fixture::new();
    let bad_value = write(f.dir.path(), "bad.cfg", "nav.epsilon = -1\n");
    let unknown = write(f.dir.path(), "unknown.cfg", "nav.speed = 1\n");
    let out = f.path("r");
    let cases: Vec<Vec<&str>> = vec![
        vec!["bench", "--world", &f.world, "--config", &bad_value, "--out", &out],
        vec!["bench", "--world", &f.world, "--config", &unknown, "--out", &out],
        vec!["build-map", "--world", "missing.grid", "--pipeline", "topo", "--out", &out],
        vec!["navigate", "--world", &f.world, "--map", &out, "--start", "1,2", "--goal", "3,4", "--pipeline", "topo"],
        vec!["compare", "--report", &out],
        vec!["frobnicate"],
        vec!["build-map", "--pipeline", "sideways", "--out", &out],
    ];
    for args in cases {
        let res = locgraph(&args);
        assert_eq!(code(&res), 3, "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn bench_is_reproducible_and_compare_prints_table() {
    let f = Fixture::new();
    let episodes = write(
        f.dir.path(),
        "episodes.cfg",
        "episode = a 1.5 1.5 0 8.5 6\nepisode = b 9 2 3.14 2 6\n",
    );
    let config = write(f.dir.path(), "noise.cfg", "noise.trans_sigma = 0.02\nnoise.rot_sigma = 0.02\n");
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = f.path(run);
        let res = locgraph(&[
            "bench", "--world", &f.world, "--route", &f.route, "--episodes", &episodes, "--config", &config,
            "--seed", "9", "--out", &out,
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let read = |name: &str| std::fs::read(Path::new(&out).join(name)).unwrap();
        reports.push((read("episodes.csv"), read("summary.json")));
        assert!(Path::new(&out).join("timing.json").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let res = locgraph(&["compare", "--report", &f.path("r1")]);
    assert_eq!(code(&res), 0);
    let table = String::from_utf8_lossy(&res.stdout);
    for row in ["map bytes", "planning median, ms", "mean efficiency", "successes"] {
        assert!(table.contains(row), "{table}");
    }
}

#[test]
fn exported_defaults_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&locgraph(&["export-defaults", "--out", out])), 0);
    let world = OccupancyGrid::load(dir.path().join("world.grid")).unwrap();
    assert_eq!(world, locgraph::bench::scenario::default_world().truth);
    let route = locgraph::bench::parse_route(&std::fs::read_to_string(dir.path().join("route.txt")).unwrap()).unwrap();
    assert_eq!(route, locgraph::bench::scenario::default_route());
    let kv = locgraph::config::KeyValues::load(dir.path().join("episodes.cfg")).unwrap();
    assert_eq!(locgraph::bench::parse_episodes(&kv).unwrap(), locgraph::bench::scenario::default_episodes());
    let kv = locgraph::config::KeyValues::load(dir.path().join("config.cfg")).unwrap();
    let mut cfg = locgraph::bench::HarnessConfig::default();
    locgraph::config::apply_harness(&kv, &mut cfg).unwrap();
    assert_eq!(cfg, locgraph::bench::HarnessConfig::default());
}
