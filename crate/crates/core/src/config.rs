//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. A key
//! may repeat, in which case every value is kept in file order.
//!
//! Recognized keys (all optional, defaults in parentheses):
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed` | odometry noise seed (0) |
//! | `noise.trans_sigma`, `noise.rot_sigma` | odometry noise per meter / radian (0) |
//! | `lidar.num_rays`, `lidar.max_range`, `lidar.fov` | lidar (360, 15, 2π) |
//! | `match.window_xy`, `match.window_theta` | place-recognition search half-windows (3 m, π) |
//! | `match.step_xy`, `match.step_theta` | search steps (0.1 m, 2°) |
//! | `match.score_threshold` | minimum match score (0.55) |
//! | `descriptor.dim` | descriptor length (64) |
//! | `topo.grid_resolution` | location grid cell size (0.25 m) |
//! | `topo.location_radius` | scan clipping radius for locations (7.5 m) |
//! | `topo.overlap_threshold` | "still inside" overlap (0.5) |
//! | `topo.min_new_location_dist` | travel gate for new locations (1 m) |
//! | `topo.candidates` | place-recognition candidates (5) |
//! | `topo.track_window_xy`, `topo.track_window_theta` | in-location refinement window (0.3 m, 6°) |
//! | `topo.neighbor_window_xy`, `topo.neighbor_window_theta` | edge transition window (0.6 m, 12°) |
//! | `topo.recognition_score` | minimum score of a place-recognition hit (0.8) |
//! | `topo.max_conflict`, `topo.conflict_tolerance` | free-space conflict bound for place-recognition hits (0.01, 0.35 m) |
//! | `plan.inflation_radius` | obstacle inflation (0.2 m) |
//! | `plan.local_window` | neighbor clipping for the local grid (20 m) |
//! | `nav.epsilon`, `nav.angle_threshold` | goal tolerance, follower angle (0.15 m, 0.35 rad) |
//! | `nav.forward_speed`, `nav.turn_speed` | per-tick motion (0.15 m, 0.15 rad) |
//! | `nav.replan_period`, `nav.max_ticks`, `nav.waypoint_radius` | (10, 4000, 0.1 m) |
//! | `bench.success_radius` | true distance to the goal that counts as success (0.3 m) |
//! | `metric.resolution` | baseline map cell size (0.1 m) |
//! | `mapping.stuck_ticks` | ticks without motion before mapping aborts (200) |
//! | `resolve.window_xy` | search half-window when resolving world points (6 m) |
//! | `resolve.max_conflict` | largest free-space conflict of a resolved world point (0.05) |

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::bench::HarnessConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key {key}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("missing key {0}")]
    Missing(String),
    #[error("unknown key {0}")]
    Unknown(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    pub entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: "expected key = value".into(),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    msg: "empty key".into(),
                });
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Last value for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::Value {
                    key: key.into(),
                    value: v.into(),
                })
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.parse_value(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }
}

/// Keys consumed by [`apply_harness`]; anything else is left to the caller.
pub const HARNESS_KEYS: &[&str] = &[
    "seed",
    "noise.trans_sigma",
    "noise.rot_sigma",
    "lidar.num_rays",
    "lidar.max_range",
    "lidar.fov",
    "match.window_xy",
    "match.window_theta",
    "match.step_xy",
    "match.step_theta",
    "match.score_threshold",
    "descriptor.dim",
    "topo.grid_resolution",
    "topo.location_radius",
    "topo.overlap_threshold",
    "topo.min_new_location_dist",
    "topo.candidates",
    "topo.track_window_xy",
    "topo.track_window_theta",
    "topo.neighbor_window_xy",
    "topo.neighbor_window_theta",
    "topo.recognition_score",
    "topo.max_conflict",
    "topo.conflict_tolerance",
    "plan.inflation_radius",
    "plan.local_window",
    "nav.epsilon",
    "nav.angle_threshold",
    "nav.forward_speed",
    "nav.turn_speed",
    "nav.replan_period",
    "nav.max_ticks",
    "nav.waypoint_radius",
    "metric.resolution",
    "mapping.stuck_ticks",
    "resolve.window_xy",
    "resolve.max_conflict",
    "bench.success_radius",
];

/// Overrides fields of `cfg` from `kv` and validates the result.
pub fn apply_harness(kv: &KeyValues, cfg: &mut HarnessConfig) -> Result<(), ConfigError> {
    kv.set("seed", &mut cfg.noise.seed)?;
    kv.set("noise.trans_sigma", &mut cfg.noise.trans_sigma)?;
    kv.set("noise.rot_sigma", &mut cfg.noise.rot_sigma)?;
    kv.set("lidar.num_rays", &mut cfg.lidar.num_rays)?;
    kv.set("lidar.max_range", &mut cfg.lidar.max_range)?;
    kv.set("lidar.fov", &mut cfg.lidar.fov)?;
    let m = &mut cfg.topo.matching;
    kv.set("match.window_xy", &mut m.window_xy)?;
    kv.set("match.window_theta", &mut m.window_theta)?;
    kv.set("match.step_xy", &mut m.step_xy)?;
    kv.set("match.step_theta", &mut m.step_theta)?;
    kv.set("match.score_threshold", &mut m.score_threshold)?;
    let t = &mut cfg.topo;
    kv.set("descriptor.dim", &mut t.descriptor_dim)?;
    kv.set("topo.grid_resolution", &mut t.grid_resolution)?;
    if let Some(r) = kv.parse_value::<f64>("topo.location_radius")? {
        t.location_radius = r;
        t.matching.max_point_range = r;
    }
    kv.set("topo.overlap_threshold", &mut t.overlap_threshold)?;
    kv.set("topo.min_new_location_dist", &mut t.min_new_location_dist)?;
    kv.set("topo.candidates", &mut t.candidates)?;
    kv.set("topo.track_window_xy", &mut t.track_window_xy)?;
    kv.set("topo.track_window_theta", &mut t.track_window_theta)?;
    kv.set("topo.neighbor_window_xy", &mut t.neighbor_window_xy)?;
    kv.set("topo.neighbor_window_theta", &mut t.neighbor_window_theta)?;
    kv.set("topo.recognition_score", &mut t.recognition_score)?;
    kv.set("topo.max_conflict", &mut t.max_conflict)?;
    kv.set("topo.conflict_tolerance", &mut t.conflict_tolerance)?;
    kv.set("plan.inflation_radius", &mut cfg.plan.inflation_radius)?;
    kv.set("plan.local_window", &mut cfg.plan.local_window)?;
    let n = &mut cfg.nav;
    kv.set("nav.epsilon", &mut n.epsilon)?;
    kv.set("nav.angle_threshold", &mut n.angle_threshold)?;
    kv.set("nav.forward_speed", &mut n.forward_speed)?;
    kv.set("nav.turn_speed", &mut n.turn_speed)?;
    kv.set("nav.replan_period", &mut n.replan_period)?;
    kv.set("nav.max_ticks", &mut n.max_ticks)?;
    kv.set("nav.waypoint_radius", &mut n.waypoint_radius)?;
    kv.set("metric.resolution", &mut cfg.metric_resolution)?;
    kv.set("mapping.stuck_ticks", &mut cfg.stuck_ticks)?;
    kv.set("resolve.window_xy", &mut cfg.resolve_window_xy)?;
    kv.set("resolve.max_conflict", &mut cfg.resolve_max_conflict)?;
    kv.set("bench.success_radius", &mut cfg.success_radius)?;
    cfg.validate()
}

/// Text form of `cfg` that [`apply_harness`] reads back unchanged.
pub fn harness_to_text(cfg: &HarnessConfig) -> String {
    let t = &cfg.topo;
    let m = &t.matching;
    let n = &cfg.nav;
    let lines: Vec<(&str, String)> = vec![
        ("seed", cfg.noise.seed.to_string()),
        ("noise.trans_sigma", cfg.noise.trans_sigma.to_string()),
        ("noise.rot_sigma", cfg.noise.rot_sigma.to_string()),
        ("lidar.num_rays", cfg.lidar.num_rays.to_string()),
        ("lidar.max_range", cfg.lidar.max_range.to_string()),
        ("lidar.fov", cfg.lidar.fov.to_string()),
        ("match.window_xy", m.window_xy.to_string()),
        ("match.window_theta", m.window_theta.to_string()),
        ("match.step_xy", m.step_xy.to_string()),
        ("match.step_theta", m.step_theta.to_string()),
        ("match.score_threshold", m.score_threshold.to_string()),
        ("descriptor.dim", t.descriptor_dim.to_string()),
        ("topo.grid_resolution", t.grid_resolution.to_string()),
        ("topo.location_radius", t.location_radius.to_string()),
        ("topo.overlap_threshold", t.overlap_threshold.to_string()),
        ("topo.min_new_location_dist", t.min_new_location_dist.to_string()),
        ("topo.candidates", t.candidates.to_string()),
        ("topo.track_window_xy", t.track_window_xy.to_string()),
        ("topo.track_window_theta", t.track_window_theta.to_string()),
        ("topo.neighbor_window_xy", t.neighbor_window_xy.to_string()),
        ("topo.neighbor_window_theta", t.neighbor_window_theta.to_string()),
        ("topo.recognition_score", t.recognition_score.to_string()),
        ("topo.max_conflict", t.max_conflict.to_string()),
        ("topo.conflict_tolerance", t.conflict_tolerance.to_string()),
        ("plan.inflation_radius", cfg.plan.inflation_radius.to_string()),
        ("plan.local_window", cfg.plan.local_window.to_string()),
        ("nav.epsilon", n.epsilon.to_string()),
        ("nav.angle_threshold", n.angle_threshold.to_string()),
        ("nav.forward_speed", n.forward_speed.to_string()),
        ("nav.turn_speed", n.turn_speed.to_string()),
        ("nav.replan_period", n.replan_period.to_string()),
        ("nav.max_ticks", n.max_ticks.to_string()),
        ("nav.waypoint_radius", n.waypoint_radius.to_string()),
        ("metric.resolution", cfg.metric_resolution.to_string()),
        ("mapping.stuck_ticks", cfg.stuck_ticks.to_string()),
        ("resolve.window_xy", cfg.resolve_window_xy.to_string()),
        ("resolve.max_conflict", cfg.resolve_max_conflict.to_string()),
        ("bench.success_radius", cfg.success_radius.to_string()),
    ];
    lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Rejects keys outside `allowed`.
pub fn check_keys(kv: &KeyValues, allowed: &[&str]) -> Result<(), ConfigError> {
    match kv.entries.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(ConfigError::Unknown(k.clone())),
        None => Ok(()),
    }
}
