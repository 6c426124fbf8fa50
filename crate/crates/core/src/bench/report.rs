//! Benchmark report and its on-disk form.
//!
//! A report directory holds three files:
//!
//! * `episodes.csv`: one row per (episode, pipeline), header
//!   `episode,pipeline,success,reason,ticks,traveled,shortest,efficiency,final_error,planning_calls`.
//! * `summary.json`: schema version, map bytes per pipeline and, per
//!   pipeline, episode count, success count, mean efficiency over
//!   successes and planning-call count.
//! * `timing.json`: wall-clock planning times per row plus their median
//!   and 95th percentile per pipeline.
//!
//! The first two are deterministic for a fixed configuration and seed;
//! wall-clock data is kept apart in the third.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Topo,
    Metric,
}

impl Pipeline {
    pub const ALL: [Pipeline; 2] = [Pipeline::Topo, Pipeline::Metric];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Topo => "topo",
            Pipeline::Metric => "metric",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pipeline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "topo" => Ok(Pipeline::Topo),
            "metric" => Ok(Pipeline::Metric),
            _ => Err(format!("unknown pipeline {s:?} (expected topo or metric)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub episode: String,
    pub pipeline: Pipeline,
    pub success: bool,
    /// Failure reason, empty on success.
    pub reason: String,
    pub ticks: u32,
    /// Sum of true per-tick displacements, meters.
    pub traveled: f64,
    /// Ground-truth shortest path, meters.
    pub shortest: f64,
    pub efficiency: f64,
    /// True distance from the final position to the goal.
    pub final_error: f64,
    pub planning_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    episode: String,
    pipeline: Pipeline,
    success: bool,
    reason: String,
    ticks: u32,
    traveled: f64,
    shortest: f64,
    efficiency: f64,
    final_error: f64,
    planning_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub episodes: usize,
    pub successes: usize,
    /// Mean efficiency over successful episodes; 0 when none succeeded.
    pub mean_efficiency: f64,
    pub planning_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub topo_map_bytes: u64,
    pub metric_map_bytes: u64,
    pub pipelines: BTreeMap<Pipeline, PipelineSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub calls: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub episode: String,
    pub pipeline: Pipeline,
    pub planning_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub schema: u32,
    pub pipelines: BTreeMap<Pipeline, TimingStats>,
    pub rows: Vec<TimingRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<EpisodeResult>,
    pub topo_map_bytes: u64,
    pub metric_map_bytes: u64,
}

/// Median; mean of the two middle values for even lengths. 0 when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile, `p` in (0, 1]. 0 when empty.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

impl BenchReport {
    pub fn rows_for(&self, p: Pipeline) -> impl Iterator<Item = &EpisodeResult> {
        self.rows.iter().filter(move |r| r.pipeline == p)
    }

    pub fn pipeline_summary(&self, p: Pipeline) -> PipelineSummary {
        let rows: Vec<_> = self.rows_for(p).collect();
        let eff: Vec<f64> = rows.iter().filter(|r| r.success).map(|r| r.efficiency).collect();
        PipelineSummary {
            episodes: rows.len(),
            successes: eff.len(),
            mean_efficiency: if eff.is_empty() {
                0.0
            } else {
                eff.iter().sum::<f64>() / eff.len() as f64
            },
            planning_calls: rows.iter().map(|r| r.planning_ms.len()).sum(),
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            schema: SCHEMA_VERSION,
            topo_map_bytes: self.topo_map_bytes,
            metric_map_bytes: self.metric_map_bytes,
            pipelines: Pipeline::ALL.iter().map(|&p| (p, self.pipeline_summary(p))).collect(),
        }
    }

    pub fn planning_times(&self, p: Pipeline) -> Vec<f64> {
        self.rows_for(p).flat_map(|r| r.planning_ms.iter().copied()).collect()
    }

    pub fn timing(&self) -> Timing {
        Timing {
            schema: SCHEMA_VERSION,
            pipelines: Pipeline::ALL
                .iter()
                .map(|&p| {
                    let t = self.planning_times(p);
                    (
                        p,
                        TimingStats {
                            calls: t.len(),
                            median_ms: median(&t),
                            p95_ms: percentile(&t, 0.95),
                        },
                    )
                })
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| TimingRow {
                    episode: r.episode.clone(),
                    pipeline: r.pipeline,
                    planning_ms: r.planning_ms.clone(),
                })
                .collect(),
        }
    }

    pub fn episodes_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                episode: r.episode.clone(),
                pipeline: r.pipeline,
                success: r.success,
                reason: r.reason.clone(),
                ticks: r.ticks,
                traveled: r.traveled,
                shortest: r.shortest,
                efficiency: r.efficiency,
                final_error: r.final_error,
                planning_calls: r.planning_ms.len(),
            })?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| BenchError::Report(e.to_string()))
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), BenchError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("episodes.csv"), self.episodes_csv()?)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())? + "\n")?;
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&self.timing())? + "\n")?;
        Ok(())
    }

    /// Reads a report directory back. Planning times come from
    /// `timing.json` and must line up with the CSV rows.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BenchError> {
        let dir = dir.as_ref();
        let mut rdr = csv::Reader::from_path(dir.join("episodes.csv"))?;
        let csv_rows: Vec<CsvRow> = rdr.deserialize().collect::<Result<_, _>>()?;
        let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
        let timing: Timing = serde_json::from_str(&std::fs::read_to_string(dir.join("timing.json"))?)?;
        if timing.rows.len() != csv_rows.len() {
            return Err(BenchError::Report("timing.json and episodes.csv disagree on row count".into()));
        }
        let mut rows = Vec::with_capacity(csv_rows.len());
        for (c, t) in csv_rows.into_iter().zip(timing.rows) {
            if c.episode != t.episode || c.pipeline != t.pipeline || c.planning_calls != t.planning_ms.len() {
                return Err(BenchError::Report(format!("row mismatch for {} {}", c.episode, c.pipeline)));
            }
            rows.push(EpisodeResult {
                episode: c.episode,
                pipeline: c.pipeline,
                success: c.success,
                reason: c.reason,
                ticks: c.ticks,
                traveled: c.traveled,
                shortest: c.shortest,
                efficiency: c.efficiency,
                final_error: c.final_error,
                planning_ms: t.planning_ms,
            });
        }
        Ok(Self {
            rows,
            topo_map_bytes: summary.topo_map_bytes,
            metric_map_bytes: summary.metric_map_bytes,
        })
    }

    /// Table of the three headline measurements.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28}{:>14}{:>14}\n",
            "", "topological", "metric"
        ));
        let t = |p| self.timing().pipelines[&p].clone();
        let s = |p| self.pipeline_summary(p);
        let (tt, tm) = (t(Pipeline::Topo), t(Pipeline::Metric));
        let (st, sm) = (s(Pipeline::Topo), s(Pipeline::Metric));
        out.push_str(&format!(
            "{:<28}{:>14}{:>14}\n",
            "map bytes", self.topo_map_bytes, self.metric_map_bytes
        ));
        out.push_str(&format!(
            "{:<28}{:>14.3}{:>14.3}\n",
            "planning median, ms", tt.median_ms, tm.median_ms
        ));
        out.push_str(&format!(
            "{:<28}{:>14.3}{:>14.3}\n",
            "planning p95, ms", tt.p95_ms, tm.p95_ms
        ));
        out.push_str(&format!(
            "{:<28}{:>14.3}{:>14.3}\n",
            "mean efficiency", st.mean_efficiency, sm.mean_efficiency
        ));
        out.push_str(&format!(
            "{:<28}{:>14}{:>14}\n",
            "successes",
            format!("{}/{}", st.successes, st.episodes),
            format!("{}/{}", sm.successes, sm.episodes)
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ep: &str, p: Pipeline, success: bool, eff: f64, ms: &[f64]) -> EpisodeResult {
        EpisodeResult {
            episode: ep.into(),
            pipeline: p,
            success,
            reason: if success { String::new() } else { "max ticks exceeded, again".into() },
            ticks: 12,
            traveled: 10.0,
            shortest: 10.0 * eff,
            efficiency: if success { eff } else { 0.0 },
            final_error: 0.1,
            planning_ms: ms.to_vec(),
        }
    }

    fn sample() -> BenchReport {
        BenchReport {
            rows: vec![
                row("a", Pipeline::Topo, true, 0.9, &[1.0, 2.0]),
                row("a", Pipeline::Metric, true, 0.95, &[30.0]),
                row("b", Pipeline::Topo, false, 0.7, &[4.0]),
                row("b", Pipeline::Metric, true, 0.85, &[]),
            ],
            topo_map_bytes: 100,
            metric_map_bytes: 400,
        }
    }

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v, 1.0), 20.0);
        assert_eq!(percentile(&[5.0], 0.95), 5.0);
    }

    #[test]
    fn aggregates() {
        let r = sample();
        let t = r.pipeline_summary(Pipeline::Topo);
        assert_eq!((t.episodes, t.successes, t.planning_calls), (2, 1, 3));
        assert!((t.mean_efficiency - 0.9).abs() < 1e-12);
        let m = r.pipeline_summary(Pipeline::Metric);
        assert!((m.mean_efficiency - 0.9).abs() < 1e-12);
        assert_eq!(r.timing().pipelines[&Pipeline::Topo].median_ms, 2.0);
    }

    #[test]
    fn write_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        r.write(dir.path()).unwrap();
        let back = BenchReport::load(dir.path()).unwrap();
        assert_eq!(back, r);
        let csv = std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
        assert!(csv.starts_with(
            "episode,pipeline,success,reason,ticks,traveled,shortest,efficiency,final_error,planning_calls\n"
        ));
        assert!(r.table().contains("successes"));
    }
}
