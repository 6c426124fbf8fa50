//! Topological navigation over a graph of locations, with a deterministic
//! gridworld simulator and a metric occupancy-grid baseline.

pub mod bench;
pub mod config;
pub mod geom;
pub mod metric;
pub mod nav;
pub mod perception;
pub mod planning;
pub mod sim;
pub mod topo;

pub use geom::{Cell, OccupancyGrid, Point2, Pose2D, Scan2D};
pub use nav::{GoalSpec, NavConfig, NavPhase, NavServer, NavStatus};
pub use planning::{GlobalPath, LocalPath, PlanConfig};
pub use topo::{LocationId, NavState, TopoConfig, TopoGraph};
