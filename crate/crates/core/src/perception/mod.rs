//! Scan rasterization, place signatures, scan matching and overlap.

mod descriptor;
mod matcher;
mod raster;

pub use descriptor::{compute_descriptor, compute_descriptor_dim, Descriptor, DEFAULT_DESCRIPTOR_DIM};
pub use matcher::{
    best_match, match_scan_to_grid, match_scans, LikelihoodField, MatchConfig, MatchError,
    MatchResult, PreparedReference,
};
pub(crate) use raster::ENDPOINT_NUDGE;
pub use raster::{conflict, overlap, overlap_within, scan_to_grid, scan_to_grid_within};
