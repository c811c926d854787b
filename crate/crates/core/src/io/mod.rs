//! Cloud ingestion, segment-map persistence, pair labelling and swathe
//! accumulation.

mod cloud;
mod labels;
mod map;
mod swathe;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use cloud::{load_cloud, save_cloud_csv, save_cloud_ply, CloudFormat, LoadedCloud};
pub use labels::{generate_pair_labels, PairLabel, PairLabelKind, DEFAULT_MATCH_RADIUS, DEFAULT_NON_MATCH_RADIUS};
pub use map::{load_map, save_map, MapEntry, SegmentMap, MAP_FORMAT_VERSION, MAP_MAGIC};
pub use swathe::{accumulate_swathes, SwatheAccumulator, DEFAULT_SWATHE_DISTANCE};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error{}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Parse { line: Option<usize>, offset: Option<usize>, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("invalid radii: match radius {match_radius} must be below non-match radius {non_match_radius}")]
    InvalidRadii { match_radius: f64, non_match_radius: f64 },
    #[error("timestamps are not monotonic: {previous} then {current}")]
    NonMonotonicTimestamps { previous: f64, current: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl IoError {
    pub(crate) fn from_io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}
