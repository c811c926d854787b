//! Segment-based global localization of LIDAR point clouds against a prior
//! segment map.

// Negated float comparisons deliberately treat NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptor;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod preprocess;
pub mod sampling;
pub(crate) mod spatial;
pub mod matching;
pub mod registration;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use pipeline::PipelineError as Error;
