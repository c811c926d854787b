//! Evaluation harness: ROC/AUC over labelled pairs, the rotation-variation
//! metric, localization counting and per-stage timing.

mod localization;
mod roc;
mod rotation;
mod timing;

use thiserror::Error;

pub use localization::{localization_run, LocalizationRun};
pub use roc::{parse_scored_pairs, roc_auc, RocCurve};
pub use rotation::{rotate_segment_yaw, rotation_delta, RotationDelta, DEFAULT_ANGLES_DEG};
pub use timing::{descriptor_speed, timing_bench, DescriptorSpeed, ThreadMode, TimingReport, TIMING_REPEATS, TIMING_WARMUP};

pub use crate::pipeline::StageTimings;
use crate::descriptor::DescriptorError;
use crate::pipeline::PipelineError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both match and non-match labels are required")]
    SingleClass,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("at least 2 segments are needed, got {0}")]
    TooFewSegments(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
