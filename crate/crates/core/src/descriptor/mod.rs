//! Segment descriptors: the down-sampling point-convolution network and the
//! covariance-eigenvalue baseline.

mod dsm;
mod eigen;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dsm::{
    activation_footprint, describe_dsm, describe_dsm_batch, init_model, knn_dilated, load_model, param_count, save_model, xconv_layer,
    ActivationFootprint, ChannelConfig, Dense, DsmModel, LayerChannels, LayerConfig, XConvWeights, DESCRIPTOR_DIM, DSM_SCHEDULE,
    HEAD_POINTS, INPUT_POINTS, MODEL_FORMAT_VERSION, MODEL_MAGIC,
};
pub use eigen::{eigenvalue_descriptor, EIGEN_DIM};

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("descriptor of kind {kind:?} needs {expected} values, got {found}")]
    LengthMismatch { kind: DescriptorKind, expected: usize, found: usize },
    #[error("descriptor contains non-finite values")]
    NonFinite,
    #[error("quality {0} outside [0, 1]")]
    QualityOutOfRange(f64),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(&'static str),
    #[error("no descriptor model loaded")]
    ModelNotLoaded,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{needed} neighbours requested but only {available} points available")]
    InsufficientNeighbors { needed: usize, available: usize },
    #[error("model format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    /// 16-dim output of the learned network.
    Learned16,
    /// 7 covariance-eigenvalue shape features.
    Eigen7,
}

impl DescriptorKind {
    pub fn dim(self) -> usize {
        match self {
            DescriptorKind::Learned16 => DESCRIPTOR_DIM,
            DescriptorKind::Eigen7 => EIGEN_DIM,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DescriptorKind::Learned16 => 0,
            DescriptorKind::Eigen7 => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DescriptorKind::Learned16),
            1 => Some(DescriptorKind::Eigen7),
            _ => None,
        }
    }
}

/// Fixed-length feature vector with an optional quality score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    kind: DescriptorKind,
    values: Vec<f64>,
    quality: Option<f64>,
}

impl Descriptor {
    pub fn new(kind: DescriptorKind, values: Vec<f64>, quality: Option<f64>) -> Result<Self, DescriptorError> {
        if values.len() != kind.dim() {
            return Err(DescriptorError::LengthMismatch { kind, expected: kind.dim(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFinite);
        }
        if let Some(q) = quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(DescriptorError::QualityOutOfRange(q));
            }
        }
        Ok(Self { kind, values, quality })
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn quality(&self) -> Option<f64> {
        self.quality
    }
}
