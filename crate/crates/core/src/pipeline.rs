//! End-to-end configuration and the map-building / localization pipeline.
//!
//! Configuration is flat `key = value` text; every key can also be set
//! individually, which is how command-line flags override a file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::descriptor::{describe_dsm, describe_dsm_batch, eigenvalue_descriptor, load_model, Descriptor, DescriptorError, DescriptorKind, DsmModel};
use crate::geometry::{CloudId, PointCloud, Segment};
use crate::io::{IoError, SegmentMap};
use crate::matching::{default_k, quality_prune, FeatureIndex, MatchingError, Query, SearchMethod};
use crate::preprocess::{canonicalize, AlignMode, CanonicalSegment, PreprocessError};
use crate::registration::{prosac_pose, ransac_pose, PoseEstimate, RansacParams, RegistrationError, SAMPLE_SIZE};
use crate::segmentation::{euclidean_segment, GroundRemoval, SegmentationError, SegmentationParams, DEFAULT_GROUND_Z};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("no input clouds")]
    NoInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Estimator {
    Ransac,
    /// Quality-ordered; falls back to RANSAC without quality scores.
    #[default]
    Prosac,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub segmentation: SegmentationParams,
    pub align: AlignMode,
    pub descriptor: DescriptorKind,
    pub model_path: Option<PathBuf>,
    /// Neighbours per live segment; `None` picks 25 (learned) or 200 (eigen).
    pub k: Option<usize>,
    pub quality_threshold: Option<f64>,
    pub estimator: Estimator,
    pub ransac: RansacParams,
    pub resample_seed: u64,
    pub search: SearchMethod,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationParams::default(),
            align: AlignMode::Pca2d,
            descriptor: DescriptorKind::Learned16,
            model_path: None,
            k: None,
            quality_threshold: None,
            estimator: Estimator::Prosac,
            ransac: RansacParams::default(),
            resample_seed: 0,
            search: SearchMethod::BruteForce,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value '{value}' for {key}"))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "cluster_tolerance",
        "min_points",
        "max_points",
        "ground_removal",
        "ground_z",
        "ground_plane_distance",
        "ground_plane_iterations",
        "ground_seed",
        "align",
        "descriptor",
        "model",
        "k",
        "quality_threshold",
        "estimator",
        "inlier_radius",
        "max_iterations",
        "min_inliers",
        "confidence",
        "seed",
        "resample_seed",
        "search",
    ];

    /// Sets one key. Ground-removal sub-keys switch the mode they belong to.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let seg = &mut self.segmentation;
        let plane = |g: GroundRemoval| match g {
            GroundRemoval::PlaneRansac { distance, iterations, seed } => (distance, iterations, seed),
            _ => (0.1, 200, 0),
        };
        match key {
            "cluster_tolerance" => seg.cluster_tolerance = parse_num(key, value)?,
            "min_points" => seg.min_points = parse_num(key, value)?,
            "max_points" => seg.max_points = parse_num(key, value)?,
            "ground_removal" => {
                seg.ground_removal = match value {
                    "none" => GroundRemoval::None,
                    "z_threshold" => match seg.ground_removal {
                        g @ GroundRemoval::ZThreshold(_) => g,
                        _ => GroundRemoval::ZThreshold(DEFAULT_GROUND_Z),
                    },
                    "plane_ransac" => {
                        let (distance, iterations, seed) = plane(seg.ground_removal);
                        GroundRemoval::PlaneRansac { distance, iterations, seed }
                    }
                    other => return Err(format!("unknown ground removal '{other}'")),
                }
            }
            "ground_z" => seg.ground_removal = GroundRemoval::ZThreshold(parse_num(key, value)?),
            "ground_plane_distance" | "ground_plane_iterations" | "ground_seed" => {
                let (mut distance, mut iterations, mut seed) = plane(seg.ground_removal);
                match key {
                    "ground_plane_distance" => distance = parse_num(key, value)?,
                    "ground_plane_iterations" => iterations = parse_num(key, value)?,
                    _ => seed = parse_num(key, value)?,
                }
                seg.ground_removal = GroundRemoval::PlaneRansac { distance, iterations, seed };
            }
            "align" => self.align = value.parse().map_err(|e: PreprocessError| e.to_string())?,
            "descriptor" => {
                self.descriptor = match value {
                    "dsm" => DescriptorKind::Learned16,
                    "eigen" => DescriptorKind::Eigen7,
                    other => return Err(format!("unknown descriptor '{other}' (dsm or eigen)")),
                }
            }
            "model" => self.model_path = Some(PathBuf::from(value)),
            "k" => self.k = Some(parse_num(key, value)?),
            "quality_threshold" => self.quality_threshold = if value == "none" { None } else { Some(parse_num(key, value)?) },
            "estimator" => {
                self.estimator = match value {
                    "ransac" => Estimator::Ransac,
                    "prosac" => Estimator::Prosac,
                    other => return Err(format!("unknown estimator '{other}'")),
                }
            }
            "inlier_radius" => self.ransac.inlier_radius = parse_num(key, value)?,
            "max_iterations" => self.ransac.max_iterations = parse_num(key, value)?,
            "min_inliers" => self.ransac.min_inliers = parse_num(key, value)?,
            "confidence" => self.ransac.confidence = parse_num(key, value)?,
            "seed" => self.ransac.seed = parse_num(key, value)?,
            "resample_seed" => self.resample_seed = parse_num(key, value)?,
            "search" => {
                self.search = match value {
                    "brute" => SearchMethod::BruteForce,
                    "kdtree" => SearchMethod::KdTree,
                    other => return Err(format!("unknown search '{other}' (brute or kdtree)")),
                }
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PipelineError::Config { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Renders every key; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seg = &self.segmentation;
        let _ = writeln!(s, "cluster_tolerance = {}", seg.cluster_tolerance);
        let _ = writeln!(s, "min_points = {}", seg.min_points);
        let _ = writeln!(s, "max_points = {}", seg.max_points);
        match seg.ground_removal {
            GroundRemoval::None => {
                let _ = writeln!(s, "ground_removal = none");
            }
            GroundRemoval::ZThreshold(z) => {
                let _ = writeln!(s, "ground_z = {z}");
            }
            GroundRemoval::PlaneRansac { distance, iterations, seed } => {
                let _ = writeln!(s, "ground_plane_distance = {distance}\nground_plane_iterations = {iterations}\nground_seed = {seed}");
            }
        }
        let _ = writeln!(s, "align = {}", self.align);
        let _ = writeln!(s, "descriptor = {}", if self.descriptor == DescriptorKind::Learned16 { "dsm" } else { "eigen" });
        if let Some(p) = &self.model_path {
            let _ = writeln!(s, "model = {}", p.display());
        }
        if let Some(k) = self.k {
            let _ = writeln!(s, "k = {k}");
        }
        if let Some(q) = self.quality_threshold {
            let _ = writeln!(s, "quality_threshold = {q}");
        }
        let _ = writeln!(s, "estimator = {}", if self.estimator == Estimator::Prosac { "prosac" } else { "ransac" });
        let r = &self.ransac;
        let _ = writeln!(s, "inlier_radius = {}", r.inlier_radius);
        let _ = writeln!(s, "max_iterations = {}", r.max_iterations);
        let _ = writeln!(s, "min_inliers = {}", r.min_inliers);
        let _ = writeln!(s, "confidence = {}", r.confidence);
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "resample_seed = {}", self.resample_seed);
        let _ = writeln!(s, "search = {}", if self.search == SearchMethod::KdTree { "kdtree" } else { "brute" });
        s
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mismatch = |m: String| Err(PipelineError::ConfigMismatch(m));
        self.segmentation.validate()?;
        if self.k == Some(0) {
            return mismatch("k must be at least 1".into());
        }
        if let Some(q) = self.quality_threshold {
            if !(0.0..=1.0).contains(&q) {
                return mismatch(format!("quality threshold {q} outside [0, 1]"));
            }
            if self.descriptor == DescriptorKind::Eigen7 {
                return mismatch("eigenvalue descriptors carry no quality; drop quality_threshold".into());
            }
        }
        let r = &self.ransac;
        if !(r.inlier_radius > 0.0) || r.max_iterations == 0 || !(0.0..1.0).contains(&r.confidence) {
            return mismatch(format!("invalid registration parameters {r:?}"));
        }
        Ok(())
    }

    pub fn effective_k(&self) -> usize {
        self.k.unwrap_or_else(|| default_k(self.descriptor))
    }
}

/// Mean wall-clock milliseconds per pipeline stage. `overhead_ms` is the
/// part of `total_ms` not attributed to any stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub segmentation_ms: f64,
    pub preprocessing_ms: f64,
    pub descriptor_ms: f64,
    pub matching_ms: f64,
    pub pruning_ms: f64,
    pub pose_ms: f64,
    pub overhead_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.segmentation_ms + self.preprocessing_ms + self.descriptor_ms + self.matching_ms + self.pruning_ms + self.pose_ms
    }

    pub(crate) fn accumulate(&mut self, o: &StageTimings) {
        self.segmentation_ms += o.segmentation_ms;
        self.preprocessing_ms += o.preprocessing_ms;
        self.descriptor_ms += o.descriptor_ms;
        self.matching_ms += o.matching_ms;
        self.pruning_ms += o.pruning_ms;
        self.pose_ms += o.pose_ms;
        self.overhead_ms += o.overhead_ms;
        self.total_ms += o.total_ms;
    }

    pub(crate) fn scaled(&self, f: f64) -> StageTimings {
        StageTimings {
            segmentation_ms: self.segmentation_ms * f,
            preprocessing_ms: self.preprocessing_ms * f,
            descriptor_ms: self.descriptor_ms * f,
            matching_ms: self.matching_ms * f,
            pruning_ms: self.pruning_ms * f,
            pose_ms: self.pose_ms * f,
            overhead_ms: self.overhead_ms * f,
            total_ms: self.total_ms * f,
        }
    }
}

/// Result of localizing one cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Localization {
    pub pose: Option<PoseEstimate>,
    pub live_segments: usize,
    pub correspondences: usize,
    pub timings: StageTimings,
}

impl Localization {
    /// Deterministic JSON record of the outcome (timings excluded): the pose
    /// with its inlier count, or `{"status": "no-localization"}`.
    pub fn record(&self) -> serde_json::Value {
        pose_record(self.pose.as_ref())
    }
}

pub fn pose_record(pose: Option<&PoseEstimate>) -> serde_json::Value {
    match pose {
        None => serde_json::json!({ "status": "no-localization" }),
        Some(p) => {
            let t = p.transform.translation();
            serde_json::json!({
                "status": "localized",
                "rotation": p.transform.rotation_row_major(),
                "translation": [t.x, t.y, t.z],
                "quaternion": p.transform.quaternion(),
                "inliers": p.inliers.len(),
                "support": p.support,
                "iterations": p.iterations_used,
                "mean_residual": p.mean_residual,
            })
        }
    }
}

/// Segments described for matching or map insertion.
#[derive(Debug, Clone)]
pub struct DescribedSegments {
    pub segments: Vec<Segment>,
    pub descriptors: Vec<Descriptor>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// A validated configuration with its model loaded.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    model: Option<DsmModel>,
}

impl Pipeline {
    /// Loads the model file when the learned descriptor is selected.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let model = match (config.descriptor, &config.model_path) {
            (DescriptorKind::Learned16, Some(p)) => Some(load_model(p)?),
            (DescriptorKind::Learned16, None) => return Err(DescriptorError::ModelNotLoaded.into()),
            (DescriptorKind::Eigen7, _) => None,
        };
        Ok(Self { config, model })
    }

    pub fn with_model(config: PipelineConfig, model: DsmModel) -> Result<Self, PipelineError> {
        config.validate()?;
        if config.descriptor != DescriptorKind::Learned16 {
            return Err(PipelineError::ConfigMismatch("a network model was given for the eigenvalue descriptor".into()));
        }
        Ok(Self { config, model: Some(model) })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&DsmModel> {
        self.model.as_ref()
    }

    /// Describes one segment exactly as [`Pipeline::describe`] would.
    pub fn describe_segment(&self, segment: &Segment) -> Result<Descriptor, PipelineError> {
        match self.config.descriptor {
            DescriptorKind::Eigen7 => Ok(eigenvalue_descriptor(segment)?),
            DescriptorKind::Learned16 => {
                let model = self.model.as_ref().ok_or(DescriptorError::ModelNotLoaded)?;
                let canon = canonicalize(segment, self.config.align, self.config.resample_seed ^ u64::from(segment.id.0))?;
                Ok(describe_dsm(&canon, model)?)
            }
        }
    }

    pub fn segment(&self, cloud: &PointCloud) -> Result<Vec<Segment>, PipelineError> {
        Ok(euclidean_segment(cloud, &self.config.segmentation)?)
    }

    /// Canonicalizes (learned descriptor only) and describes segments.
    /// Segments whose shape admits no descriptor are dropped. Returns the
    /// kept segments, their descriptors and the preprocessing / descriptor
    /// times in milliseconds.
    pub fn describe(&self, segments: Vec<Segment>) -> Result<(DescribedSegments, f64, f64), PipelineError> {
        match self.config.descriptor {
            DescriptorKind::Eigen7 => {
                let t = Instant::now();
                let results: Vec<Result<Descriptor, DescriptorError>> = segments.par_iter().map(eigenvalue_descriptor).collect();
                let mut out = DescribedSegments { segments: Vec::new(), descriptors: Vec::new() };
                for (s, r) in segments.into_iter().zip(results) {
                    match r {
                        Ok(d) => {
                            out.segments.push(s);
                            out.descriptors.push(d);
                        }
                        Err(DescriptorError::DegenerateCovariance(_)) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                Ok((out, 0.0, ms(t)))
            }
            DescriptorKind::Learned16 => {
                let model = self.model.as_ref().ok_or(DescriptorError::ModelNotLoaded)?;
                let t = Instant::now();
                let canon: Vec<CanonicalSegment> = segments
                    .par_iter()
                    .map(|s| canonicalize(s, self.config.align, self.config.resample_seed ^ u64::from(s.id.0)))
                    .collect::<Result<_, _>>()?;
                let pre = ms(t);
                let t = Instant::now();
                let descriptors = describe_dsm_batch(&canon, model)?;
                Ok((DescribedSegments { segments, descriptors }, pre, ms(t)))
            }
        }
    }

    /// Segments and describes every cloud into one map. Cloud `i` becomes
    /// source cloud `i`; segment ids run consecutively from 0.
    pub fn build_map(&self, clouds: &[PointCloud]) -> Result<SegmentMap, PipelineError> {
        if clouds.is_empty() {
            return Err(PipelineError::NoInput);
        }
        let mut map = SegmentMap::new(self.config.descriptor);
        for (ci, cloud) in clouds.iter().enumerate() {
            let segments = self.segment(cloud)?;
            let (described, _, _) = self.describe(segments)?;
            for (s, d) in described.segments.into_iter().zip(described.descriptors) {
                let id = map.next_id();
                let seg = Segment::new(id, CloudId(ci as u32), s.into_points()).expect("segments are non-empty");
                map.push(seg, d)?;
            }
        }
        Ok(map)
    }

    pub fn index(&self, map: &SegmentMap) -> Result<FeatureIndex, PipelineError> {
        if map.descriptor_kind() != self.config.descriptor {
            return Err(PipelineError::ConfigMismatch(format!(
                "map holds {:?} descriptors but the pipeline computes {:?}",
                map.descriptor_kind(),
                self.config.descriptor
            )));
        }
        Ok(FeatureIndex::new(map, self.config.search)?)
    }

    /// Full query: segment, describe, match, prune, estimate pose.
    pub fn localize(&self, cloud: &PointCloud, index: &FeatureIndex) -> Result<Localization, PipelineError> {
        let start = Instant::now();
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let segments = self.segment(cloud)?;
        timings.segmentation_ms = ms(t);

        let (described, pre, desc) = self.describe(segments)?;
        timings.preprocessing_ms = pre;
        timings.descriptor_ms = desc;

        let t = Instant::now();
        let queries: Vec<Query> = described
            .segments
            .iter()
            .zip(described.descriptors)
            .map(|(s, d)| Query { id: s.id, centroid: s.centroid(), descriptor: d })
            .collect();
        let corrs = if queries.is_empty() { Vec::new() } else { index.knn_match(&queries, self.config.effective_k())? };
        timings.matching_ms = ms(t);

        let t = Instant::now();
        let corrs = match self.config.quality_threshold {
            Some(th) => quality_prune(&corrs, th)?,
            None => corrs,
        };
        timings.pruning_ms = ms(t);

        let t = Instant::now();
        let pose = if corrs.len() < SAMPLE_SIZE {
            None
        } else {
            match self.config.estimator {
                Estimator::Ransac => ransac_pose(&corrs, &self.config.ransac)?,
                Estimator::Prosac => prosac_pose(&corrs, &self.config.ransac)?,
            }
        };
        timings.pose_ms = ms(t);

        timings.total_ms = ms(start);
        timings.overhead_ms = (timings.total_ms - timings.stage_sum()).max(0.0);
        Ok(Localization { pose, live_segments: queries.len(), correspondences: corrs.len(), timings })
    }
}
