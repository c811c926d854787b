//! C ABI for segloc.
//!
//! Every function returns a [`SeglocStatus`]; on failure the message is
//! available from [`segloc_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_load`/`*_build` functions and released
//! with the matching `*_free`. Point buffers are interleaved `x, y, z`
//! doubles.
//!
//! # Safety
//!
//! Handle arguments must be null or pointers obtained from this library and
//! not yet freed. Buffer arguments must be valid for the documented number
//! of elements; a null buffer is accepted only when its length is zero.
//! Strings must be NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use segloc::descriptor::{eigenvalue_descriptor, init_model, load_model, save_model, ChannelConfig, DescriptorError, DsmModel, EIGEN_DIM};
use segloc::eval::roc_auc;
use segloc::geometry::{CloudId, Point3, PointCloud, Segment, SegmentId};
use segloc::io::{load_map, save_map, IoError, PairLabelKind, SegmentMap};
use segloc::matching::FeatureIndex;
use segloc::pipeline::{Pipeline, PipelineConfig, PipelineError};
use segloc::sampling::{fps_batched, fps_per_segment, SampleBatch};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeglocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Corrupt, truncated or wrong-version file.
    Format = 4,
    Config = 5,
    /// The input geometry admits no result (e.g. a degenerate segment).
    Degenerate = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SeglocStatus, String);

impl Failure {
    fn invalid(m: impl Into<String>) -> Self {
        Failure(SeglocStatus::InvalidArgument, m.into())
    }
}

fn io_status(e: &IoError) -> SeglocStatus {
    match e {
        IoError::Io { .. } => SeglocStatus::Io,
        IoError::Parse { .. } | IoError::CorruptFile(_) | IoError::VersionMismatch { .. } | IoError::UnsupportedFormat(_) | IoError::InvalidMap(_) => {
            SeglocStatus::Format
        }
        _ => SeglocStatus::InvalidArgument,
    }
}

fn descriptor_status(e: &DescriptorError) -> SeglocStatus {
    match e {
        DescriptorError::Io { .. } => SeglocStatus::Io,
        DescriptorError::CorruptFile(_) | DescriptorError::VersionMismatch { .. } | DescriptorError::ShapeMismatch(_) => SeglocStatus::Format,
        DescriptorError::DegenerateCovariance(_) => SeglocStatus::Degenerate,
        DescriptorError::ModelNotLoaded => SeglocStatus::Config,
        _ => SeglocStatus::InvalidArgument,
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Io(e) => io_status(e),
            PipelineError::Descriptor(d) => descriptor_status(d),
            PipelineError::Config { .. } | PipelineError::ConfigMismatch(_) => SeglocStatus::Config,
            _ => SeglocStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure(io_status(&e), e.to_string())
    }
}

impl From<DescriptorError> for Failure {
    fn from(e: DescriptorError) -> Self {
        Failure(descriptor_status(&e), e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SeglocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SeglocStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SeglocStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SeglocStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg(p: *const c_char, name: &str) -> Result<String, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| Failure::invalid(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn points_arg(xyz: *const f64, n_points: usize) -> Result<Vec<Point3>, Failure> {
    let raw = slice_arg(xyz, n_points.checked_mul(3).ok_or_else(|| Failure::invalid("point count overflows"))?, "xyz")?;
    let pts: Vec<Point3> = raw.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Failure::invalid("points must be finite"));
    }
    Ok(pts)
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn segloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn segloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- configuration ----

pub struct SeglocConfig {
    inner: PipelineConfig,
}

/// Creates a configuration holding the defaults.
#[no_mangle]
pub unsafe extern "C" fn segloc_config_new(out: *mut *mut SeglocConfig) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        put(out, SeglocConfig { inner: PipelineConfig::default() });
        Ok(())
    })
}

/// Parses a flat `key = value` configuration file.
#[no_mangle]
pub unsafe extern "C" fn segloc_config_load(path: *const c_char, out: *mut *mut SeglocConfig) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = PipelineConfig::load(Path::new(&path))?;
        put(out, SeglocConfig { inner });
        Ok(())
    })
}

/// Sets one configuration key, using the same keys as configuration files.
#[no_mangle]
pub unsafe extern "C" fn segloc_config_set(config: *mut SeglocConfig, key: *const c_char, value: *const c_char) -> SeglocStatus {
    guard(|| {
        non_null(config, "config")?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        (*config).inner.set(&key, &value).map_err(|m| Failure(SeglocStatus::Config, m))
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_config_free(config: *mut SeglocConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// ---- network model ----

pub struct SeglocModel {
    inner: DsmModel,
}

/// Randomly initialized weights with the default channel widths.
#[no_mangle]
pub unsafe extern "C" fn segloc_model_init(seed: u64, out: *mut *mut SeglocModel) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        put(out, SeglocModel { inner: init_model(&ChannelConfig::default(), seed)? });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_model_load(path: *const c_char, out: *mut *mut SeglocModel) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        put(out, SeglocModel { inner: load_model(Path::new(&path))? });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_model_save(model: *const SeglocModel, path: *const c_char) -> SeglocStatus {
    guard(|| {
        non_null(model, "model")?;
        let path = str_arg(path, "path")?;
        Ok(save_model(&(*model).inner, Path::new(&path))?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_model_free(model: *mut SeglocModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn pipeline_from(config: *const SeglocConfig, model: *const SeglocModel) -> Result<Pipeline, Failure> {
    non_null(config, "config")?;
    let cfg = (*config).inner.clone();
    Ok(if model.is_null() { Pipeline::new(cfg)? } else { Pipeline::with_model(cfg, (*model).inner.clone())? })
}

// ---- maps ----

pub struct SeglocMap {
    inner: SegmentMap,
}

#[no_mangle]
pub unsafe extern "C" fn segloc_map_load(path: *const c_char, out: *mut *mut SeglocMap) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        put(out, SeglocMap { inner: load_map(Path::new(&path))? });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_map_save(map: *const SeglocMap, path: *const c_char) -> SeglocStatus {
    guard(|| {
        non_null(map, "map")?;
        let path = str_arg(path, "path")?;
        Ok(save_map(&(*map).inner, Path::new(&path))?)
    })
}

/// Builds a map from one cloud of `n_points` points. `model` may be null
/// when the configuration names a model file or uses the eigenvalue
/// descriptor.
#[no_mangle]
pub unsafe extern "C" fn segloc_map_build(
    config: *const SeglocConfig,
    model: *const SeglocModel,
    xyz: *const f64,
    n_points: usize,
    out: *mut *mut SeglocMap,
) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        let pipeline = pipeline_from(config, model)?;
        let cloud = PointCloud::new(points_arg(xyz, n_points)?);
        put(out, SeglocMap { inner: pipeline.build_map(&[cloud])? });
        Ok(())
    })
}

/// Number of segments in the map; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn segloc_map_len(map: *const SeglocMap) -> usize {
    if map.is_null() {
        0
    } else {
        (*map).inner.len()
    }
}

#[no_mangle]
pub unsafe extern "C" fn segloc_map_free(map: *mut SeglocMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

// ---- localization ----

/// A configured pipeline bound to an indexed map.
pub struct SeglocLocalizer {
    pipeline: Pipeline,
    index: FeatureIndex,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeglocPose {
    /// 1 when a pose was found; the other fields are zero otherwise.
    pub localized: u8,
    /// Row-major rotation taking live points into the map frame.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    /// `w, x, y, z`.
    pub quaternion: [f64; 4],
    pub inliers: usize,
    pub iterations: usize,
}

/// Copies what it needs from `config`, `model` (nullable) and `map`; the
/// handles may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn segloc_localizer_new(
    config: *const SeglocConfig,
    model: *const SeglocModel,
    map: *const SeglocMap,
    out: *mut *mut SeglocLocalizer,
) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(map, "map")?;
        let pipeline = pipeline_from(config, model)?;
        let index = pipeline.index(&(*map).inner)?;
        put(out, SeglocLocalizer { pipeline, index });
        Ok(())
    })
}

/// Localizes one cloud. Finding no pose is a success with `localized = 0`.
#[no_mangle]
pub unsafe extern "C" fn segloc_localize(localizer: *const SeglocLocalizer, xyz: *const f64, n_points: usize, pose: *mut SeglocPose) -> SeglocStatus {
    guard(|| {
        non_null(localizer, "localizer")?;
        non_null(pose, "pose")?;
        let cloud = PointCloud::new(points_arg(xyz, n_points)?);
        let loc = (*localizer).pipeline.localize(&cloud, &(*localizer).index)?;
        *pose = match loc.pose {
            None => SeglocPose::default(),
            Some(p) => {
                let t = p.transform.translation();
                SeglocPose {
                    localized: 1,
                    rotation: p.transform.rotation_row_major(),
                    translation: [t.x, t.y, t.z],
                    quaternion: p.transform.quaternion(),
                    inliers: p.inliers.len(),
                    iterations: p.iterations_used,
                }
            }
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn segloc_localizer_free(localizer: *mut SeglocLocalizer) {
    if !localizer.is_null() {
        drop(Box::from_raw(localizer));
    }
}

// ---- stateless operations ----

/// Farthest point sampling of `m` indices out of `n_points`, starting at
/// `seed_index`, written to `out_indices` (length `m`).
#[no_mangle]
pub unsafe extern "C" fn segloc_fps(xyz: *const f64, n_points: usize, m: usize, seed_index: usize, out_indices: *mut u32) -> SeglocStatus {
    guard(|| {
        non_null(out_indices, "out_indices")?;
        let pts = points_arg(xyz, n_points)?;
        let idx = fps_per_segment(&pts, m, seed_index).map_err(|e| Failure::invalid(e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(out_indices, m);
        for (o, i) in out.iter_mut().zip(idx) {
            *o = i as u32;
        }
        Ok(())
    })
}

/// Batched farthest point sampling over a `segments × stride × 3` tensor.
/// `valid_counts` and `seed_indices` have one entry per segment;
/// `out_indices` receives `segments × m` indices, row by row.
#[no_mangle]
pub unsafe extern "C" fn segloc_fps_batched(
    data: *const f64,
    segments: usize,
    stride: usize,
    valid_counts: *const usize,
    seed_indices: *const usize,
    m: usize,
    out_indices: *mut u32,
) -> SeglocStatus {
    guard(|| {
        non_null(out_indices, "out_indices")?;
        let len = segments.checked_mul(stride).and_then(|v| v.checked_mul(3)).ok_or_else(|| Failure::invalid("tensor size overflows"))?;
        let data = slice_arg(data, len, "data")?;
        let valid = slice_arg(valid_counts, segments, "valid_counts")?;
        let seeds = slice_arg(seed_indices, segments, "seed_indices")?;
        let batch = SampleBatch::from_tensor(data, segments, stride, valid).map_err(|e| Failure::invalid(e.to_string()))?;
        let result = fps_batched(&batch, m, seeds).map_err(|e| Failure::invalid(e.to_string()))?;
        std::slice::from_raw_parts_mut(out_indices, segments * m).copy_from_slice(result.as_slice());
        Ok(())
    })
}

/// The 7 covariance-eigenvalue shape features of one segment.
#[no_mangle]
pub unsafe extern "C" fn segloc_eigen_descriptor(xyz: *const f64, n_points: usize, out: *mut f64) -> SeglocStatus {
    guard(|| {
        non_null(out, "out")?;
        let pts = points_arg(xyz, n_points)?;
        let seg = Segment::new(SegmentId(0), CloudId(0), pts).map_err(|e| Failure::invalid(e.to_string()))?;
        let d = eigenvalue_descriptor(&seg)?;
        std::slice::from_raw_parts_mut(out, EIGEN_DIM).copy_from_slice(d.values());
        Ok(())
    })
}

/// Area under the ROC curve; `labels[i]` is 1 for a matching pair, 0 otherwise.
#[no_mangle]
pub unsafe extern "C" fn segloc_roc_auc(scores: *const f64, labels: *const u8, n: usize, auc: *mut f64) -> SeglocStatus {
    guard(|| {
        non_null(auc, "auc")?;
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<PairLabelKind> = slice_arg(labels, n, "labels")?
            .iter()
            .map(|&l| match l {
                0 => Ok(PairLabelKind::NonMatch),
                1 => Ok(PairLabelKind::Match),
                other => Err(Failure::invalid(format!("label {other} is neither 0 nor 1"))),
            })
            .collect::<Result<_, _>>()?;
        *auc = roc_auc(scores, &labels).map_err(|e| Failure::invalid(e.to_string()))?.auc;
        Ok(())
    })
}
