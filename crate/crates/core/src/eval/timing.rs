use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::Serialize;

use super::EvalError;
use crate::descriptor::{describe_dsm_batch, Descriptor, DsmModel};
use crate::geometry::PointCloud;
use crate::io::SegmentMap;
use crate::pipeline::{Pipeline, StageTimings};
use crate::preprocess::CanonicalSegment;
use crate::registration::PoseEstimate;

pub const TIMING_REPEATS: usize = 20;
pub const TIMING_WARMUP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadMode {
    /// Everything runs on one worker thread.
    SingleCore,
    /// The global thread pool.
    MultiCore,
}

impl fmt::Display for ThreadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThreadMode::SingleCore => "single_core",
            ThreadMode::MultiCore => "multi_core",
        })
    }
}

fn run_in_mode<T: Send>(mode: ThreadMode, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    match mode {
        ThreadMode::MultiCore => Ok(f()),
        ThreadMode::SingleCore => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| EvalError::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub mode: ThreadMode,
    pub clouds: usize,
    pub repeats: usize,
    pub warmup: usize,
    /// Per-query means from the repetition with the median total.
    pub timings: StageTimings,
    /// Pipeline outputs of the last repetition, one per cloud.
    #[serde(skip)]
    pub poses: Vec<Option<PoseEstimate>>,
}

impl TimingReport {
    pub fn csv_header() -> &'static str {
        "mode,clouds,repeats,segmentation_ms,preprocessing_ms,descriptor_ms,matching_ms,pruning_ms,pose_ms,overhead_ms,total_ms"
    }

    pub fn csv_row(&self) -> String {
        let t = &self.timings;
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.mode,
            self.clouds,
            self.repeats,
            t.segmentation_ms,
            t.preprocessing_ms,
            t.descriptor_ms,
            t.matching_ms,
            t.pruning_ms,
            t.pose_ms,
            t.overhead_ms,
            t.total_ms
        )
    }

    pub fn table(&self) -> String {
        let t = &self.timings;
        let mut s = format!("mode {} ({} clouds, {} repeats)\n", self.mode, self.clouds, self.repeats);
        for (name, v) in [
            ("segmentation", t.segmentation_ms),
            ("preprocessing", t.preprocessing_ms),
            ("descriptor", t.descriptor_ms),
            ("matching", t.matching_ms),
            ("pruning", t.pruning_ms),
            ("pose", t.pose_ms),
            ("overhead", t.overhead_ms),
            ("total", t.total_ms),
        ] {
            let _ = writeln!(s, "  {name:<14}{v:>10.3} ms");
        }
        s
    }
}

/// Per-stage wall-clock means. Each repetition localizes every cloud once
/// and yields per-query means; the repetition with the median total is
/// reported, so its stages and overhead add up to its total.
pub fn timing_bench(
    pipeline: &Pipeline,
    clouds: &[PointCloud],
    map: &SegmentMap,
    mode: ThreadMode,
    repeats: usize,
    warmup: usize,
) -> Result<TimingReport, EvalError> {
    if clouds.is_empty() {
        return Err(EvalError::InvalidArgument("timing needs at least one cloud".into()));
    }
    if repeats == 0 {
        return Err(EvalError::InvalidArgument("repeats must be at least 1".into()));
    }
    let index = pipeline.index(map)?;
    run_in_mode(mode, || {
        let mut runs: Vec<StageTimings> = Vec::with_capacity(repeats);
        let mut poses = Vec::new();
        for r in 0..warmup + repeats {
            let mut sum = StageTimings::default();
            poses.clear();
            for cloud in clouds {
                let loc = pipeline.localize(cloud, &index)?;
                sum.accumulate(&loc.timings);
                poses.push(loc.pose);
            }
            if r >= warmup {
                runs.push(sum.scaled(1.0 / clouds.len() as f64));
            }
        }
        runs.sort_by(|a, b| a.total_ms.total_cmp(&b.total_ms));
        let timings = runs[runs.len() / 2];
        Ok(TimingReport { mode, clouds: clouds.len(), repeats, warmup, timings, poses })
    })?
}

/// Wall-clock comparison of a down-sampling model against the same weights
/// evaluated at full resolution in every layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptorSpeed {
    pub segments: usize,
    pub repeats: usize,
    pub dsm_ms: f64,
    pub reference_ms: f64,
    pub speedup: f64,
}

impl DescriptorSpeed {
    pub fn csv_header() -> &'static str {
        "segments,repeats,dsm_ms,reference_ms,speedup"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.3},{:.3},{:.3}", self.segments, self.repeats, self.dsm_ms, self.reference_ms, self.speedup)
    }
}

fn median_ms(repeats: usize, mut f: impl FnMut() -> Result<Vec<Descriptor>, EvalError>) -> Result<f64, EvalError> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(f()?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Median descriptor time over `repeats` runs (after one warm-up each).
pub fn descriptor_speed(model: &DsmModel, segments: &[CanonicalSegment], repeats: usize) -> Result<DescriptorSpeed, EvalError> {
    if segments.is_empty() || repeats == 0 {
        return Err(EvalError::InvalidArgument("need at least one segment and one repeat".into()));
    }
    let reference = model.full_resolution();
    describe_dsm_batch(segments, model)?;
    describe_dsm_batch(segments, &reference)?;
    let dsm_ms = median_ms(repeats, || Ok(describe_dsm_batch(segments, model)?))?;
    let reference_ms = median_ms(repeats, || Ok(describe_dsm_batch(segments, &reference)?))?;
    Ok(DescriptorSpeed { segments: segments.len(), repeats, dsm_ms, reference_ms, speedup: reference_ms / dsm_ms })
}
