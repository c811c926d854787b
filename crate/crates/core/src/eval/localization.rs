use serde::Serialize;

use super::EvalError;
use crate::geometry::PointCloud;
use crate::io::SegmentMap;
use crate::pipeline::{Pipeline, StageTimings};
use crate::registration::PoseEstimate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationRun {
    /// Number of clouds that produced a pose.
    pub count: usize,
    pub poses: Vec<Option<PoseEstimate>>,
    /// Mean over queries.
    pub timings: StageTimings,
}

/// Localizes every live cloud against the map, in order.
pub fn localization_run(pipeline: &Pipeline, live_clouds: &[PointCloud], map: &SegmentMap) -> Result<LocalizationRun, EvalError> {
    let index = pipeline.index(map)?;
    let mut poses = Vec::with_capacity(live_clouds.len());
    let mut sum = StageTimings::default();
    for cloud in live_clouds {
        let loc = pipeline.localize(cloud, &index)?;
        sum.accumulate(&loc.timings);
        poses.push(loc.pose);
    }
    let count = poses.iter().filter(|p| p.is_some()).count();
    let timings = if live_clouds.is_empty() { sum } else { sum.scaled(1.0 / live_clouds.len() as f64) };
    Ok(LocalizationRun { count, poses, timings })
}
