use rayon::prelude::*;
use serde::Serialize;

use super::EvalError;
use crate::descriptor::Descriptor;
use crate::geometry::{RigidTransform, Segment};
use crate::matching::feature_distance;
use nalgebra::Vector3;

/// 0°, 10°, …, 360°.
pub const DEFAULT_ANGLES_DEG: [f64; 37] = {
    let mut a = [0.0; 37];
    let mut i = 0;
    while i < 37 {
        a[i] = (i * 10) as f64;
        i += 1;
    }
    a
};

/// Mean normalized descriptor change per rotation angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationDelta {
    pub angles_deg: Vec<f64>,
    /// Mean over segments of `d(describe(rotated), describe(original)) / z`.
    pub delta: Vec<f64>,
    /// Mean feature distance over all distinct unordered segment pairs.
    pub z: f64,
}

impl RotationDelta {
    pub fn mean(&self) -> f64 {
        if self.delta.is_empty() {
            return 0.0;
        }
        self.delta.iter().sum::<f64>() / self.delta.len() as f64
    }
}

fn is_identity_angle(deg: f64) -> bool {
    deg.rem_euclid(360.0) == 0.0
}

/// Rotates a segment about the vertical axis through its centroid.
pub fn rotate_segment_yaw(seg: &Segment, deg: f64) -> Segment {
    let c = seg.centroid();
    let about = RigidTransform::from_translation(c.to_vector())
        .compose(&RigidTransform::from_yaw(deg.to_radians(), Vector3::zeros()))
        .compose(&RigidTransform::from_translation(-c.to_vector()));
    let points = seg.points().iter().map(|p| about.apply(p)).collect();
    Segment::new(seg.id, seg.source_cloud, points).expect("rotation keeps the point count")
}

/// Rotation-variation metric. Angles that are multiples of 360° use the
/// unrotated segment, so their δ is exactly zero.
pub fn rotation_delta<F, E>(describe: F, segments: &[Segment], angles_deg: &[f64]) -> Result<RotationDelta, EvalError>
where
    F: Fn(&Segment) -> Result<Descriptor, E> + Sync,
    E: Into<EvalError> + Send,
{
    if segments.len() < 2 {
        return Err(EvalError::TooFewSegments(segments.len()));
    }
    if let Some(&a) = angles_deg.iter().find(|a| !a.is_finite()) {
        return Err(EvalError::InvalidArgument(format!("angle {a} is not finite")));
    }
    let reference: Vec<Descriptor> = segments.par_iter().map(|s| describe(s).map_err(Into::into)).collect::<Result<_, _>>()?;

    let n = reference.len();
    let pair_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| feature_distance(&reference[i], &reference[j])).sum::<Result<f64, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let z = pair_sums.iter().sum::<f64>() / (n * (n - 1) / 2) as f64;
    if !(z > 0.0) {
        return Err(EvalError::InvalidArgument("all segments have identical descriptors; δ is undefined".into()));
    }

    let mut delta = Vec::with_capacity(angles_deg.len());
    for &deg in angles_deg {
        if is_identity_angle(deg) {
            delta.push(0.0);
            continue;
        }
        let dists: Vec<f64> = segments
            .par_iter()
            .zip(&reference)
            .map(|(s, r)| {
                let d = describe(&rotate_segment_yaw(s, deg)).map_err(Into::into)?;
                feature_distance(&d, r).map_err(|e| EvalError::InvalidArgument(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        delta.push(dists.iter().sum::<f64>() / n as f64 / z);
    }
    Ok(RotationDelta { angles_deg: angles_deg.to_vec(), delta, z })
}
