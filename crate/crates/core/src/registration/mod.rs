//! Rigid pose from segment-centroid correspondences: closed-form absolute
//! orientation, RANSAC and quality-ordered PROSAC.

mod prosac;

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prosac::prosac_pose;

use crate::geometry::{Point3, RigidTransform};
use crate::matching::Correspondence;

/// Points in a minimal hypothesis sample.
pub const SAMPLE_SIZE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("need at least {needed} correspondences, got {found}")]
    TooFewCorrespondences { needed: usize, found: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Maximum centroid residual, metres, for a correspondence to count as inlier.
    pub inlier_radius: f64,
    pub max_iterations: usize,
    /// Minimum support for a pose to be returned.
    pub min_inliers: usize,
    /// Target probability of having drawn one all-inlier sample, used for
    /// early termination.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { inlier_radius: 0.5, max_iterations: 1000, min_inliers: 6, confidence: 0.999, seed: 0 }
    }
}

impl RansacParams {
    fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.inlier_radius > 0.0) || self.max_iterations == 0 || !(0.0..1.0).contains(&self.confidence) {
            return Err(RegistrationError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseEstimate {
    /// Maps live coordinates into the map frame.
    pub transform: RigidTransform,
    pub inliers: Vec<Correspondence>,
    pub iterations_used: usize,
    /// Inliers counted once per live and per map segment.
    pub support: usize,
    pub mean_residual: f64,
}

/// Least-squares rigid transform taking each `a` onto its `b`.
///
/// The rotation is always proper; when the unconstrained optimum is a
/// reflection the closest proper rotation is returned (see
/// [`rms_residual`]).
pub fn estimate_rigid(pairs: &[(Point3, Point3)]) -> Result<RigidTransform, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::TooFewCorrespondences { needed: 3, found: pairs.len() });
    }
    let n = pairs.len() as f64;
    let ca = pairs.iter().fold(Vector3::zeros(), |s, (a, _)| s + a.to_vector()) / n;
    let cb = pairs.iter().fold(Vector3::zeros(), |s, (_, b)| s + b.to_vector()) / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (a, b) in pairs {
        let da = a.to_vector() - ca;
        h += da * (b.to_vector() - cb).transpose();
        spread += da * da.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mid = sv.sum() - lo - hi;
    if hi <= 0.0 || mid <= 1e-12 * hi {
        return Err(RegistrationError::DegenerateConfiguration("source points are coincident or collinear"));
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = cb - rotation * ca;
    RigidTransform::new(rotation, translation).map_err(|_| RegistrationError::DegenerateConfiguration("rotation not orthonormal"))
}

/// Root-mean-square of `|t(a) - b|`.
pub fn rms_residual(t: &RigidTransform, pairs: &[(Point3, Point3)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|(a, b)| t.apply(a).distance_squared(b)).sum::<f64>() / pairs.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct Score {
    pub inliers: Vec<usize>,
    pub support: usize,
    pub mean_residual: f64,
}

impl Score {
    fn beats(&self, other: &Score) -> bool {
        self.support > other.support || (self.support == other.support && self.mean_residual < other.mean_residual)
    }
}

pub(crate) fn score(t: &RigidTransform, corrs: &[Correspondence], radius: f64) -> Score {
    let r2 = radius * radius;
    let mut inliers = Vec::new();
    let mut total = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        let d2 = t.apply(&c.live_centroid).distance_squared(&c.map_centroid);
        if d2 <= r2 {
            inliers.push(i);
            total += d2.sqrt();
        }
    }
    let live: HashSet<_> = inliers.iter().map(|&i| corrs[i].live_segment).collect();
    let map: HashSet<_> = inliers.iter().map(|&i| corrs[i].map_segment).collect();
    let mean_residual = if inliers.is_empty() { f64::INFINITY } else { total / inliers.len() as f64 };
    Score { support: live.len().min(map.len()), inliers, mean_residual }
}

/// Fits a hypothesis to a minimal sample, rejecting samples that reuse a
/// segment or whose pairwise centroid distances disagree by more than twice
/// the inlier radius.
pub(crate) fn hypothesis(corrs: &[Correspondence], sample: &[usize], radius: f64) -> Option<RigidTransform> {
    for (x, &i) in sample.iter().enumerate() {
        for &j in &sample[x + 1..] {
            let (a, b) = (&corrs[i], &corrs[j]);
            if a.live_segment == b.live_segment || a.map_segment == b.map_segment {
                return None;
            }
            if (a.live_centroid.distance(&b.live_centroid) - a.map_centroid.distance(&b.map_centroid)).abs() > 2.0 * radius {
                return None;
            }
        }
    }
    let pairs: Vec<(Point3, Point3)> = sample.iter().map(|&i| (corrs[i].live_centroid, corrs[i].map_centroid)).collect();
    estimate_rigid(&pairs).ok()
}

/// Iterations needed to draw an all-inlier sample with the given confidence
/// when a fraction `ratio` of the data are inliers.
pub(crate) fn required_iterations(ratio: f64, confidence: f64, cap: usize) -> usize {
    let good = ratio.powi(SAMPLE_SIZE as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        (k.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Refits on the inlier set until it stops changing, then accepts the pose
/// if the support reaches `min_inliers`. Returned inliers all lie within the
/// radius under the returned transform.
pub(crate) fn finalize(
    corrs: &[Correspondence],
    mut transform: RigidTransform,
    mut best: Score,
    iterations: usize,
    params: &RansacParams,
) -> Option<PoseEstimate> {
    for _ in 0..10 {
        let pairs: Vec<(Point3, Point3)> = best.inliers.iter().map(|&i| (corrs[i].live_centroid, corrs[i].map_centroid)).collect();
        let Ok(refit) = estimate_rigid(&pairs) else { break };
        let s = score(&refit, corrs, params.inlier_radius);
        if s.support < best.support {
            break;
        }
        let same = s.inliers == best.inliers;
        transform = refit;
        best = s;
        if same {
            break;
        }
    }
    if best.support < params.min_inliers.max(SAMPLE_SIZE) {
        return None;
    }
    Some(PoseEstimate {
        transform,
        inliers: best.inliers.iter().map(|&i| corrs[i].clone()).collect(),
        iterations_used: iterations,
        support: best.support,
        mean_residual: best.mean_residual,
    })
}

/// Uniform-sampling RANSAC with adaptive termination. `Ok(None)` means no
/// hypothesis reached `min_inliers`: no localization.
pub fn ransac_pose(corrs: &[Correspondence], params: &RansacParams) -> Result<Option<PoseEstimate>, RegistrationError> {
    params.validate()?;
    if corrs.len() < SAMPLE_SIZE {
        return Err(RegistrationError::TooFewCorrespondences { needed: SAMPLE_SIZE, found: corrs.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(RigidTransform, Score)> = None;
    let mut needed = params.max_iterations;
    let mut t = 0;
    while t < needed {
        t += 1;
        let sample = index::sample(&mut rng, corrs.len(), SAMPLE_SIZE).into_vec();
        let Some(h) = hypothesis(corrs, &sample, params.inlier_radius) else { continue };
        let s = score(&h, corrs, params.inlier_radius);
        if best.as_ref().is_none_or(|(_, b)| s.beats(b)) {
            needed = required_iterations(s.inliers.len() as f64 / corrs.len() as f64, params.confidence, params.max_iterations);
            best = Some((h, s));
        }
    }
    Ok(best.and_then(|(h, s)| finalize(corrs, h, s, t, params)))
}
