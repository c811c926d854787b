//! Point selection inside segments: farthest point sampling (per segment and
//! batched over a segment tensor), uniform random sampling and
//! inverse-density sampling.

mod batched;
mod bench;
mod kernel;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Point3;
use crate::spatial::VoxelGrid;

pub use batched::{fps_batched, SampleBatch, SampleResult};
pub use bench::{fps_benchmark, FpsBenchReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("cannot sample {requested} of {available} points")]
    BadSampleSize { requested: usize, available: usize },
    #[error("seed index {seed} out of range for {available} points")]
    BadSeed { seed: usize, available: usize },
    #[error("segment {segment} has {valid} valid points, fewer than the {requested} requested")]
    RaggedBatch { segment: usize, valid: usize, requested: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Greedy max-min farthest point sampling over one segment.
///
/// `result[0] == seed_index`; each following index maximizes the squared
/// distance to its nearest already-selected point, ties going to the lowest
/// index.
pub fn fps_per_segment(points: &[Point3], m: usize, seed_index: usize) -> Result<Vec<usize>, SamplingError> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(SamplingError::BadSampleSize { requested: m, available: n });
    }
    if seed_index >= n {
        return Err(SamplingError::BadSeed { seed: seed_index, available: n });
    }
    let mut nearest = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut out = Vec::with_capacity(m);
    let mut last = seed_index;
    selected[last] = true;
    out.push(last);
    while out.len() < m {
        let anchor = points[last];
        let mut best = -1.0;
        let mut best_index = usize::MAX;
        for (j, p) in points.iter().enumerate() {
            if selected[j] {
                continue;
            }
            let d = p.distance_squared(&anchor);
            if d < nearest[j] {
                nearest[j] = d;
            }
            if nearest[j] > best {
                best = nearest[j];
                best_index = j;
            }
        }
        last = best_index;
        selected[last] = true;
        out.push(last);
    }
    Ok(out)
}

/// FPS with the seed point drawn uniformly from a seeded RNG.
pub fn fps_random_seed(points: &[Point3], m: usize, rng_seed: u64) -> Result<Vec<usize>, SamplingError> {
    if points.is_empty() {
        return Err(SamplingError::BadSampleSize { requested: m, available: 0 });
    }
    let seed = ChaCha8Rng::seed_from_u64(rng_seed).random_range(0..points.len());
    fps_per_segment(points, m, seed)
}

/// Uniform sampling without replacement, reproducible from `rng_seed`.
pub fn random_sample(points: &[Point3], m: usize, rng_seed: u64) -> Result<Vec<usize>, SamplingError> {
    if m > points.len() {
        return Err(SamplingError::BadSampleSize { requested: m, available: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(index::sample(&mut rng, points.len(), m).into_vec())
}

/// Sampling without replacement where each point is drawn with weight
/// `1 / (1 + neighbours within density_radius)`.
pub fn inverse_density_sample(points: &[Point3], m: usize, density_radius: f64, rng_seed: u64) -> Result<Vec<usize>, SamplingError> {
    if m > points.len() {
        return Err(SamplingError::BadSampleSize { requested: m, available: points.len() });
    }
    if !(density_radius > 0.0) || !density_radius.is_finite() {
        return Err(SamplingError::InvalidArgument(format!("density radius must be positive, got {density_radius}")));
    }
    let weights = inverse_density_weights(points, density_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    index::sample_weighted(&mut rng, points.len(), |i| weights[i], m)
        .map(|v| v.into_vec())
        .map_err(|e| SamplingError::InvalidArgument(e.to_string()))
}

pub(crate) fn inverse_density_weights(points: &[Point3], radius: f64) -> Vec<f64> {
    let grid = VoxelGrid::build(points, radius);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut count = 0usize;
            grid.for_each_within(points, p, radius, |j| count += (j != i) as usize);
            1.0 / (1.0 + count as f64)
        })
        .collect()
}
