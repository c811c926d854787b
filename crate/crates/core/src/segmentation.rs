//! Euclidean cluster extraction with optional ground removal.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CloudId, Point3, PointCloud, Segment, SegmentId};
use crate::spatial::VoxelGrid;

/// Default z-threshold: a sensor mounted about 1.8 m above the ground, with
/// 0.3 m of slack, in the sensor frame.
pub const DEFAULT_GROUND_Z: f64 = -1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundRemoval {
    None,
    /// Removes the best-supported near-horizontal plane.
    PlaneRansac { distance: f64, iterations: usize, seed: u64 },
    /// Removes points with `z` below the threshold.
    ZThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub cluster_tolerance: f64,
    pub min_points: usize,
    pub max_points: usize,
    pub ground_removal: GroundRemoval,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self { cluster_tolerance: 0.2, min_points: 100, max_points: 15000, ground_removal: GroundRemoval::ZThreshold(DEFAULT_GROUND_Z) }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |m: String| Err(SegmentationError::InvalidParams(m));
        if !(self.cluster_tolerance > 0.0 && self.cluster_tolerance.is_finite()) {
            return bad(format!("cluster tolerance {} must be positive", self.cluster_tolerance));
        }
        if self.min_points == 0 || self.min_points > self.max_points {
            return bad(format!("need 0 < min_points ({}) <= max_points ({})", self.min_points, self.max_points));
        }
        match self.ground_removal {
            GroundRemoval::PlaneRansac { distance, iterations, .. } if !(distance > 0.0) || iterations == 0 => {
                bad("plane removal needs a positive distance and iteration count".into())
            }
            GroundRemoval::ZThreshold(z) if !z.is_finite() => bad("z threshold must be finite".into()),
            _ => Ok(()),
        }
    }
}

/// Returns the indices of points kept after ground removal, ascending.
pub fn remove_ground(points: &[Point3], mode: &GroundRemoval) -> Vec<usize> {
    match *mode {
        GroundRemoval::None => (0..points.len()).collect(),
        GroundRemoval::ZThreshold(z) => (0..points.len()).filter(|&i| points[i].z >= z).collect(),
        GroundRemoval::PlaneRansac { distance, iterations, seed } => {
            let Some((normal, offset)) = fit_ground_plane(points, distance, iterations, seed) else {
                return (0..points.len()).collect();
            };
            (0..points.len()).filter(|&i| (normal.dot(&points[i].to_vector()) - offset).abs() > distance).collect()
        }
    }
}

/// Largest-support plane with a normal within 30° of vertical.
fn fit_ground_plane(points: &[Point3], distance: f64, iterations: usize, seed: u64) -> Option<(Vector3<f64>, f64)> {
    if points.len() < 3 {
        return None;
    }
    let min_vertical = 30f64.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..iterations {
        let a = points[rng.random_range(0..points.len())].to_vector();
        let b = points[rng.random_range(0..points.len())].to_vector();
        let c = points[rng.random_range(0..points.len())].to_vector();
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-12 {
            continue;
        }
        let n = n / len;
        if n.z.abs() < min_vertical {
            continue;
        }
        let offset = n.dot(&a);
        let support = points.iter().filter(|p| (n.dot(&p.to_vector()) - offset).abs() <= distance).count();
        if best.as_ref().is_none_or(|&(s, _, _)| support > s) {
            best = Some((support, n, offset));
        }
    }
    best.map(|(_, n, o)| (n, o))
}

/// Connected components of the graph linking points at distance
/// `<= cluster_tolerance`, after ground removal; components outside
/// `[min_points, max_points]` are dropped.
///
/// Segments come out ordered by their lowest input index, numbered from 0,
/// with points in input order. An empty result is not an error.
pub fn euclidean_segment(cloud: &PointCloud, params: &SegmentationParams) -> Result<Vec<Segment>, SegmentationError> {
    params.validate()?;
    let kept = remove_ground(&cloud.points, &params.ground_removal);
    let points: Vec<Point3> = kept.iter().map(|&i| cloud.points[i]).collect();
    let tol = params.cluster_tolerance;
    let grid = VoxelGrid::build(&points, tol);

    let mut visited = vec![false; points.len()];
    let mut queue = VecDeque::new();
    let mut segments = Vec::new();
    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            grid.for_each_within(&points, &points[i], tol, |j| {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            });
        }
        if members.len() < params.min_points || members.len() > params.max_points {
            continue;
        }
        members.sort_unstable();
        let pts = members.into_iter().map(|i| points[i]).collect();
        let id = SegmentId(segments.len() as u32);
        segments.push(Segment::new(id, CloudId(0), pts).expect("component is non-empty"));
    }
    Ok(segments)
}
