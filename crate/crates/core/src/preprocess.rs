//! Segment canonicalisation ahead of description: fixed point count,
//! centring and PCA alignment, plus yaw augmentation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, transform_points, Point3, RigidTransform, Segment};
use crate::sampling::fps_per_segment;

/// Point count of a canonical segment.
pub const CANONICAL_POINTS: usize = 256;
/// Eigenvalue ratio above which two principal axes are treated as tied.
pub const EIGEN_TIE_RATIO: f64 = 0.99;
const MOMENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("segment has no points")]
    EmptySegment,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    None,
    #[default]
    Pca2d,
    Pca3d,
}

impl FromStr for AlignMode {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AlignMode::None),
            "pca2d" => Ok(AlignMode::Pca2d),
            "pca3d" => Ok(AlignMode::Pca3d),
            other => Err(PreprocessError::InvalidArgument(format!("unknown alignment mode '{other}'"))),
        }
    }
}

impl fmt::Display for AlignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMode::None => "none",
            AlignMode::Pca2d => "pca2d",
            AlignMode::Pca3d => "pca3d",
        })
    }
}

/// Output of [`pca_align`].
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub points: Vec<Point3>,
    /// Maps input points to `points`.
    pub transform: RigidTransform,
    /// Principal axes were (near-)tied, so only centring was applied.
    pub degenerate: bool,
}

/// Exactly [`CANONICAL_POINTS`] points centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSegment {
    points: Vec<Point3>,
    alignment: AlignMode,
    original_centroid: Point3,
    transform: RigidTransform,
    degenerate: bool,
}

impl CanonicalSegment {
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn alignment(&self) -> AlignMode {
        self.alignment
    }

    pub fn original_centroid(&self) -> Point3 {
        self.original_centroid
    }

    /// Maps resampled segment points into the canonical frame.
    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Resamples to exactly `n` points.
///
/// More than `n` points: farthest point sampling seeded at the point
/// farthest from the centroid. Fewer: all originals followed by uniform
/// draws with replacement from a seeded RNG. Exactly `n`: unchanged.
pub fn resample_to_n(seg: &Segment, n: usize, rng_seed: u64) -> Result<Vec<Point3>, PreprocessError> {
    let points = seg.points();
    if points.is_empty() {
        return Err(PreprocessError::EmptySegment);
    }
    if n == 0 {
        return Err(PreprocessError::InvalidArgument("target point count must be positive".into()));
    }
    if points.len() == n {
        return Ok(points.to_vec());
    }
    if points.len() > n {
        let c = seg.centroid();
        let mut seed = 0;
        for (i, p) in points.iter().enumerate() {
            if p.distance_squared(&c) > points[seed].distance_squared(&c) {
                seed = i;
            }
        }
        let idx = fps_per_segment(points, n, seed).map_err(|e| PreprocessError::InvalidArgument(e.to_string()))?;
        return Ok(idx.into_iter().map(|i| points[i]).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = points.to_vec();
    while out.len() < n {
        out.push(points[rng.random_range(0..points.len())]);
    }
    Ok(out)
}

/// Orients `axis` so the third moment of the projections is non-negative;
/// for a vanishing moment, so the projection of largest magnitude is positive.
fn orient(axis: Vector3<f64>, centered: &[Vector3<f64>]) -> Vector3<f64> {
    let proj: Vec<f64> = centered.iter().map(|p| p.dot(&axis)).collect();
    let m3 = proj.iter().map(|v| v * v * v).sum::<f64>() / proj.len() as f64;
    let flip = if m3.abs() > MOMENT_EPS {
        m3 < 0.0
    } else {
        let extreme = proj.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        extreme < 0.0
    };
    if flip {
        -axis
    } else {
        axis
    }
}

/// Centres the points and rotates principal axes onto the coordinate axes.
///
/// `Pca2d` rotates about z so the dominant direction of the xy covariance is
/// +x. `Pca3d` maps the eigenvectors in descending eigenvalue order to
/// x, y, z, with z = x × y. Near-tied eigenvalues fall back to centring only.
pub fn pca_align(points: &[Point3], mode: AlignMode) -> Result<Aligned, PreprocessError> {
    let c = centroid(points).map_err(|_| PreprocessError::EmptySegment)?.to_vector();
    let centered: Vec<Vector3<f64>> = points.iter().map(|p| p.to_vector() - c).collect();
    let n = centered.len() as f64;

    let rotation = match mode {
        AlignMode::None => Some(Matrix3::identity()),
        AlignMode::Pca2d => {
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for p in &centered {
                sxx += p.x * p.x;
                syy += p.y * p.y;
                sxy += p.x * p.y;
            }
            let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
            let mean = 0.5 * (sxx + syy);
            let radius = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
            let (l1, l2) = (mean + radius, mean - radius);
            if l1 <= 0.0 || l2 / l1 > EIGEN_TIE_RATIO {
                None
            } else {
                let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
                let e1 = orient(Vector3::new(theta.cos(), theta.sin(), 0.0), &centered);
                Some(Matrix3::new(e1.x, e1.y, 0.0, -e1.y, e1.x, 0.0, 0.0, 0.0, 1.0))
            }
        }
        AlignMode::Pca3d => {
            let mut cov = Matrix3::zeros();
            for p in &centered {
                cov += p * p.transpose();
            }
            cov /= n;
            let eig = SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let l: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            if l[1] <= 0.0 || l[1] / l[0] > EIGEN_TIE_RATIO || l[2] / l[1] > EIGEN_TIE_RATIO {
                None
            } else {
                let e1 = orient(eig.eigenvectors.column(order[0]).normalize(), &centered);
                let e2 = orient(eig.eigenvectors.column(order[1]).normalize(), &centered);
                let e3 = e1.cross(&e2);
                Some(Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]))
            }
        }
    };

    let degenerate = rotation.is_none();
    let r = rotation.unwrap_or_else(Matrix3::identity);
    let transform = RigidTransform::new(r, -(r * c)).map_err(|e| PreprocessError::InvalidArgument(e.to_string()))?;
    Ok(Aligned { points: transform_points(&transform, points), transform, degenerate })
}

/// Rotates about the vertical axis through the centroid by one angle drawn
/// uniformly from `[0, max_angle_deg]` degrees.
pub fn rotation_augment(points: &[Point3], rng_seed: u64, max_angle_deg: f64) -> Result<Vec<Point3>, PreprocessError> {
    if !(max_angle_deg > 0.0 && max_angle_deg <= 360.0) {
        return Err(PreprocessError::InvalidArgument(format!("max angle {max_angle_deg} outside (0, 360]")));
    }
    let c = centroid(points).map_err(|_| PreprocessError::EmptySegment)?.to_vector();
    let angle = ChaCha8Rng::seed_from_u64(rng_seed).random_range(0.0..=max_angle_deg).to_radians();
    let yaw = RigidTransform::from_yaw(angle, Vector3::zeros());
    let t = RigidTransform::from_translation(c).compose(&yaw).compose(&RigidTransform::from_translation(-c));
    Ok(transform_points(&t, points))
}

/// Resample to 256 points, then centre and align.
pub fn canonicalize(seg: &Segment, mode: AlignMode, rng_seed: u64) -> Result<CanonicalSegment, PreprocessError> {
    let resampled = resample_to_n(seg, CANONICAL_POINTS, rng_seed)?;
    let aligned = pca_align(&resampled, mode)?;
    Ok(CanonicalSegment {
        points: aligned.points,
        alignment: mode,
        original_centroid: seg.centroid(),
        transform: aligned.transform,
        degenerate: aligned.degenerate,
    })
}
