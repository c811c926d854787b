use nalgebra::{Matrix3, SymmetricEigen};

use super::{Descriptor, DescriptorError, DescriptorKind};
use crate::geometry::{centroid, Segment};

pub const EIGEN_DIM: usize = 7;

/// Shape features from the normalised covariance eigenvalues
/// `e1 >= e2 >= e3`, `e1 + e2 + e3 = 1`:
/// linearity, planarity, scattering, omnivariance, anisotropy,
/// eigenentropy and change of curvature, in that order.
pub fn eigenvalue_descriptor(segment: &Segment) -> Result<Descriptor, DescriptorError> {
    let points = segment.points();
    if points.len() < 3 {
        return Err(DescriptorError::DegenerateCovariance("fewer than 3 points"));
    }
    let c = centroid(points).expect("non-empty");
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.sub(&c).to_vector();
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;

    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let sum: f64 = ev.iter().sum();
    if !(sum > 0.0) {
        return Err(DescriptorError::DegenerateCovariance("covariance has rank 0"));
    }
    let (e1, e2, e3) = (ev[0] / sum, ev[1] / sum, ev[2] / sum);
    let entropy = -[e1, e2, e3].iter().filter(|&&e| e > 0.0).map(|&e| e * e.ln()).sum::<f64>();
    let values = vec![
        (e1 - e2) / e1,
        (e2 - e3) / e1,
        e3 / e1,
        (e1 * e2 * e3).cbrt(),
        (e1 - e3) / e1,
        entropy,
        e3 / (e1 + e2 + e3),
    ];
    Descriptor::new(DescriptorKind::Eigen7, values, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{transform_points, CloudId, Point3, RigidTransform, SegmentId};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(points: Vec<Point3>) -> Segment {
        Segment::new(SegmentId(0), CloudId(0), points).unwrap()
    }

    /// Closed-form eigenvalues of a symmetric 3×3 matrix (trigonometric
    /// solution of the characteristic cubic), descending.
    fn cubic_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
        let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        if p1 == 0.0 {
            let mut d = [a[0][0], a[1][1], a[2][2]];
            d.sort_by(|x, y| y.total_cmp(x));
            return d;
        }
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let l2 = 3.0 * q - l1 - l3;
        [l1, l2, l3]
    }

    fn oracle_features(points: &[Point3]) -> [f64; 7] {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
        let my = points.iter().map(|p| p.y).sum::<f64>() / n;
        let mz = points.iter().map(|p| p.z).sum::<f64>() / n;
        let mut a = [[0.0; 3]; 3];
        for p in points {
            let d = [p.x - mx, p.y - my, p.z - mz];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += d[i] * d[j] / n;
                }
            }
        }
        let l = cubic_eigenvalues(a);
        let s = l[0] + l[1] + l[2];
        let (e1, e2, e3) = (l[0] / s, l[1] / s, l[2] / s);
        [(e1 - e2) / e1, (e2 - e3) / e1, e3 / e1, (e1 * e2 * e3).cbrt(), (e1 - e3) / e1, -(e1 * e1.ln() + e2 * e2.ln() + e3 * e3.ln()), e3]
    }

    #[test]
    fn line_is_pure_linearity() {
        let pts: Vec<Point3> = (0..50).map(|i| Point3::new(0.3 * i as f64, 0.1 * i as f64, -0.2 * i as f64)).collect();
        let d = eigenvalue_descriptor(&seg(pts)).unwrap();
        let v = d.values();
        assert!((v[0] - 1.0).abs() < 1e-6, "linearity {}", v[0]);
        assert!(v[1].abs() < 1e-6 && v[2].abs() < 1e-6);
    }

    #[test]
    fn plane_is_planar() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..300).map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0)).collect();
        let v = eigenvalue_descriptor(&seg(pts)).unwrap().values().to_vec();
        assert!(v[1] > v[0] && v[1] > v[2], "planarity should dominate: {v:?}");
        assert!(v[2] < 1e-12);
    }

    #[test]
    fn random_blob_matches_closed_form_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point3> =
            (0..200).map(|_| Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0) + 0.0, rng.random_range(-0.4..0.4))).collect();
        let got = eigenvalue_descriptor(&seg(pts.clone())).unwrap();
        let want = oracle_features(&pts);
        for (g, w) in got.values().iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(eigenvalue_descriptor(&seg(vec![Point3::ORIGIN; 2])), Err(DescriptorError::DegenerateCovariance(_))));
        assert!(matches!(eigenvalue_descriptor(&seg(vec![Point3::new(1.0, 2.0, 3.0); 10])), Err(DescriptorError::DegenerateCovariance(_))));
    }

    proptest! {
        #[test]
        fn invariant_under_rigid_motion(seed in 0u64..1000, angle in -3.1f64..3.1, ax in -1.0f64..1.0, ay in -1.0f64..1.0, tx in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..60).map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5))).collect();
            let t = RigidTransform::from_axis_angle(Vector3::new(ax, ay, 1.0), angle, Vector3::new(tx, -tx, 0.5 * tx));
            let a = eigenvalue_descriptor(&seg(pts.clone())).unwrap();
            let b = eigenvalue_descriptor(&seg(transform_points(&t, &pts))).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
