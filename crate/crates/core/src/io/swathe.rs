//! Accumulation of posed 2D scans into 3D swathes by distance travelled.

use super::IoError;
use crate::geometry::{PointCloud, RigidTransform};

pub const DEFAULT_SWATHE_DISTANCE: f64 = 30.0;

/// Incremental swathe builder.
///
/// Distance is the cumulative path length of consecutive pose translations,
/// so a loop that returns to its start still counts every metre driven. A
/// swathe is emitted each time the total path length crosses a multiple of
/// `distance`; the step into a new window counts towards that window.
#[derive(Debug)]
pub struct SwatheAccumulator {
    distance: f64,
    travelled: f64,
    window: Vec<(PointCloud, RigidTransform)>,
    last_pose: Option<RigidTransform>,
    last_timestamp: Option<f64>,
    scans_seen: usize,
    scans_emitted: usize,
}

impl SwatheAccumulator {
    pub fn new(distance: f64) -> Self {
        Self {
            distance,
            travelled: 0.0,
            window: Vec::new(),
            last_pose: None,
            last_timestamp: None,
            scans_seen: 0,
            scans_emitted: 0,
        }
    }

    /// Adds a scan; returns a completed swathe once the window has covered
    /// `distance` metres.
    pub fn push(&mut self, scan: PointCloud, pose: RigidTransform) -> Result<Option<PointCloud>, IoError> {
        if let (Some(previous), Some(current)) = (self.last_timestamp, scan.timestamp) {
            if current < previous {
                return Err(IoError::NonMonotonicTimestamps { previous, current });
            }
        }
        if scan.timestamp.is_some() {
            self.last_timestamp = scan.timestamp;
        }
        if let Some(last) = &self.last_pose {
            self.travelled += last.translation_distance_to(&pose);
        }
        self.last_pose = Some(pose);
        self.scans_seen += 1;
        self.window.push((scan, pose));
        if self.travelled >= self.distance {
            self.travelled -= self.distance;
            return Ok(Some(self.flush()));
        }
        Ok(None)
    }

    fn flush(&mut self) -> PointCloud {
        let window = std::mem::take(&mut self.window);
        self.scans_emitted += window.len();
        merge_window(window)
    }

    /// Scans accumulated since the last emitted swathe, merged the same way.
    pub fn residual(&self) -> Option<PointCloud> {
        (!self.window.is_empty()).then(|| merge_window(self.window.clone()))
    }

    pub fn residual_scans(&self) -> usize {
        self.window.len()
    }

    pub fn scans_emitted(&self) -> usize {
        self.scans_emitted
    }

    pub fn scans_seen(&self) -> usize {
        self.scans_seen
    }
}

/// Expresses every scan in the frame of the window's first pose.
fn merge_window(window: Vec<(PointCloud, RigidTransform)>) -> PointCloud {
    let Some((first_scan, first_pose)) = window.first() else {
        return PointCloud::default();
    };
    let to_first = first_pose.inverse();
    let mut merged = PointCloud {
        frame_id: first_scan.frame_id.clone(),
        timestamp: first_scan.timestamp,
        ..Default::default()
    };
    let with_intensity = window.iter().all(|(s, _)| s.intensity.as_ref().is_some_and(|i| i.len() == s.len()));
    let mut intensity = Vec::new();
    for (scan, pose) in &window {
        let rel = to_first.compose(pose);
        merged.points.extend(scan.points.iter().map(|p| rel.apply(p)));
        if with_intensity {
            intensity.extend_from_slice(scan.intensity.as_ref().unwrap());
        }
    }
    if with_intensity {
        merged.intensity = Some(intensity);
    }
    merged
}

/// Batch helper over a scan stream: `(swathes, residual)`.
pub fn accumulate_swathes<I>(scans: I, distance: f64) -> Result<(Vec<PointCloud>, Option<PointCloud>), IoError>
where
    I: IntoIterator<Item = (PointCloud, RigidTransform)>,
{
    let mut acc = SwatheAccumulator::new(distance);
    let mut out = Vec::new();
    for (scan, pose) in scans {
        if let Some(swathe) = acc.push(scan, pose)? {
            out.push(swathe);
        }
    }
    Ok((out, acc.residual()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use nalgebra::Vector3;

    fn scan(t: f64) -> PointCloud {
        PointCloud { points: vec![Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, -1.0, 0.5)], timestamp: Some(t), ..Default::default() }
    }

    fn straight(n: usize) -> Vec<(PointCloud, RigidTransform)> {
        (0..n).map(|i| (scan(i as f64), RigidTransform::from_translation(Vector3::new(i as f64, 0.0, 0.0)))).collect()
    }

    #[test]
    fn ninety_metres_gives_three_swathes() {
        let (swathes, residual) = accumulate_swathes(straight(91), DEFAULT_SWATHE_DISTANCE).unwrap();
        assert_eq!(swathes.len(), 3);
        assert!(residual.is_none());
        // window 1 holds scans 0..=30, expressed in the frame of scan 0
        assert_eq!(swathes[0].len(), 31 * 2);
        assert_eq!(swathes[0].points[60], Point3::new(30.0, 1.0, 0.0));
        assert_eq!(swathes[1].points[0], Point3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn short_trajectory_keeps_residual() {
        let mut acc = SwatheAccumulator::new(30.0);
        for (s, p) in straight(20) {
            assert!(acc.push(s, p).unwrap().is_none());
        }
        assert_eq!(acc.residual_scans(), 20);
        assert_eq!(acc.residual().unwrap().len(), 40);
    }

    #[test]
    fn loop_counts_path_length_not_displacement() {
        // 15 m square driven once, scans every metre: 60 m of path, zero net displacement
        let mut poses = Vec::new();
        let (mut x, mut y) = (0.0, 0.0);
        poses.push((x, y));
        for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
            for _ in 0..15 {
                x += dx;
                y += dy;
                poses.push((x, y));
            }
        }
        let scans: Vec<_> =
            poses.iter().enumerate().map(|(i, &(x, y))| (scan(i as f64), RigidTransform::from_translation(Vector3::new(x, y, 0.0)))).collect();
        let path: f64 = scans.windows(2).map(|w| w[0].1.translation_distance_to(&w[1].1)).sum();
        let displacement = scans[0].1.translation_distance_to(&scans.last().unwrap().1);
        assert_eq!(path, 60.0);
        assert_eq!(displacement, 0.0);
        let (swathes, residual) = accumulate_swathes(scans, 30.0).unwrap();
        assert_eq!(swathes.len(), (path / 30.0).floor() as usize);
        assert_eq!(swathes.len(), 2);
        assert!(residual.is_none());
    }

    #[test]
    fn rejects_time_going_backwards() {
        let mut acc = SwatheAccumulator::new(30.0);
        acc.push(scan(5.0), RigidTransform::identity()).unwrap();
        assert!(matches!(acc.push(scan(4.0), RigidTransform::identity()), Err(IoError::NonMonotonicTimestamps { .. })));
    }

    #[test]
    fn partitions_scans() {
        let mut acc = SwatheAccumulator::new(7.5);
        for (s, p) in straight(53) {
            acc.push(s, p).unwrap();
        }
        assert_eq!(acc.scans_emitted() + acc.residual_scans(), acc.scans_seen());
        assert_eq!(acc.scans_seen(), 53);
    }
}
