use rayon::prelude::*;

use super::kernel::{select_kernel, SegmentKernel};
use super::SamplingError;
use crate::geometry::Point3;

/// `P` segments padded to a common stride `S`, stored as three `P×S`
/// coordinate planes. Slots past a segment's valid count are padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    segments: usize,
    stride: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    valid: Vec<usize>,
}

impl SampleBatch {
    /// Packs segments, padding each to the longest one.
    pub fn from_segments<S: AsRef<[Point3]>>(segments: &[S]) -> Result<Self, SamplingError> {
        let stride = segments.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        if segments.is_empty() || stride == 0 {
            return Err(SamplingError::InvalidArgument("a batch needs at least one non-empty segment".into()));
        }
        let mut batch = Self::zeroed(segments.len(), stride);
        for (i, seg) in segments.iter().enumerate() {
            let seg = seg.as_ref();
            batch.valid[i] = seg.len();
            for (j, p) in seg.iter().enumerate() {
                let k = i * stride + j;
                batch.xs[k] = p.x;
                batch.ys[k] = p.y;
                batch.zs[k] = p.z;
            }
        }
        Ok(batch)
    }

    /// Builds from an interleaved `P×S×3` tensor with per-segment valid counts.
    pub fn from_tensor(data: &[f64], segments: usize, stride: usize, valid_counts: &[usize]) -> Result<Self, SamplingError> {
        if segments == 0 || stride == 0 {
            return Err(SamplingError::InvalidArgument("P and S must be at least 1".into()));
        }
        if data.len() != segments * stride * 3 || valid_counts.len() != segments {
            return Err(SamplingError::InvalidArgument(format!(
                "tensor of {} values and {} counts does not match P={segments}, S={stride}",
                data.len(),
                valid_counts.len()
            )));
        }
        if let Some(&bad) = valid_counts.iter().find(|&&v| v > stride) {
            return Err(SamplingError::InvalidArgument(format!("valid count {bad} exceeds stride {stride}")));
        }
        let mut batch = Self::zeroed(segments, stride);
        for k in 0..segments * stride {
            batch.xs[k] = data[3 * k];
            batch.ys[k] = data[3 * k + 1];
            batch.zs[k] = data[3 * k + 2];
        }
        batch.valid.copy_from_slice(valid_counts);
        Ok(batch)
    }

    fn zeroed(segments: usize, stride: usize) -> Self {
        let n = segments * stride;
        Self { segments, stride, xs: vec![0.0; n], ys: vec![0.0; n], zs: vec![0.0; n], valid: vec![0; segments] }
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn valid_counts(&self) -> &[usize] {
        &self.valid
    }

    /// Valid points of segment `i`.
    pub fn segment_points(&self, i: usize) -> Vec<Point3> {
        let base = i * self.stride;
        (base..base + self.valid[i]).map(|k| Point3::new(self.xs[k], self.ys[k], self.zs[k])).collect()
    }
}

/// `P×M` index tensor; row `i` indexes into segment `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleResult {
    m: usize,
    indices: Vec<u32>,
}

impl SampleResult {
    pub fn sample_size(&self) -> usize {
        self.m
    }

    pub fn segments(&self) -> usize {
        self.indices.len().checked_div(self.m).unwrap_or(0)
    }

    pub fn row(&self, segment: usize) -> &[u32] {
        &self.indices[segment * self.m..(segment + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.chunks_exact(self.m)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.indices
    }
}

/// Farthest point sampling on every segment of a batch at once.
///
/// A `P×S` buffer holds each point's squared distance to its nearest selected
/// point and is updated incrementally, so each step costs `O(P·S)`. Output is
/// identical to [`super::fps_per_segment`] row by row.
pub fn fps_batched(batch: &SampleBatch, m: usize, seed_indices: &[usize]) -> Result<SampleResult, SamplingError> {
    if m == 0 {
        return Err(SamplingError::BadSampleSize { requested: 0, available: batch.stride });
    }
    if seed_indices.len() != batch.segments {
        return Err(SamplingError::InvalidArgument(format!("{} seeds for {} segments", seed_indices.len(), batch.segments)));
    }
    for (i, (&valid, &seed)) in batch.valid.iter().zip(seed_indices).enumerate() {
        if m > valid {
            return Err(SamplingError::RaggedBatch { segment: i, valid, requested: m });
        }
        if seed >= valid {
            return Err(SamplingError::BadSeed { seed, available: valid });
        }
    }
    let kernel: SegmentKernel = select_kernel();
    Ok(run(batch, m, seed_indices, kernel))
}

fn run(batch: &SampleBatch, m: usize, seeds: &[usize], kernel: SegmentKernel) -> SampleResult {
    let s = batch.stride;
    let mut indices = vec![0u32; batch.segments * m];
    let mut nearest = vec![0.0f64; batch.segments * s];
    indices
        .par_chunks_mut(m)
        .zip(nearest.par_chunks_mut(s))
        .enumerate()
        .with_min_len(16)
        .for_each(|(i, (out, buf))| {
            let v = batch.valid[i];
            let r = i * s..i * s + v;
            kernel(&batch.xs[r.clone()], &batch.ys[r.clone()], &batch.zs[r], &mut buf[..v], seeds[i], out);
        });
    SampleResult { m, indices }
}

#[cfg(test)]
mod tests {
    use super::super::{fps_per_segment, kernel::generic_kernel, oracle};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_segments(p: usize, min: usize, max: usize, seed: u64) -> Vec<Vec<Point3>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..p)
            .map(|_| {
                let n = rng.random_range(min..=max);
                (0..n).map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0))).collect()
            })
            .collect()
    }

    #[test]
    fn single_segment_equals_per_segment() {
        let segs = random_segments(1, 64, 64, 1);
        let batch = SampleBatch::from_segments(&segs).unwrap();
        let res = fps_batched(&batch, 20, &[3]).unwrap();
        let want: Vec<u32> = fps_per_segment(&segs[0], 20, 3).unwrap().into_iter().map(|i| i as u32).collect();
        assert_eq!(res.row(0), want.as_slice());
    }

    #[test]
    fn hundred_segments_match_oracle() {
        let segs = random_segments(100, 40, 90, 2);
        let seeds: Vec<usize> = segs.iter().enumerate().map(|(i, s)| (i * 13) % s.len()).collect();
        let batch = SampleBatch::from_segments(&segs).unwrap();
        let res = fps_batched(&batch, 32, &seeds).unwrap();
        for (i, seg) in segs.iter().enumerate() {
            let want: Vec<u32> = oracle::brute_force_fps(seg, 32, seeds[i]).into_iter().map(|k| k as u32).collect();
            assert_eq!(res.row(i), want.as_slice(), "segment {i}");
        }
        // scalar fallback agrees with whatever kernel was dispatched
        assert_eq!(run(&batch, 32, &seeds, generic_kernel()), res);
    }

    #[test]
    fn padding_is_never_selected() {
        let segs = random_segments(8, 10, 30, 3);
        let batch = SampleBatch::from_segments(&segs).unwrap();
        let m = segs.iter().map(Vec::len).min().unwrap();
        let res = fps_batched(&batch, m, &[0; 8]).unwrap();
        for (i, row) in res.rows().enumerate() {
            assert!(row.iter().all(|&k| (k as usize) < segs[i].len()));
            let mut r = row.to_vec();
            r.sort_unstable();
            r.dedup();
            assert_eq!(r.len(), m);
        }
    }

    #[test]
    fn tensor_layout_and_errors() {
        let segs = random_segments(3, 5, 5, 4);
        let data: Vec<f64> = segs.iter().flatten().flat_map(|p| [p.x, p.y, p.z]).collect();
        let batch = SampleBatch::from_tensor(&data, 3, 5, &[5, 4, 5]).unwrap();
        assert_eq!(batch.segment_points(1), segs[1][..4].to_vec());
        assert!(matches!(fps_batched(&batch, 5, &[0, 0, 0]), Err(SamplingError::RaggedBatch { segment: 1, .. })));
        assert!(matches!(fps_batched(&batch, 0, &[0, 0, 0]), Err(SamplingError::BadSampleSize { .. })));
        assert!(matches!(fps_batched(&batch, 2, &[0, 4, 0]), Err(SamplingError::BadSeed { .. })));
        assert!(fps_batched(&batch, 2, &[0, 0]).is_err());
        assert!(SampleBatch::from_tensor(&data, 3, 5, &[5, 6, 5]).is_err());
        assert!(SampleBatch::from_tensor(&data[1..], 3, 5, &[5, 5, 5]).is_err());
        let empty: Vec<Vec<Point3>> = Vec::new();
        assert!(SampleBatch::from_segments(&empty).is_err());
    }

    #[test]
    fn lane_ties_resolve_to_lowest_index() {
        // a regular grid produces many exactly equal distances across lanes
        let mut seg = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..3 {
                    seg.push(Point3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let batch = SampleBatch::from_segments(&[seg.clone()]).unwrap();
        for seed in [0, 17, 50] {
            let res = fps_batched(&batch, 60, &[seed]).unwrap();
            let want: Vec<u32> = oracle::brute_force_fps(&seg, 60, seed).into_iter().map(|k| k as u32).collect();
            assert_eq!(res.row(0), want.as_slice());
        }
    }
}
