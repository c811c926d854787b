use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{fps_batched, fps_per_segment, SampleBatch, SamplingError};
use crate::geometry::Point3;

/// Wall-clock comparison of the per-segment loop against the batched sampler.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FpsBenchReport {
    pub segments: usize,
    pub points_per_segment: usize,
    pub samples: usize,
    pub repeats: usize,
    /// Median milliseconds for calling `fps_per_segment` on every segment.
    pub per_segment_ms: f64,
    /// Median milliseconds for one `fps_batched` call over the whole batch.
    pub batched_ms: f64,
    pub speedup: f64,
    /// Both paths returned identical indices on every repeat.
    pub outputs_match: bool,
}

impl FpsBenchReport {
    pub fn csv_header() -> &'static str {
        "segments,points_per_segment,samples,repeats,per_segment_ms,batched_ms,speedup,outputs_match"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.3},{}",
            self.segments, self.points_per_segment, self.samples, self.repeats, self.per_segment_ms, self.batched_ms, self.speedup, self.outputs_match
        )
    }

    pub fn table(&self) -> String {
        format!(
            "FPS benchmark  P={} S={} M={} repeats={}\n  per-segment loop : {:>10.3} ms\n  batched          : {:>10.3} ms\n  speedup          : {:>10.2}x\n  outputs match    : {}\n",
            self.segments, self.points_per_segment, self.samples, self.repeats, self.per_segment_ms, self.batched_ms, self.speedup, self.outputs_match
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times both samplers on `p` random segments of `s` points, drawing `m`
/// samples from each with per-segment random seeds.
pub fn fps_benchmark(p: usize, s: usize, m: usize, repeats: usize, rng_seed: u64) -> Result<FpsBenchReport, SamplingError> {
    if p == 0 || s == 0 || m == 0 || repeats == 0 {
        return Err(SamplingError::InvalidArgument(format!("sizes and repeats must be at least 1 (p={p}, s={s}, m={m}, repeats={repeats})")));
    }
    if m > s {
        return Err(SamplingError::BadSampleSize { requested: m, available: s });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let segments: Vec<Vec<Point3>> = (0..p)
        .map(|_| (0..s).map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0))).collect())
        .collect();
    let seeds: Vec<usize> = (0..p).map(|_| rng.random_range(0..s)).collect();
    let batch = SampleBatch::from_segments(&segments)?;

    let mut per_segment = Vec::with_capacity(repeats);
    let mut batched = Vec::with_capacity(repeats);
    let mut outputs_match = true;
    for _ in 0..repeats {
        let t = Instant::now();
        let loop_out: Vec<Vec<usize>> =
            segments.iter().zip(&seeds).map(|(seg, &seed)| fps_per_segment(seg, m, seed)).collect::<Result<_, _>>()?;
        per_segment.push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        let res = fps_batched(&batch, m, &seeds)?;
        batched.push(t.elapsed().as_secs_f64() * 1e3);

        outputs_match &= loop_out.iter().zip(res.rows()).all(|(a, b)| a.iter().zip(b).all(|(&x, &y)| x == y as usize));
    }
    let per_segment_ms = median(per_segment);
    let batched_ms = median(batched);
    Ok(FpsBenchReport {
        segments: p,
        points_per_segment: s,
        samples: m,
        repeats,
        per_segment_ms,
        batched_ms,
        speedup: per_segment_ms / batched_ms.max(1e-9),
        outputs_match,
    })
}
