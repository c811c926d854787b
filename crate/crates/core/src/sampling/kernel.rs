//! Vectorised FPS inner loop over structure-of-arrays segment storage.
//!
//! The arithmetic per element is the same as `Point3::distance_squared`
//! (no fused multiply-add), so results are bit-identical to the scalar path.

const LANES: usize = 8;

/// Marker for already-selected slots in the running distance buffer.
const SELECTED: f64 = -1.0;

/// Runs FPS on one segment. `nearest` must have the same length as the
/// coordinate slices (the valid prefix of the segment).
#[inline(always)]
fn fps_segment_body(xs: &[f64], ys: &[f64], zs: &[f64], nearest: &mut [f64], seed: usize, out: &mut [u32]) {
    let n = xs.len();
    debug_assert!(ys.len() == n && zs.len() == n && nearest.len() == n);
    nearest.fill(f64::INFINITY);
    let mut last = seed;
    nearest[last] = SELECTED;
    out[0] = last as u32;
    let full = n - n % LANES;
    for slot in out.iter_mut().skip(1) {
        let (cx, cy, cz) = (xs[last], ys[last], zs[last]);
        let mut best_v = [f64::NEG_INFINITY; LANES];
        let mut best_i = [0u64; LANES];
        let mut base = 0;
        while base < full {
            let x = &xs[base..base + LANES];
            let y = &ys[base..base + LANES];
            let z = &zs[base..base + LANES];
            let m = &mut nearest[base..base + LANES];
            for l in 0..LANES {
                let dx = x[l] - cx;
                let dy = y[l] - cy;
                let dz = z[l] - cz;
                let d = dx * dx + dy * dy + dz * dz;
                let v = if d < m[l] { d } else { m[l] };
                m[l] = v;
                let better = v > best_v[l];
                best_v[l] = if better { v } else { best_v[l] };
                best_i[l] = if better { (base + l) as u64 } else { best_i[l] };
            }
            base += LANES;
        }
        let mut bv = f64::NEG_INFINITY;
        let mut bi = u64::MAX;
        for l in 0..LANES {
            if best_v[l] > bv || (best_v[l] == bv && best_i[l] < bi) {
                bv = best_v[l];
                bi = best_i[l];
            }
        }
        for j in full..n {
            let dx = xs[j] - cx;
            let dy = ys[j] - cy;
            let dz = zs[j] - cz;
            let d = dx * dx + dy * dy + dz * dz;
            let v = if d < nearest[j] { d } else { nearest[j] };
            nearest[j] = v;
            if v > bv {
                bv = v;
                bi = j as u64;
            }
        }
        last = bi as usize;
        nearest[last] = SELECTED;
        *slot = last as u32;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
fn fps_segment_avx512(xs: &[f64], ys: &[f64], zs: &[f64], nearest: &mut [f64], seed: usize, out: &mut [u32]) {
    fps_segment_body(xs, ys, zs, nearest, seed, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn fps_segment_avx2(xs: &[f64], ys: &[f64], zs: &[f64], nearest: &mut [f64], seed: usize, out: &mut [u32]) {
    fps_segment_body(xs, ys, zs, nearest, seed, out)
}

fn fps_segment_generic(xs: &[f64], ys: &[f64], zs: &[f64], nearest: &mut [f64], seed: usize, out: &mut [u32]) {
    fps_segment_body(xs, ys, zs, nearest, seed, out)
}

pub(super) type SegmentKernel = fn(&[f64], &[f64], &[f64], &mut [f64], usize, &mut [u32]);

/// Picks the widest instruction set available at runtime.
pub(super) fn select_kernel() -> SegmentKernel {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected on this CPU.
            return |xs, ys, zs, nearest, seed, out| unsafe { fps_segment_avx512(xs, ys, zs, nearest, seed, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected on this CPU.
            return |xs, ys, zs, nearest, seed, out| unsafe { fps_segment_avx2(xs, ys, zs, nearest, seed, out) };
        }
    }
    fps_segment_generic
}

#[cfg(test)]
pub(super) fn generic_kernel() -> SegmentKernel {
    fps_segment_generic
}
