//! Progressive sample consensus: hypotheses are drawn from a growing prefix
//! of the correspondences sorted by quality, so good matches are tried
//! first. Growth follows the standard schedule; termination requires both
//! non-randomness of the support and the usual confidence bound, evaluated
//! over every prefix.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{finalize, hypothesis, ransac_pose, score, PoseEstimate, RansacParams, RegistrationError, Score, SAMPLE_SIZE};
use crate::geometry::RigidTransform;
use crate::matching::Correspondence;

/// Probability that a wrong correspondence happens to support a wrong pose.
const RANDOM_SUPPORT_PROB: f64 = 0.05;
/// Allowed probability that the winning support arose by chance.
const NON_RANDOM_SIGNIFICANCE: f64 = 0.05;

/// Smallest support in a prefix of size `n` that is unlikely (below the
/// significance level) to come from a wrong model; `n + 1` if none is.
fn min_non_random_support(n: usize) -> usize {
    let m = SAMPLE_SIZE;
    if n <= m {
        return n;
    }
    let trials = n - m;
    let b = RANDOM_SUPPORT_PROB;
    // P(X = i) for X ~ Binomial(trials, b), accumulated from the top.
    let mut pmf = vec![0.0; trials + 1];
    pmf[0] = (1.0 - b).powi(trials as i32);
    for i in 1..=trials {
        pmf[i] = pmf[i - 1] * (trials - i + 1) as f64 / i as f64 * b / (1.0 - b);
    }
    let mut tail = 0.0;
    for j in (0..=trials).rev() {
        tail += pmf[j];
        if tail >= NON_RANDOM_SIGNIFICANCE {
            return j + 1 + m;
        }
    }
    m
}

/// Quality-ordered PROSAC. Falls back to [`ransac_pose`] when any
/// correspondence lacks a quality score. The input order is irrelevant: the
/// correspondences are stably sorted by quality, best first.
pub fn prosac_pose(corrs: &[Correspondence], params: &RansacParams) -> Result<Option<PoseEstimate>, RegistrationError> {
    params.validate()?;
    if corrs.len() < SAMPLE_SIZE {
        return Err(RegistrationError::TooFewCorrespondences { needed: SAMPLE_SIZE, found: corrs.len() });
    }
    if corrs.iter().any(|c| c.quality.is_none()) {
        return ransac_pose(corrs, params);
    }
    let mut sorted = corrs.to_vec();
    sorted.sort_by(|a, b| b.quality.unwrap().total_cmp(&a.quality.unwrap()));
    let corrs = &sorted[..];

    let big_n = corrs.len();
    let m = SAMPLE_SIZE;
    let t_max = params.max_iterations;
    let i_min: Vec<usize> = (0..=big_n).map(min_non_random_support).collect();
    let eta = 1.0 - params.confidence;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut n = m;
    // Expected number of samples drawn from the first n under uniform
    // sampling of t_max samples from all N.
    let mut t_n = t_max as f64 * (0..m).map(|i| (n - i) as f64 / (big_n - i) as f64).product::<f64>();
    let mut t_n_prime = 1usize;
    let mut n_star = big_n;
    let mut k_star = t_max;
    let mut best: Option<(RigidTransform, Score)> = None;

    let mut t = 0;
    while t < k_star && t < t_max {
        t += 1;
        if t == t_n_prime && n < n_star {
            let next = t_n * (n + 1) as f64 / (n + 1 - m) as f64;
            t_n_prime += (next - t_n).ceil().max(1.0) as usize;
            t_n = next;
            n += 1;
        }
        let sample: Vec<usize> = if t_n_prime < t {
            index::sample(&mut rng, n, m).into_vec()
        } else {
            let mut s = index::sample(&mut rng, n - 1, m - 1).into_vec();
            s.push(n - 1);
            s
        };
        let Some(h) = hypothesis(corrs, &sample, params.inlier_radius) else { continue };
        let s = score(&h, corrs, params.inlier_radius);
        if best.as_ref().is_some_and(|(_, b)| !s.beats(b)) {
            continue;
        }

        // Re-select the termination prefix for the new best model.
        let mut in_prefix = vec![0usize; big_n + 1];
        for &i in &s.inliers {
            in_prefix[i + 1] += 1;
        }
        for j in 1..=big_n {
            in_prefix[j] += in_prefix[j - 1];
        }
        for (len, &support) in in_prefix.iter().enumerate().skip(m) {
            if support < i_min[len] || support < m {
                continue;
            }
            let good: f64 = (0..m).map(|j| (support - j) as f64 / (len - j) as f64).product();
            let k = if good >= 1.0 {
                1
            } else {
                let k = eta.ln() / (1.0 - good).ln();
                if k.is_finite() {
                    (k.ceil() as usize).max(1)
                } else {
                    t_max
                }
            };
            if k < k_star {
                k_star = k;
                n_star = len;
            }
        }
        best = Some((h, s));
    }
    Ok(best.and_then(|(h, s)| finalize(corrs, h, s, t, params)))
}
