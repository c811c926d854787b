//! The X-conv point convolution.
//!
//! For every representative point: gather a dilated k-NN neighbourhood,
//! localise it, lift coordinates to features, learn a `K×K` transform from
//! the local coordinates, apply it to the stacked neighbour features and
//! reduce with a dense convolution.

use rand::Rng;

use super::dense::{matmul, Dense};
use super::LayerConfig;
use crate::descriptor::DescriptorError;
use crate::geometry::Point3;

/// Learnable tensors of one X-conv layer.
#[derive(Debug, Clone, PartialEq)]
pub struct XConvWeights {
    /// `3 → C_lift`, rectified.
    pub lift1: Dense,
    /// `C_lift → C_lift`, rectified.
    pub lift2: Dense,
    /// `3K → K²`, rectified.
    pub xform1: Dense,
    /// `K` independent `K → K` maps, one per row of the transform (linear).
    pub xform2: Vec<Dense>,
    /// `K·(C_lift + C_in) → C_out`, rectified.
    pub conv: Dense,
}

impl XConvWeights {
    pub(crate) fn random(cfg: &LayerConfig, rng: &mut impl Rng) -> Self {
        let k = cfg.neighbors_k;
        Self {
            lift1: Dense::random(3, cfg.channels_lift, rng),
            lift2: Dense::random(cfg.channels_lift, cfg.channels_lift, rng),
            xform1: Dense::random(3 * k, k * k, rng),
            xform2: (0..k).map(|_| Dense::random(k, k, rng)).collect(),
            conv: Dense::random(k * (cfg.channels_lift + cfg.channels_in), cfg.channels_out, rng),
        }
    }

    pub fn zeros(cfg: &LayerConfig) -> Self {
        let k = cfg.neighbors_k;
        Self {
            lift1: Dense::zeros(3, cfg.channels_lift),
            lift2: Dense::zeros(cfg.channels_lift, cfg.channels_lift),
            xform1: Dense::zeros(3 * k, k * k),
            xform2: (0..k).map(|_| Dense::zeros(k, k)).collect(),
            conv: Dense::zeros(k * (cfg.channels_lift + cfg.channels_in), cfg.channels_out),
        }
    }

    pub(crate) fn tensors(&self) -> impl Iterator<Item = &Dense> {
        [&self.lift1, &self.lift2, &self.xform1].into_iter().chain(self.xform2.iter()).chain(std::iter::once(&self.conv))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        [&mut self.lift1, &mut self.lift2, &mut self.xform1].into_iter().chain(self.xform2.iter_mut()).chain(std::iter::once(&mut self.conv))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Dense::param_count).sum()
    }

    pub(crate) fn check_shape(&self, cfg: &LayerConfig) -> Result<(), DescriptorError> {
        let k = cfg.neighbors_k;
        let expect = [
            (&self.lift1, 3, cfg.channels_lift),
            (&self.lift2, cfg.channels_lift, cfg.channels_lift),
            (&self.xform1, 3 * k, k * k),
            (&self.conv, k * (cfg.channels_lift + cfg.channels_in), cfg.channels_out),
        ];
        let blocks_ok = self.xform2.len() == k && self.xform2.iter().all(|d| d.inputs == k && d.outputs == k);
        let dense_ok = expect.iter().all(|(d, i, o)| d.inputs == *i && d.outputs == *o && d.weight.len() == i * o && d.bias.len() == *o);
        if blocks_ok && dense_ok {
            Ok(())
        } else {
            Err(DescriptorError::ShapeMismatch(format!("weights do not fit layer {cfg:?}")))
        }
    }
}

/// Indices of the dilated neighbourhood of `query`: sort all points by
/// (squared distance, index), keep the first `k·d`, return ranks
/// `0, d, 2d, …`.
pub fn knn_dilated(query: &Point3, points: &[Point3], k: usize, d: usize) -> Result<Vec<u32>, DescriptorError> {
    let needed = k * d;
    if k == 0 || d == 0 || needed > points.len() {
        return Err(DescriptorError::InsufficientNeighbors { needed, available: points.len() });
    }
    let mut keyed: Vec<(f64, u32)> = points.iter().enumerate().map(|(i, p)| (p.distance_squared(query), i as u32)).collect();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if needed < keyed.len() {
        keyed.select_nth_unstable_by(needed - 1, cmp);
        keyed.truncate(needed);
    }
    keyed.sort_unstable_by(cmp);
    Ok(keyed.iter().step_by(d).map(|&(_, i)| i).collect())
}

/// One X-conv layer: `M` representatives over `N` input points with
/// `C_in` features each; returns `M × C_out` features.
pub fn xconv_layer(
    rep_points: &[Point3],
    in_points: &[Point3],
    in_feats: &[f32],
    cfg: &LayerConfig,
    weights: &XConvWeights,
) -> Result<Vec<f32>, DescriptorError> {
    let (m, n, c_in, k) = (rep_points.len(), in_points.len(), cfg.channels_in, cfg.neighbors_k);
    let c_lift = cfg.channels_lift;
    if in_feats.len() != n * c_in {
        return Err(DescriptorError::ShapeMismatch(format!("{} input features for {n} points × {c_in} channels", in_feats.len())));
    }
    weights.check_shape(cfg)?;
    let needed = k * cfg.dilation_d;
    if needed > n {
        return Err(DescriptorError::InsufficientNeighbors { needed, available: n });
    }

    let mut neighbours = Vec::with_capacity(m * k);
    let mut local = Vec::with_capacity(m * k * 3);
    for rep in rep_points {
        for j in knn_dilated(rep, in_points, k, cfg.dilation_d)? {
            let q = in_points[j as usize].sub(rep);
            local.extend_from_slice(&[q.x as f32, q.y as f32, q.z as f32]);
            neighbours.push(j as usize);
        }
    }

    let lifted = weights.lift2.forward(&weights.lift1.forward(&local, m * k, true), m * k, true);

    let width = c_lift + c_in;
    let mut stacked = vec![0.0f32; m * k * width];
    for (row, &j) in neighbours.iter().enumerate() {
        let dst = &mut stacked[row * width..(row + 1) * width];
        dst[..c_lift].copy_from_slice(&lifted[row * c_lift..(row + 1) * c_lift]);
        dst[c_lift..].copy_from_slice(&in_feats[j * c_in..(j + 1) * c_in]);
    }

    let hidden = weights.xform1.forward(&local, m, true);
    let kk = k * k;
    let mut transform = vec![0.0f32; m * kk];
    let mut block = vec![0.0f32; m * k];
    for (r, dense) in weights.xform2.iter().enumerate() {
        for p in 0..m {
            block[p * k..(p + 1) * k].copy_from_slice(&hidden[p * kk + r * k..p * kk + (r + 1) * k]);
        }
        let out = dense.forward(&block, m, false);
        for p in 0..m {
            transform[p * kk + r * k..p * kk + (r + 1) * k].copy_from_slice(&out[p * k..(p + 1) * k]);
        }
    }

    let mut mixed = vec![0.0f32; m * k * width];
    for p in 0..m {
        matmul(
            &transform[p * kk..(p + 1) * kk],
            &stacked[p * k * width..(p + 1) * k * width],
            &mut mixed[p * k * width..(p + 1) * k * width],
            k,
            k,
            width,
        );
    }

    Ok(weights.conv.forward(&mixed, m, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(points_out: usize, k: usize, d: usize, c_in: usize, c_lift: usize, c_out: usize) -> LayerConfig {
        LayerConfig { points_out, neighbors_k: k, dilation_d: d, channels_in: c_in, channels_lift: c_lift, channels_out: c_out }
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5))).collect()
    }

    #[test]
    fn single_neighbour_with_identity_weights_returns_lifted_self() {
        let c = cfg(5, 1, 1, 0, 6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = XConvWeights::zeros(&c);
        w.lift1 = Dense::random(3, 6, &mut rng);
        w.lift2 = Dense::random(6, 6, &mut rng);
        w.xform1.bias = vec![1.0];
        w.xform2[0].weight = vec![1.0];
        for i in 0..6 {
            w.conv.weight[i * 6 + i] = 1.0;
        }
        let pts = random_points(12, 3);
        let reps = &pts[..5];
        let out = xconv_layer(reps, &pts, &[], &c, &w).unwrap();
        // the only neighbour is the point itself, localised to the origin
        let lifted_origin = w.lift2.forward(&w.lift1.forward(&[0.0, 0.0, 0.0], 1, true), 1, true);
        for p in 0..5 {
            assert_eq!(&out[p * 6..(p + 1) * 6], lifted_origin.as_slice());
        }
    }

    #[test]
    fn dilated_neighbours_match_full_sort() {
        let pts = random_points(96, 5);
        for q in pts.iter().take(10) {
            let got = knn_dilated(q, &pts, 10, 2).unwrap();
            let mut all: Vec<(f64, u32)> =
                pts.iter().enumerate().map(|(i, p)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2), i as u32)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<u32> = (0..10).map(|r| all[2 * r].1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn output_is_invariant_to_input_order() {
        let c = cfg(20, 8, 2, 5, 8, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = XConvWeights::random(&c, &mut rng);
        let pts = random_points(64, 8);
        let feats: Vec<f32> = (0..64 * 5).map(|i| ((i * 31 % 17) as f32) / 17.0).collect();
        let reps: Vec<Point3> = pts[..20].to_vec();
        let base = xconv_layer(&reps, &pts, &feats, &c, &w).unwrap();

        let perm: Vec<usize> = (0..64).map(|i| (i * 37 + 11) % 64).collect();
        let pts_p: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
        let feats_p: Vec<f32> = perm.iter().flat_map(|&i| feats[i * 5..(i + 1) * 5].to_vec()).collect();
        let permuted = xconv_layer(&reps, &pts_p, &feats_p, &c, &w).unwrap();
        for (a, b) in base.iter().zip(&permuted) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn too_few_points() {
        let c = cfg(4, 10, 2, 0, 4, 4);
        let w = XConvWeights::zeros(&c);
        let pts = random_points(19, 1);
        assert!(matches!(xconv_layer(&pts[..4], &pts, &[], &c, &w), Err(DescriptorError::InsufficientNeighbors { needed: 20, available: 19 })));
        let bad = XConvWeights::zeros(&cfg(4, 3, 1, 0, 4, 4));
        assert!(matches!(xconv_layer(&pts[..4], &pts, &[], &cfg(4, 2, 1, 0, 4, 4), &bad), Err(DescriptorError::ShapeMismatch(_))));
    }
}
