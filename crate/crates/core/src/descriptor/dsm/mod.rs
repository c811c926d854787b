//! Down-sampling point-convolution descriptor network (inference only).
//!
//! Four X-conv layers shrink a 256-point canonical segment to 160, 96, 16
//! and finally 4 representative points, choosing representatives with
//! farthest point sampling. The 4 final point features are concatenated and
//! passed through FC1..FC3 (the 16-dim descriptor); FC4 on top of FC3 gives
//! a logistic quality score.
//!
//! Positions are kept in f64 so neighbourhood ranking is stable under
//! rigid motion; features and weights are f32.

mod dense;
mod weights;
mod xconv;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use dense::Dense;
pub use weights::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use xconv::{knn_dilated, xconv_layer, XConvWeights};

use super::{Descriptor, DescriptorError, DescriptorKind};
use crate::geometry::Point3;
use crate::preprocess::CanonicalSegment;
use crate::sampling::{fps_batched, SampleBatch};

/// Points per canonical segment fed to the network.
pub const INPUT_POINTS: usize = 256;
/// Points left after the last layer; their features form the head input.
pub const HEAD_POINTS: usize = 4;
pub const DESCRIPTOR_DIM: usize = 16;
/// `(points_out, K, D)` for the four layers.
pub const DSM_SCHEDULE: [(usize, usize, usize); 4] = [(160, 8, 1), (96, 10, 2), (16, 12, 3), (4, 16, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerConfig {
    pub points_out: usize,
    pub neighbors_k: usize,
    pub dilation_d: usize,
    pub channels_in: usize,
    /// Width of the coordinate-lifting MLP.
    pub channels_lift: usize,
    pub channels_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerChannels {
    pub lift: usize,
    pub out: usize,
}

/// Channel widths of the four X-conv layers and the two hidden FC layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChannelConfig {
    pub layers: [LayerChannels; 4],
    pub fc1: usize,
    pub fc2: usize,
}

impl Default for ChannelConfig {
    /// 282,633 learnable scalars in total.
    fn default() -> Self {
        let lc = |lift, out| LayerChannels { lift, out };
        Self { layers: [lc(16, 32), lc(16, 48), lc(16, 64), lc(16, 96)], fc1: 112, fc2: 64 }
    }
}

impl ChannelConfig {
    fn layer_configs(&self) -> Vec<LayerConfig> {
        let mut c_in = 0;
        DSM_SCHEDULE
            .iter()
            .zip(&self.layers)
            .map(|(&(points_out, k, d), ch)| {
                let cfg = LayerConfig { points_out, neighbors_k: k, dilation_d: d, channels_in: c_in, channels_lift: ch.lift, channels_out: ch.out };
                c_in = ch.out;
                cfg
            })
            .collect()
    }

    fn validate(&self) -> Result<(), DescriptorError> {
        let widths = self.layers.iter().flat_map(|l| [l.lift, l.out]).chain([self.fc1, self.fc2]);
        if widths.into_iter().any(|w| w == 0) {
            return Err(DescriptorError::ShapeMismatch("channel widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmModel {
    layers: Vec<LayerConfig>,
    convs: Vec<XConvWeights>,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    fc4: Dense,
}

impl DsmModel {
    pub(crate) fn from_parts(layers: Vec<LayerConfig>, convs: Vec<XConvWeights>, head: [Dense; 4]) -> Result<Self, DescriptorError> {
        let [fc1, fc2, fc3, fc4] = head;
        let model = Self { layers, convs, fc1, fc2, fc3, fc4 };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), DescriptorError> {
        let mismatch = |msg: String| Err(DescriptorError::ShapeMismatch(msg));
        if self.layers.is_empty() || self.layers.len() != self.convs.len() {
            return mismatch(format!("{} layer configs for {} weight sets", self.layers.len(), self.convs.len()));
        }
        let mut c_in = 0;
        let mut available = INPUT_POINTS;
        for (cfg, w) in self.layers.iter().zip(&self.convs) {
            if cfg.channels_in != c_in || cfg.points_out == 0 || cfg.points_out > available {
                return mismatch(format!("layer {cfg:?} does not follow its predecessor"));
            }
            if cfg.neighbors_k * cfg.dilation_d > available {
                return Err(DescriptorError::InsufficientNeighbors { needed: cfg.neighbors_k * cfg.dilation_d, available });
            }
            w.check_shape(cfg)?;
            c_in = cfg.channels_out;
            available = cfg.points_out;
        }
        if available < HEAD_POINTS {
            return mismatch(format!("last layer keeps {available} points, head needs {HEAD_POINTS}"));
        }
        let head_in = HEAD_POINTS * c_in;
        let chain = [(&self.fc1, head_in), (&self.fc2, self.fc1.outputs), (&self.fc3, self.fc2.outputs), (&self.fc4, DESCRIPTOR_DIM)];
        for (i, (d, inputs)) in chain.iter().enumerate() {
            if d.inputs != *inputs || d.weight.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                return mismatch(format!("FC{} has shape {}×{}, expected {} inputs", i + 1, d.inputs, d.outputs, inputs));
            }
        }
        if self.fc3.outputs != DESCRIPTOR_DIM || self.fc4.outputs != 1 {
            return mismatch(format!("head outputs {}+{}, expected {DESCRIPTOR_DIM}+1", self.fc3.outputs, self.fc4.outputs));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerConfig] {
        &self.layers
    }

    pub fn conv_weights(&self) -> &[XConvWeights] {
        &self.convs
    }

    pub fn head(&self) -> [&Dense; 4] {
        [&self.fc1, &self.fc2, &self.fc3, &self.fc4]
    }

    /// Every dense block in file order.
    pub fn tensors(&self) -> impl Iterator<Item = &Dense> {
        self.convs.iter().flat_map(|c| c.tensors()).chain([&self.fc1, &self.fc2, &self.fc3, &self.fc4])
    }

    /// Same weights with every layer keeping all 256 points (no
    /// down-sampling); the head reads the first 4 point features.
    pub fn full_resolution(&self) -> DsmModel {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.points_out = INPUT_POINTS;
        }
        m
    }

    /// Whether the layer point/neighbour schedule is the down-sampling one.
    pub fn is_downsampling(&self) -> bool {
        self.layers.len() == DSM_SCHEDULE.len()
            && self.layers.iter().zip(DSM_SCHEDULE).all(|(l, (n, k, d))| l.points_out == n && l.neighbors_k == k && l.dilation_d == d)
    }
}

/// Deterministic random initialisation for the given channel widths.
pub fn init_model(channels: &ChannelConfig, rng_seed: u64) -> Result<DsmModel, DescriptorError> {
    channels.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let layers = channels.layer_configs();
    let convs = layers.iter().map(|cfg| XConvWeights::random(cfg, &mut rng)).collect();
    let head_in = HEAD_POINTS * channels.layers[3].out;
    let head = [
        Dense::random(head_in, channels.fc1, &mut rng),
        Dense::random(channels.fc1, channels.fc2, &mut rng),
        Dense::random(channels.fc2, DESCRIPTOR_DIM, &mut rng),
        Dense::random(DESCRIPTOR_DIM, 1, &mut rng),
    ];
    DsmModel::from_parts(layers, convs, head)
}

pub fn param_count(model: &DsmModel) -> usize {
    model.tensors().map(Dense::param_count).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActivationFootprint {
    /// Σ points kept per layer.
    pub points_total: usize,
    /// Σ points × K, the neighbour lookups per forward pass.
    pub knn_ops_total: usize,
}

pub fn activation_footprint(layers: &[LayerConfig]) -> ActivationFootprint {
    ActivationFootprint {
        points_total: layers.iter().map(|l| l.points_out).sum(),
        knn_ops_total: layers.iter().map(|l| l.points_out * l.neighbors_k).sum(),
    }
}

pub fn describe_dsm(seg: &CanonicalSegment, model: &DsmModel) -> Result<Descriptor, DescriptorError> {
    Ok(describe_dsm_batch(std::slice::from_ref(seg), model)?.remove(0))
}

/// Describes many segments at once: each layer's representatives for the
/// whole batch come from one batched FPS call, and per-segment convolutions
/// run in parallel. Results do not depend on the batch composition.
pub fn describe_dsm_batch(segs: &[CanonicalSegment], model: &DsmModel) -> Result<Vec<Descriptor>, DescriptorError> {
    if segs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(s) = segs.iter().find(|s| s.points().len() != INPUT_POINTS) {
        return Err(DescriptorError::ShapeMismatch(format!("segment has {} points, network expects {INPUT_POINTS}", s.points().len())));
    }

    let mut positions: Vec<Vec<Point3>> = segs.iter().map(|s| s.points().to_vec()).collect();
    let mut feats: Vec<Vec<f32>> = vec![Vec::new(); segs.len()];
    for (li, (cfg, w)) in model.layers.iter().zip(&model.convs).enumerate() {
        let reps: Vec<Vec<Point3>> = if cfg.points_out < positions[0].len() {
            let seeds: Vec<usize> = if li == 0 { positions.iter().map(|p| farthest_from_origin(p)).collect() } else { vec![0; positions.len()] };
            let batch = SampleBatch::from_segments(&positions).map_err(|e| DescriptorError::ShapeMismatch(e.to_string()))?;
            let picked = fps_batched(&batch, cfg.points_out, &seeds).map_err(|e| DescriptorError::ShapeMismatch(e.to_string()))?;
            positions.iter().zip(picked.rows()).map(|(pts, row)| row.iter().map(|&i| pts[i as usize]).collect()).collect()
        } else {
            positions.clone()
        };
        feats = reps
            .par_iter()
            .zip(positions.par_iter())
            .zip(feats.par_iter())
            .map(|((r, p), f)| xconv_layer(r, p, f, cfg, w))
            .collect::<Result<_, _>>()?;
        positions = reps;
    }

    let c_last = model.layers.last().expect("validated").channels_out;
    let width = HEAD_POINTS * c_last;
    let mut head_in = Vec::with_capacity(segs.len() * width);
    for f in &feats {
        head_in.extend_from_slice(&f[..width]);
    }
    let rows = segs.len();
    let h = model.fc2.forward(&model.fc1.forward(&head_in, rows, true), rows, true);
    let desc = model.fc3.forward(&h, rows, false);
    let logits = model.fc4.forward(&desc, rows, false);
    (0..rows)
        .map(|r| {
            let values = desc[r * DESCRIPTOR_DIM..(r + 1) * DESCRIPTOR_DIM].iter().map(|&v| v as f64).collect();
            let quality = 1.0 / (1.0 + (-(logits[r] as f64)).exp());
            Descriptor::new(DescriptorKind::Learned16, values, Some(quality))
        })
        .collect()
}

/// Index of the point with the largest norm, lowest index on ties.
fn farthest_from_origin(points: &[Point3]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.norm_squared() > points[best].norm_squared() {
            best = i;
        }
    }
    best
}
