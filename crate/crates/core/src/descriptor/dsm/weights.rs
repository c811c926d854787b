//! `DSMW` weight files.
//!
//! Layout (little-endian): magic `DSMW`, u32 version, u32 layer count, per
//! layer six u32 `(points_out, K, D, C_in, C_lift, C_out)`, u32 head points,
//! u32 FC1 width, u32 FC2 width, u32 descriptor width; then every tensor as
//! raw f32, weights (`[in][out]`) before biases, in the order
//! lift1, lift2, xform1, xform2 blocks 0..K, conv per layer, then FC1..FC4;
//! finally a CRC32 of everything before it.

use std::path::Path;

use super::{Dense, DsmModel, LayerConfig, XConvWeights, DESCRIPTOR_DIM, DSM_SCHEDULE, HEAD_POINTS};
use crate::descriptor::DescriptorError;

pub const MODEL_MAGIC: [u8; 4] = *b"DSMW";
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl DsmModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, self.layers.len());
        for l in &self.layers {
            for v in [l.points_out, l.neighbors_k, l.dilation_d, l.channels_in, l.channels_lift, l.channels_out] {
                put_u32(&mut out, v);
            }
        }
        for v in [HEAD_POINTS, self.fc1.outputs, self.fc2.outputs, self.fc3.outputs] {
            put_u32(&mut out, v);
        }
        for t in self.tensors() {
            for v in t.weight.iter().chain(&t.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DescriptorError> {
        if bytes.len() < 12 || bytes[..4] != MODEL_MAGIC {
            return Err(DescriptorError::CorruptFile("missing DSMW header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(DescriptorError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(DescriptorError::CorruptFile("checksum mismatch".into()));
        }

        let mut r = Reader { buf: body, pos: 8 };
        let n_layers = r.u32()? as usize;
        if n_layers != DSM_SCHEDULE.len() {
            return Err(DescriptorError::ShapeMismatch(format!("{n_layers} layers, expected {}", DSM_SCHEDULE.len())));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for &(n, k, d) in &DSM_SCHEDULE {
            let v: Vec<usize> = (0..6).map(|_| r.u32().map(|x| x as usize)).collect::<Result<_, _>>()?;
            let cfg = LayerConfig { points_out: v[0], neighbors_k: v[1], dilation_d: v[2], channels_in: v[3], channels_lift: v[4], channels_out: v[5] };
            if (cfg.points_out, cfg.neighbors_k, cfg.dilation_d) != (n, k, d) {
                return Err(DescriptorError::ShapeMismatch(format!("layer schedule {:?} differs from {:?}", (v[0], v[1], v[2]), (n, k, d))));
            }
            layers.push(cfg);
        }
        let head_points = r.u32()? as usize;
        let fc1 = r.u32()? as usize;
        let fc2 = r.u32()? as usize;
        let desc = r.u32()? as usize;
        if head_points != HEAD_POINTS || desc != DESCRIPTOR_DIM {
            return Err(DescriptorError::ShapeMismatch(format!("head reads {head_points} points into {desc} dims")));
        }

        let mut convs: Vec<XConvWeights> = layers.iter().map(XConvWeights::zeros).collect();
        for t in convs.iter_mut().flat_map(|c| c.tensors_mut()) {
            r.fill(t)?;
        }
        let head_in = HEAD_POINTS * layers[3].channels_out;
        let mut head = [Dense::zeros(head_in, fc1), Dense::zeros(fc1, fc2), Dense::zeros(fc2, desc), Dense::zeros(desc, 1)];
        for t in &mut head {
            r.fill(t)?;
        }
        if r.pos != body.len() {
            return Err(DescriptorError::ShapeMismatch(format!("{} trailing bytes after tensors", body.len() - r.pos)));
        }
        DsmModel::from_parts(layers, convs, head)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DescriptorError> {
        if self.buf.len() - self.pos < n {
            return Err(DescriptorError::ShapeMismatch("file ends before all tensors are read".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DescriptorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn fill(&mut self, d: &mut Dense) -> Result<(), DescriptorError> {
        for v in d.weight.iter_mut().chain(d.bias.iter_mut()) {
            *v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        }
        Ok(())
    }
}

pub fn save_model(model: &DsmModel, path: impl AsRef<Path>) -> Result<(), DescriptorError> {
    let path = path.as_ref();
    std::fs::write(path, model.to_bytes()).map_err(|source| DescriptorError::Io { path: path.to_path_buf(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DsmModel, DescriptorError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DescriptorError::Io { path: path.to_path_buf(), source })?;
    DsmModel::from_bytes(&bytes)
}
