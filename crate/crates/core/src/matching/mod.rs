//! Exact k-nearest-neighbour retrieval in descriptor space.

mod kdtree;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use kdtree::KdTree;

use crate::descriptor::{Descriptor, DescriptorKind};
use crate::geometry::{Point3, SegmentId};
use crate::io::SegmentMap;

/// Neighbours per query for learned descriptors.
pub const DEFAULT_K_LEARNED: usize = 25;
/// Neighbours per query for eigenvalue descriptors.
pub const DEFAULT_K_ENGINEERED: usize = 200;

pub fn default_k(kind: DescriptorKind) -> usize {
    match kind {
        DescriptorKind::Learned16 => DEFAULT_K_LEARNED,
        DescriptorKind::Eigen7 => DEFAULT_K_ENGINEERED,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("descriptor kind mismatch: expected {expected:?}, found {found:?}")]
    KindMismatch { expected: DescriptorKind, found: DescriptorKind },
    #[error("map has no segments")]
    EmptyMap,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("correspondence without a quality score")]
    MissingQuality,
}

/// A live segment prepared for matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: SegmentId,
    pub centroid: Point3,
    pub descriptor: Descriptor,
}

/// A live/map segment pair proposed by feature similarity. Centroids are
/// carried along for registration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    pub live_segment: SegmentId,
    pub map_segment: SegmentId,
    pub feature_distance: f64,
    /// Product of live and map qualities when both are present.
    pub quality: Option<f64>,
    pub live_centroid: Point3,
    pub map_centroid: Point3,
}

pub fn feature_distance(a: &Descriptor, b: &Descriptor) -> Result<f64, MatchingError> {
    if a.kind() != b.kind() {
        return Err(MatchingError::KindMismatch { expected: a.kind(), found: b.kind() });
    }
    Ok(squared_distance(a.values(), b.values()).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Search backend; both return identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SearchMethod {
    #[default]
    BruteForce,
    KdTree,
}

/// Map descriptors in one contiguous row-major block, with ids and
/// centroids alongside.
#[derive(Debug, Clone)]
pub struct FeatureIndex {
    kind: DescriptorKind,
    dim: usize,
    data: Vec<f64>,
    ids: Vec<SegmentId>,
    centroids: Vec<Point3>,
    qualities: Vec<Option<f64>>,
    tree: Option<KdTree>,
}

impl FeatureIndex {
    pub fn new(map: &SegmentMap, method: SearchMethod) -> Result<Self, MatchingError> {
        if map.is_empty() {
            return Err(MatchingError::EmptyMap);
        }
        let kind = map.descriptor_kind();
        let dim = kind.dim();
        let mut data = Vec::with_capacity(map.len() * dim);
        for e in map.entries() {
            data.extend_from_slice(e.descriptor.values());
        }
        let tree = (method == SearchMethod::KdTree).then(|| KdTree::build(&data, dim));
        Ok(Self {
            kind,
            dim,
            data,
            ids: map.entries().iter().map(|e| e.segment.id).collect(),
            centroids: map.entries().iter().map(|e| e.segment.centroid()).collect(),
            qualities: map.entries().iter().map(|e| e.descriptor.quality()).collect(),
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row indices of the `k` nearest map descriptors with squared
    /// distances, ordered by (distance, map id).
    fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.len());
        if let Some(tree) = &self.tree {
            return tree.nearest(&self.data, self.dim, q, k, &self.ids);
        }
        let mut all: Vec<(f64, usize)> = (0..self.len()).map(|i| (squared_distance(self.row(i), q), i)).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(self.ids[a.1].cmp(&self.ids[b.1]));
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_unstable_by(cmp);
        all
    }

    /// For every query, its `k` nearest map segments (all of them if the map
    /// is smaller), sorted by distance with ties broken by map id.
    pub fn knn_match(&self, live: &[Query], k: usize) -> Result<Vec<Correspondence>, MatchingError> {
        if k == 0 {
            return Err(MatchingError::InvalidK);
        }
        if let Some(q) = live.iter().find(|q| q.descriptor.kind() != self.kind) {
            return Err(MatchingError::KindMismatch { expected: self.kind, found: q.descriptor.kind() });
        }
        let per_query: Vec<Vec<Correspondence>> = live
            .par_iter()
            .map(|q| {
                self.nearest(q.descriptor.values(), k)
                    .into_iter()
                    .map(|(d2, i)| Correspondence {
                        live_segment: q.id,
                        map_segment: self.ids[i],
                        feature_distance: d2.sqrt(),
                        quality: q.descriptor.quality().zip(self.qualities[i]).map(|(a, b)| a * b),
                        live_centroid: q.centroid,
                        map_centroid: self.centroids[i],
                    })
                    .collect()
            })
            .collect();
        Ok(per_query.into_iter().flatten().collect())
    }
}

/// Brute-force k-NN of every live descriptor against the map.
pub fn knn_match(live: &[Query], map: &SegmentMap, k: usize) -> Result<Vec<Correspondence>, MatchingError> {
    FeatureIndex::new(map, SearchMethod::BruteForce)?.knn_match(live, k)
}

/// Keeps correspondences with `quality >= threshold`, preserving order.
pub fn quality_prune(corrs: &[Correspondence], threshold: f64) -> Result<Vec<Correspondence>, MatchingError> {
    let mut out = Vec::with_capacity(corrs.len());
    for c in corrs {
        let q = c.quality.ok_or(MatchingError::MissingQuality)?;
        if q >= threshold {
            out.push(c.clone());
        }
    }
    Ok(out)
}
