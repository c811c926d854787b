//! The `SEGM` segment-map file.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SEGM"            4 bytes magic
//! version           u32
//! descriptor kind   u8   (0 = learned16, 1 = eigen7)
//! segment count     u32
//! per segment:
//!   id              u32
//!   source cloud    u32
//!   point count     u32
//!   xyz             point count × 3 × f32
//!   descriptor      dim × f32
//!   has quality     u8
//!   quality         f32 (only when has quality = 1)
//! crc32             u32 over every preceding byte
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::IoError;
use crate::descriptor::{Descriptor, DescriptorKind};
use crate::geometry::{CloudId, Point3, Segment, SegmentId};

pub const MAP_MAGIC: &[u8; 4] = b"SEGM";
pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub segment: Segment,
    pub descriptor: Descriptor,
}

/// The prior map: segments with their descriptors, all of one kind.
///
/// Point coordinates and descriptor values are rounded to `f32` on insertion
/// so that what is held in memory is exactly what the file stores.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    kind: DescriptorKind,
    entries: Vec<MapEntry>,
    ids: HashSet<SegmentId>,
}

fn snap(v: f64) -> f64 {
    v as f32 as f64
}

impl SegmentMap {
    pub fn new(kind: DescriptorKind) -> Self {
        Self { kind, entries: Vec::new(), ids: HashSet::new() }
    }

    pub fn descriptor_kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn format_version(&self) -> u32 {
        MAP_FORMAT_VERSION
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&MapEntry> {
        self.entries.get(index)
    }

    pub fn push(&mut self, segment: Segment, descriptor: Descriptor) -> Result<(), IoError> {
        if descriptor.kind() != self.kind {
            return Err(IoError::InvalidMap(format!("descriptor kind {:?} in a {:?} map", descriptor.kind(), self.kind)));
        }
        if self.ids.contains(&segment.id) {
            return Err(IoError::InvalidMap(format!("duplicate segment id {}", segment.id)));
        }
        let points: Vec<Point3> = segment.points().iter().map(|p| Point3::new(snap(p.x), snap(p.y), snap(p.z))).collect();
        let segment = Segment::new(segment.id, segment.source_cloud, points).map_err(|e| IoError::InvalidMap(e.to_string()))?;
        let values = descriptor.values().iter().copied().map(snap).collect();
        let quality = descriptor.quality().map(snap);
        let descriptor = Descriptor::new(self.kind, values, quality).map_err(|e| IoError::InvalidMap(e.to_string()))?;
        self.ids.insert(segment.id);
        self.entries.push(MapEntry { segment, descriptor });
        Ok(())
    }

    /// Next unused segment id (one past the current maximum).
    pub fn next_id(&self) -> SegmentId {
        SegmentId(self.entries.iter().map(|e| e.segment.id.0 + 1).max().unwrap_or(0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAP_MAGIC);
        buf.extend_from_slice(&MAP_FORMAT_VERSION.to_le_bytes());
        buf.push(self.kind.code());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for MapEntry { segment, descriptor } in &self.entries {
            buf.extend_from_slice(&segment.id.0.to_le_bytes());
            buf.extend_from_slice(&segment.source_cloud.0.to_le_bytes());
            buf.extend_from_slice(&(segment.len() as u32).to_le_bytes());
            for p in segment.points() {
                for v in [p.x, p.y, p.z] {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            for &v in descriptor.values() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            match descriptor.quality() {
                Some(q) => {
                    buf.push(1);
                    buf.extend_from_slice(&(q as f32).to_le_bytes());
                }
                None => buf.push(0),
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SegmentMap, IoError> {
        if bytes.len() < 4 + 4 + 1 + 4 + 4 {
            return Err(IoError::CorruptFile("file too short".into()));
        }
        if &bytes[..4] != MAP_MAGIC {
            return Err(IoError::CorruptFile("bad magic bytes".into()));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32()?;
        if version != MAP_FORMAT_VERSION {
            return Err(IoError::VersionMismatch { found: version, expected: MAP_FORMAT_VERSION });
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(IoError::CorruptFile("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: r.pos };
        let kind = DescriptorKind::from_code(r.u8()?).ok_or_else(|| IoError::CorruptFile("unknown descriptor kind".into()))?;
        let count = r.u32()? as usize;
        let mut map = SegmentMap::new(kind);
        for _ in 0..count {
            let id = SegmentId(r.u32()?);
            let source = CloudId(r.u32()?);
            let n = r.u32()? as usize;
            if n == 0 || n > (body.len() - r.pos) / 12 {
                return Err(IoError::CorruptFile(format!("segment {} has an invalid point count {n}", id.0)));
            }
            let mut points = Vec::with_capacity(n);
            for _ in 0..n {
                points.push(Point3::new(r.f32()? as f64, r.f32()? as f64, r.f32()? as f64));
            }
            let values = (0..kind.dim()).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>, _>>()?;
            let quality = match r.u8()? {
                0 => None,
                1 => Some(r.f32()? as f64),
                _ => return Err(IoError::CorruptFile("bad quality flag".into())),
            };
            let segment = Segment::new(id, source, points).map_err(|e| IoError::CorruptFile(e.to_string()))?;
            let descriptor = Descriptor::new(kind, values, quality).map_err(|e| IoError::CorruptFile(e.to_string()))?;
            map.push(segment, descriptor)?;
        }
        if r.pos != body.len() {
            return Err(IoError::CorruptFile("trailing bytes after last segment".into()));
        }
        Ok(map)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| IoError::CorruptFile(format!("unexpected end of data at byte {}", self.pos)))?;
        self.pos += N;
        Ok(slice.try_into().unwrap())
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

pub fn save_map(map: &SegmentMap, path: &Path) -> Result<(), IoError> {
    fs::write(path, map.to_bytes()).map_err(|e| IoError::from_io(path, e))
}

pub fn load_map(path: &Path) -> Result<SegmentMap, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::from_io(path, e))?;
    SegmentMap::from_bytes(&bytes)
}
