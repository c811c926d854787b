//! Voxel-hash grid for fixed-radius neighbour queries.

use std::collections::HashMap;

use crate::geometry::Point3;

type Cell = (i64, i64, i64);

/// Buckets point indices into cubic cells of side `cell_size`. A radius query
/// with `radius <= cell_size` only needs the 27 surrounding cells.
#[derive(Debug)]
pub(crate) struct VoxelGrid {
    cell_size: f64,
    cells: HashMap<Cell, Vec<u32>>,
}

impl VoxelGrid {
    pub(crate) fn build(points: &[Point3], cell_size: f64) -> Self {
        debug_assert!(cell_size > 0.0);
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell_of(p, cell_size)).or_default().push(i as u32);
        }
        Self { cell_size, cells }
    }

    fn cell_of(p: &Point3, size: f64) -> Cell {
        ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64)
    }

    /// Calls `f` for every stored index within `radius` of `query` (inclusive).
    pub(crate) fn for_each_within(&self, points: &[Point3], query: &Point3, radius: f64, mut f: impl FnMut(usize)) {
        debug_assert!(radius <= self.cell_size);
        let r2 = radius * radius;
        let (cx, cy, cz) = Self::cell_of(query, self.cell_size);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bucket {
                            if points[j as usize].distance_squared(query) <= r2 {
                                f(j as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}
