//! Synthetic worlds of separated geometric primitives, for end-to-end
//! localization tests with known poses.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{apply_transform, CloudId, Point3, PointCloud, RigidTransform, Segment, SegmentId};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid world parameters: {0}")]
    InvalidParams(String),
    #[error("only {placed} of {requested} primitives fit at the requested separation")]
    Crowded { placed: usize, requested: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Wall,
    Sphere,
    /// Two walls meeting at a right angle.
    LWall,
}

/// A primitive standing on the `z = 0` plane at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Kind-specific extents in meters: box/wall `[length, width, height]`,
    /// cylinder `[radius, radius, height]`, sphere `[radius; 3]`, L-wall
    /// `[leg a, leg b, height]` with a fixed thickness.
    pub size: [f64; 3],
}

const L_WALL_THICKNESS: f64 = 0.3;

type Face<'a> = (f64, &'a dyn Fn(f64, f64) -> Point3);

/// Side and top surface points of an axis-aligned `[length, width, height]`
/// box whose base is centered at `(offset.0, offset.1, 0)`.
fn sample_box(size: [f64; 3], offset: (f64, f64), density: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Point3>) {
    let [len, wid, h] = size;
    let (x0, y0) = offset;
    let (hl, hw) = (len / 2.0, wid / 2.0);
    let faces: [Face; 5] = [
        (len * h, &|u, v| Point3::new(-hl + u * len, -hw, v * h)),
        (len * h, &|u, v| Point3::new(-hl + u * len, hw, v * h)),
        (wid * h, &|u, v| Point3::new(-hl, -hw + u * wid, v * h)),
        (wid * h, &|u, v| Point3::new(hl, -hw + u * wid, v * h)),
        (len * wid, &|u, v| Point3::new(-hl + u * len, -hw + v * wid, h)),
    ];
    for (area, f) in faces {
        let n = (area * density).round() as usize;
        for _ in 0..n {
            let p = f(rng.random(), rng.random());
            out.push(Point3::new(p.x + x0, p.y + y0, p.z));
        }
    }
}

impl Primitive {
    /// Radius of the footprint's bounding circle.
    pub fn footprint_radius(&self) -> f64 {
        let [a, b, _] = self.size;
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Wall => (a * a + b * b).sqrt() / 2.0,
            PrimitiveKind::Cylinder | PrimitiveKind::Sphere => a,
            PrimitiveKind::LWall => (a * a + b * b).sqrt(),
        }
    }

    /// Uniform surface samples at roughly `density` points per square meter.
    pub fn sample(&self, density: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let [a, b, h] = self.size;
        let mut local = Vec::new();
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Wall => sample_box([a, b, h], (0.0, 0.0), density, rng, &mut local),
            PrimitiveKind::LWall => {
                let t = L_WALL_THICKNESS;
                sample_box([a, t, h], (a / 2.0, 0.0), density, rng, &mut local);
                sample_box([t, b, h], (0.0, b / 2.0 + t / 2.0), density, rng, &mut local);
            }
            PrimitiveKind::Cylinder => {
                let n_side = (TAU * a * h * density).round() as usize;
                for _ in 0..n_side {
                    let th: f64 = rng.random_range(0.0..TAU);
                    local.push(Point3::new(a * th.cos(), a * th.sin(), rng.random_range(0.0..h)));
                }
                let n_top = (PI * a * a * density).round() as usize;
                for _ in 0..n_top {
                    let th: f64 = rng.random_range(0.0..TAU);
                    let r = a * rng.random::<f64>().sqrt();
                    local.push(Point3::new(r * th.cos(), r * th.sin(), h));
                }
            }
            PrimitiveKind::Sphere => {
                let n = (4.0 * PI * a * a * density).round() as usize;
                for _ in 0..n {
                    // uniform on the sphere: z uniform, azimuth uniform
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let th: f64 = rng.random_range(0.0..TAU);
                    let r = (1.0 - z * z).sqrt();
                    local.push(Point3::new(a * r * th.cos(), a * r * th.sin(), a * (1.0 + z)));
                }
            }
        }
        let place = RigidTransform::from_yaw(self.yaw, Vector3::new(self.x, self.y, 0.0));
        local.iter().map(|p| place.apply(p)).collect()
    }

    fn random(rng: &mut ChaCha8Rng, x: f64, y: f64) -> Self {
        let kind = match rng.random_range(0..5) {
            0 => PrimitiveKind::Box,
            1 => PrimitiveKind::Cylinder,
            2 => PrimitiveKind::Wall,
            3 => PrimitiveKind::Sphere,
            _ => PrimitiveKind::LWall,
        };
        let size = match kind {
            PrimitiveKind::Box => [rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(1.0..4.0)],
            PrimitiveKind::Cylinder => {
                let r = rng.random_range(0.2..1.0);
                [r, r, rng.random_range(2.0..6.0)]
            }
            PrimitiveKind::Wall => [rng.random_range(3.0..10.0), rng.random_range(0.2..0.5), rng.random_range(2.0..4.0)],
            PrimitiveKind::Sphere => [rng.random_range(0.5..2.0); 3],
            PrimitiveKind::LWall => [rng.random_range(2.0..6.0), rng.random_range(2.0..6.0), rng.random_range(1.5..3.5)],
        };
        Self { kind, x, y, yaw: rng.random_range(0.0..TAU), size }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorldParams {
    /// Side of the square area, meters.
    pub extent: f64,
    pub primitives: usize,
    /// Surface points per square meter.
    pub density: f64,
    /// Minimum gap between primitive footprints, meters.
    pub min_gap: f64,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { extent: 100.0, primitives: 80, density: 30.0, min_gap: 3.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthWorld {
    pub params: WorldParams,
    pub primitives: Vec<Primitive>,
}

impl SynthWorld {
    /// Places primitives at random, non-overlapping positions.
    pub fn generate(params: WorldParams) -> Result<Self, SynthError> {
        if !(params.extent > 0.0) || !(params.density > 0.0) || !(params.min_gap >= 0.0) || params.primitives == 0 {
            return Err(SynthError::InvalidParams(format!("{params:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut placed: Vec<Primitive> = Vec::with_capacity(params.primitives);
        let mut attempts = 0;
        while placed.len() < params.primitives {
            attempts += 1;
            if attempts > 1000 * params.primitives {
                return Err(SynthError::Crowded { placed: placed.len(), requested: params.primitives });
            }
            let x = rng.random_range(0.0..params.extent);
            let y = rng.random_range(0.0..params.extent);
            let p = Primitive::random(&mut rng, x, y);
            let free = placed.iter().all(|q| {
                let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                d > p.footprint_radius() + q.footprint_radius() + params.min_gap
            });
            if free {
                placed.push(p);
            }
        }
        Ok(Self { params, primitives: placed })
    }

    /// Samples the chosen primitives with a fresh seed, dropping each point
    /// with probability `dropout`.
    pub fn sample(&self, which: &[usize], seed: u64, dropout: f64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for &i in which {
            for p in self.primitives[i].sample(self.params.density, &mut rng) {
                if dropout <= 0.0 || rng.random::<f64>() >= dropout {
                    pts.push(p);
                }
            }
        }
        PointCloud::new(pts)
    }

    /// The whole world, sampled with the world seed.
    pub fn map_cloud(&self) -> PointCloud {
        let all: Vec<usize> = (0..self.primitives.len()).collect();
        self.sample(&all, self.params.seed, 0.0)
    }

    /// Indices of primitives whose base center lies within `radius` of `(x, y)`.
    pub fn within(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        (0..self.primitives.len())
            .filter(|&i| {
                let p = &self.primitives[i];
                (p.x - x).powi(2) + (p.y - y).powi(2) <= radius * radius
            })
            .collect()
    }
}

/// A partial view in its own sensor frame; `truth` maps it into the world.
#[derive(Debug, Clone)]
pub struct View {
    pub cloud: PointCloud,
    pub truth: RigidTransform,
    pub primitives: Vec<usize>,
}

/// A random pose near `center`: any yaw, roll and pitch within 0.05 rad,
/// planar offset within `max_offset` and vertical offset within half a
/// meter.
pub fn random_pose(rng: &mut ChaCha8Rng, center: Vector3<f64>, max_offset: f64) -> RigidTransform {
    let yaw = RigidTransform::from_yaw(rng.random_range(0.0..TAU), Vector3::zeros());
    let tilt_axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
    let tilt = if tilt_axis.norm() > 1e-6 {
        RigidTransform::from_axis_angle(tilt_axis, rng.random_range(-0.05..0.05), Vector3::zeros())
    } else {
        RigidTransform::identity()
    };
    let offset = if max_offset > 0.0 {
        Vector3::new(rng.random_range(-max_offset..max_offset), rng.random_range(-max_offset..max_offset), rng.random_range(-0.5..0.5))
    } else {
        Vector3::zeros()
    };
    RigidTransform::from_translation(center + offset).compose(&tilt).compose(&yaw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewParams {
    /// Primitives whose center lies within this distance of the anchor are seen.
    pub radius: f64,
    /// Views anchored where fewer primitives are visible are redrawn.
    pub min_primitives: usize,
    /// Per-point drop probability.
    pub dropout: f64,
    /// Sensor position offset from the anchor primitive, meters.
    pub max_offset: f64,
}

impl Default for ViewParams {
    fn default() -> Self {
        Self { radius: 25.0, min_primitives: 8, dropout: 0.3, max_offset: 5.0 }
    }
}

/// `count` views, each of the primitives around a random anchor primitive,
/// resampled independently and expressed in a sensor frame placed near
/// the anchor with a random orientation.
pub fn partial_views(world: &SynthWorld, count: usize, params: &ViewParams, seed: u64) -> Result<Vec<View>, SynthError> {
    let anchors: Vec<usize> = (0..world.primitives.len())
        .filter(|&i| {
            let a = &world.primitives[i];
            world.within(a.x, a.y, params.radius).len() >= params.min_primitives
        })
        .collect();
    if anchors.is_empty() {
        return Err(SynthError::InvalidParams(format!("no view sees {} primitives within {} m", params.min_primitives, params.radius)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let anchor = world.primitives[anchors[rng.random_range(0..anchors.len())]];
            let primitives = world.within(anchor.x, anchor.y, params.radius);
            let world_pts = world.sample(&primitives, rng.random(), params.dropout);
            let truth = random_pose(&mut rng, Vector3::new(anchor.x, anchor.y, 0.0), params.max_offset);
            View { cloud: apply_transform(&truth.inverse(), &world_pts), truth, primitives }
        })
        .collect())
}

/// Points on one random primitive placed at the origin, at most
/// `max_points` of them (a random subset when the surface yields more).
pub fn random_segment(rng: &mut ChaCha8Rng, id: u32, max_points: usize) -> Segment {
    loop {
        let p = Primitive::random(rng, 0.0, 0.0);
        let mut pts = p.sample(30.0, rng);
        if pts.len() < 3 {
            continue;
        }
        if pts.len() > max_points {
            let keep = rand::seq::index::sample(rng, pts.len(), max_points);
            pts = keep.iter().map(|i| pts[i]).collect();
        }
        return Segment::new(SegmentId(id), CloudId(0), pts).expect("sampled points are finite");
    }
}
