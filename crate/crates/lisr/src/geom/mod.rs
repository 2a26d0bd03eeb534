//! Geometry primitives, file IO, normalization into the optimization
//! domain, and the exact nearest-neighbor queries backing Voronoi supports.

mod io;
mod kdtree;

pub use io::{load_mesh, load_point_cloud, write_obj, write_xyz};
pub use kdtree::KdTree;

use thiserror::Error;

use crate::par;

/// Minimum pairwise kernel distance; closer pairs degenerate the Voronoi
/// partition and are rejected at [`KernelSet`] construction.
pub const MIN_KERNEL_SEPARATION: f64 = 1e-9;

#[derive(Error, Debug)]
pub enum GeomError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("unsupported file extension for {path} (expected {expected})")]
    UnsupportedExtension { path: String, expected: String },
    #[error("{path} contains no points")]
    EmptyCloud { path: String },
    #[error("{path} contains no faces")]
    EmptyMesh { path: String },
    #[error("{path}:{line}: face index {index} out of range (mesh has {vertices} vertices)")]
    FaceIndexOutOfRange {
        path: String,
        line: usize,
        index: isize,
        vertices: usize,
    },
    #[error("point cloud has zero spatial extent; cannot normalize")]
    ZeroExtent,
    #[error("normalization margin must lie in (0, 1], got {0}")]
    InvalidMargin(f64),
    #[error("kernel count must be at least 1")]
    EmptyKernelSet,
    #[error("kernel points {a} and {b} coincide (distance {dist:.3e} below {min:.0e})")]
    DuplicateKernels {
        a: usize,
        b: usize,
        dist: f64,
        min: f64,
    },
    #[error("cannot sample {requested} points from an empty cloud")]
    EmptySample { requested: usize },
}

/// A point (or displacement) in 3D, in normalized model units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// L1 (taxicab) norm, used by the Chamfer-L1 metric.
    pub fn norm_l1(self) -> f64 {
        self.x.abs() + self.y.abs() + self.z.abs()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(self) -> Point3 {
        self * (1.0 / self.norm())
    }

    pub(crate) fn coord(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// An ordered collection of points.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

/// Axis-aligned bounding box with `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Aabb { min, max }
    }

    pub fn from_points(points: &[Point3]) -> Option<Aabb> {
        let first = *points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Some(Aabb { min, max })
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Point3 {
        (self.max - self.min) * 0.5
    }

    /// Squared Euclidean distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: Point3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx * dx + dy * dy + dz * dz
    }

    /// L1 distance from `p` to the box (zero inside).
    pub fn distance_l1(&self, p: Point3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx + dy + dz
    }
}

/// An indexed triangle mesh. Faces reference vertices by position index.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangle_vertices(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        (b - a).cross(c - a).norm() * 0.5
    }

    /// True when every directed edge appears exactly once and its reverse
    /// exactly once, i.e. the mesh is a closed, consistently oriented
    /// 2-manifold. This is the watertightness test used before signing
    /// distances by ray parity.
    pub fn is_closed_manifold(&self) -> bool {
        use std::collections::HashMap;
        if self.triangles.is_empty() {
            return false;
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                *edges.entry(e).or_insert(0) += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Signed volume by summing tetrahedra against the origin; positive for
    /// a closed mesh with outward-facing triangles.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }
}

/// Isotropic scale and translation mapping input geometry into the
/// `[-1,1]^3` optimization domain: `p' = (p + translation) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform {
    pub scale: f64,
    pub translation: Point3,
}

impl NormalizeTransform {
    pub const IDENTITY: NormalizeTransform = NormalizeTransform {
        scale: 1.0,
        translation: Point3::ORIGIN,
    };

    pub fn apply(&self, p: Point3) -> Point3 {
        (p + self.translation) * self.scale
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        p * (1.0 / self.scale) - self.translation
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(cloud.points.iter().map(|&p| self.apply(p)).collect())
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        TriangleMesh {
            vertices: mesh.vertices.iter().map(|&v| self.apply(v)).collect(),
            triangles: mesh.triangles.clone(),
        }
    }
}

/// Maps the cloud's bounding-box center to the origin and its largest
/// half-extent to `margin`, so all geometry lands strictly inside
/// `[-1,1]^3` when `margin < 1`.
pub fn normalize_to_unit_cube(
    cloud: &PointCloud,
    margin: f64,
) -> Result<(PointCloud, NormalizeTransform), GeomError> {
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(GeomError::InvalidMargin(margin));
    }
    let bb = cloud.bounding_box().ok_or(GeomError::ZeroExtent)?;
    let he = bb.half_extents();
    let max_half = he.x.max(he.y).max(he.z);
    if max_half <= 0.0 {
        return Err(GeomError::ZeroExtent);
    }
    let transform = NormalizeTransform {
        scale: margin / max_half,
        translation: -bb.center(),
    };
    Ok((transform.apply_cloud(cloud), transform))
}

/// Kernel points with an exact nearest-neighbor index. The Voronoi cell of
/// kernel `i` is the set of points whose nearest kernel is `i`, ties going
/// to the smallest index.
#[derive(Debug, Clone)]
pub struct KernelSet {
    kernels: Vec<Point3>,
    index: KdTree,
}

impl KernelSet {
    /// Builds the set, rejecting empty input and near-duplicate kernels
    /// (pairwise distance below [`MIN_KERNEL_SEPARATION`]), which would
    /// degenerate the Voronoi cells.
    pub fn new(kernels: Vec<Point3>) -> Result<Self, GeomError> {
        if kernels.is_empty() {
            return Err(GeomError::EmptyKernelSet);
        }
        let index = KdTree::build(&kernels);
        for (i, &p) in kernels.iter().enumerate() {
            if let Some((j, d)) = index.nearest_excluding(p, i) {
                if d < MIN_KERNEL_SEPARATION {
                    return Err(GeomError::DuplicateKernels {
                        a: i.min(j),
                        b: i.max(j),
                        dist: d,
                        min: MIN_KERNEL_SEPARATION,
                    });
                }
            }
        }
        Ok(KernelSet { kernels, index })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty sets
    }

    pub fn points(&self) -> &[Point3] {
        &self.kernels
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.kernels[i]
    }

    /// Index of the kernel nearest to `x`; distance ties break to the
    /// smallest index so cell membership is deterministic.
    pub fn nearest(&self, x: Point3) -> usize {
        self.index.nearest(x).0
    }

    /// Nearest kernel to `x` skipping kernel `skip`, as `(index, distance)`.
    pub fn nearest_excluding(&self, x: Point3, skip: usize) -> Option<(usize, f64)> {
        self.index.nearest_excluding(x, skip)
    }
}

/// Voronoi cell lookup: index of the kernel nearest to `x`.
pub fn nearest_kernel(x: Point3, kernels: &KernelSet) -> usize {
    kernels.nearest(x)
}

/// Greedy farthest-point subsampling. Returns all points when `q >= |cloud|`;
/// otherwise picks a seed-determined start point and then repeatedly adds
/// the point farthest from the chosen set. Deterministic for a fixed seed.
pub fn farthest_point_sample(
    cloud: &PointCloud,
    q: usize,
    seed: u64,
) -> Result<PointCloud, GeomError> {
    use rand::{Rng, SeedableRng};

    if q == 0 {
        return Err(GeomError::EmptyKernelSet);
    }
    let n = cloud.len();
    if n == 0 {
        return Err(GeomError::EmptySample { requested: q });
    }
    if q >= n {
        return Ok(cloud.clone());
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);

    let pts = &cloud.points;
    let mut chosen = Vec::with_capacity(q);
    chosen.push(pts[start]);
    // dist[i] = squared distance from point i to the chosen set
    let mut dist: Vec<f64> = par::map_indexed(n, |i| (pts[i] - pts[start]).norm_squared());

    while chosen.len() < q {
        // Farthest point; ties break to the smallest index so the result is
        // independent of the reduction order.
        let (best, _) = dist
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &d)| {
                if d > acc.1 {
                    (i, d)
                } else {
                    acc
                }
            });
        let p = pts[best];
        chosen.push(p);
        let updated = par::map_indexed(n, |i| dist[i].min((pts[i] - p).norm_squared()));
        dist = updated;
    }

    Ok(PointCloud::new(chosen))
}
