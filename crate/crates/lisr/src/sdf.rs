//! Ground-truth signed distance supervision.
//!
//! Fitting needs a signed distance value at every query point. Two oracle
//! kinds are provided: exact analytic shapes (sphere, box, torus) for
//! controlled experiments, and a mesh-based evaluator whose magnitude is
//! the distance to the closest triangle and whose sign comes from a
//! ray-parity majority vote. Negative means inside throughout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{Aabb, Point3, PointCloud, TriangleMesh};
use crate::par;

#[derive(Error, Debug)]
pub enum SdfError {
    #[error("mesh is not a closed manifold; signed distances would be unreliable")]
    NotWatertight,
    #[error("shape parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed sample record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
}

/// One supervision sample: a query point and its ground-truth signed
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub x: Point3,
    pub s: f64,
}

/// Ordered supervision samples; the order is the row order of the design
/// matrix built from them.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub samples: Vec<SdfSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> Vec<Point3> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.s).collect()
    }
}

/// Anything that can report an exact signed distance at a point.
pub trait SignedDistance: Sync {
    fn signed_distance(&self, x: Point3) -> f64;
}

/// Analytic test shapes with exact signed distance fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticShape {
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Axis-aligned box given by center and half-extents.
    Box {
        center: Point3,
        half_extents: Point3,
    },
    /// Torus around the z-axis through `center`: `major_radius` is the
    /// ring radius in the xy-plane, `minor_radius` the tube radius.
    Torus {
        center: Point3,
        major_radius: f64,
        minor_radius: f64,
    },
}

impl AnalyticShape {
    pub fn validate(&self) -> Result<(), SdfError> {
        let check = |name: &'static str, value: f64| {
            if value > 0.0 {
                Ok(())
            } else {
                Err(SdfError::NonPositiveParameter { name, value })
            }
        };
        match *self {
            AnalyticShape::Sphere { radius, .. } => check("radius", radius),
            AnalyticShape::Box { half_extents, .. } => {
                check("half_extents.x", half_extents.x)?;
                check("half_extents.y", half_extents.y)?;
                check("half_extents.z", half_extents.z)
            }
            AnalyticShape::Torus {
                major_radius,
                minor_radius,
                ..
            } => {
                check("major_radius", major_radius)?;
                check("minor_radius", minor_radius)
            }
        }
    }

    /// Exact signed distance, negative inside.
    pub fn sdf(&self, x: Point3) -> f64 {
        match *self {
            AnalyticShape::Sphere { center, radius } => (x - center).norm() - radius,
            AnalyticShape::Box {
                center,
                half_extents,
            } => {
                let d = x - center;
                let q = Point3::new(
                    d.x.abs() - half_extents.x,
                    d.y.abs() - half_extents.y,
                    d.z.abs() - half_extents.z,
                );
                let outside =
                    Point3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            AnalyticShape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = x - center;
                let ring = (d.x * d.x + d.y * d.y).sqrt() - major_radius;
                (ring * ring + d.z * d.z).sqrt() - minor_radius
            }
        }
    }

    /// Uniform-by-area surface samples, deterministic per seed.
    pub fn sample_surface(&self, count: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        match *self {
            AnalyticShape::Sphere { center, radius } => {
                for _ in 0..count {
                    let z: f64 = rng.random_range(-1.0..=1.0);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let r_xy = (1.0 - z * z).max(0.0).sqrt();
                    let dir = Point3::new(r_xy * phi.cos(), r_xy * phi.sin(), z);
                    points.push(center + dir * radius);
                }
            }
            AnalyticShape::Box {
                center,
                half_extents: h,
            } => {
                // Face areas per axis pair (two faces each).
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = areas.iter().sum::<f64>() * 2.0;
                for _ in 0..count {
                    let mut pick = rng.random_range(0.0..total);
                    let mut axis = 2;
                    for (a, &area) in areas.iter().enumerate() {
                        if pick < 2.0 * area {
                            axis = a;
                            break;
                        }
                        pick -= 2.0 * area;
                    }
                    let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    let v: f64 = rng.random_range(-1.0..=1.0);
                    let p = match axis {
                        0 => Point3::new(side * h.x, u * h.y, v * h.z),
                        1 => Point3::new(u * h.x, side * h.y, v * h.z),
                        _ => Point3::new(u * h.x, v * h.y, side * h.z),
                    };
                    points.push(center + p);
                }
            }
            AnalyticShape::Torus {
                center,
                major_radius: big_r,
                minor_radius: r,
            } => {
                // Area element is proportional to R + r cos(tube angle);
                // rejection-sample the tube angle against that density.
                while points.len() < count {
                    let psi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let accept: f64 = rng.random_range(0.0..1.0);
                    if accept > (big_r + r * psi.cos()) / (big_r + r) {
                        continue;
                    }
                    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let ring = big_r + r * psi.cos();
                    points.push(
                        center
                            + Point3::new(ring * theta.cos(), ring * theta.sin(), r * psi.sin()),
                    );
                }
            }
        }
        PointCloud::new(points)
    }
}

impl SignedDistance for AnalyticShape {
    fn signed_distance(&self, x: Point3) -> f64 {
        self.sdf(x)
    }
}

/// Exact signed distance, negative inside (free-function form).
pub fn analytic_sdf(shape: &AnalyticShape, x: Point3) -> f64 {
    shape.sdf(x)
}

/// How a [`MeshSdf`] treats meshes that fail the closed-manifold test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// Refuse construction on a non-watertight mesh.
    Strict,
    /// Fall back to unsigned distances; [`MeshSdf::is_signed`] reports it.
    UnsignedFallback,
}

/// Signed distance to a triangle mesh. Magnitude is the distance to the
/// closest point on any triangle (BVH-accelerated); the sign is a majority
/// vote of ray-crossing parities along three fixed directions.
pub struct MeshSdf {
    mesh: TriangleMesh,
    bvh: Bvh,
    signed: bool,
}

// Fixed irrational ray directions; no mesh aligned to coordinate axes or
// rational diagonals is parallel to, or edge-on with, all three.
const RAY_DIRECTIONS: [[f64; 3]; 3] = [
    [0.267_261_241_912_424_4, 0.534_522_483_824_848_8, 0.801_783_725_737_273_2],
    [-0.618_852_427_301_254_3, 0.190_877_205_316_467_5, 0.761_969_203_921_138_9],
    [0.725_892_769_143_568_2, -0.662_219_050_982_507_3, 0.186_341_399_771_232_8],
];

impl MeshSdf {
    pub fn new(mesh: TriangleMesh, mode: SignMode) -> Result<MeshSdf, SdfError> {
        let closed = mesh.is_closed_manifold();
        if !closed && mode == SignMode::Strict {
            return Err(SdfError::NotWatertight);
        }
        let bvh = Bvh::build(&mesh);
        Ok(MeshSdf {
            mesh,
            bvh,
            signed: closed,
        })
    }

    /// False when the mesh failed the watertightness test and distances
    /// are unsigned.
    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Unsigned distance to the closest point on the mesh.
    pub fn distance(&self, x: Point3) -> f64 {
        self.bvh.closest_distance(&self.mesh, x)
    }

    fn is_inside(&self, x: Point3) -> bool {
        let mut votes = 0usize;
        for dir in RAY_DIRECTIONS {
            let mut d = Point3::new(dir[0], dir[1], dir[2]);
            // Re-jitter deterministically while a crossing lands too close
            // to an edge or runs parallel to a triangle.
            let mut crossings = None;
            for attempt in 0..8 {
                match self.bvh.count_crossings(&self.mesh, x, d) {
                    Ok(n) => {
                        crossings = Some(n);
                        break;
                    }
                    Err(()) => {
                        let k = (attempt + 1) as f64;
                        d = (d + Point3::new(1e-3 * k, 1.37e-3 * k, 2.51e-3 * k)).normalized();
                    }
                }
            }
            // All jitters degenerate: count the last attempt permissively.
            let n = crossings
                .unwrap_or_else(|| self.bvh.count_crossings_permissive(&self.mesh, x, d));
            if n % 2 == 1 {
                votes += 1;
            }
        }
        votes >= 2
    }
}

impl SignedDistance for MeshSdf {
    fn signed_distance(&self, x: Point3) -> f64 {
        let d = self.distance(x);
        if self.signed && self.is_inside(x) {
            -d
        } else {
            d
        }
    }
}

/// Signed distance from `x` to a watertight mesh. Convenience wrapper
/// that builds the evaluator per call; use [`MeshSdf`] for batches.
pub fn mesh_sdf(mesh: &TriangleMesh, x: Point3) -> Result<f64, SdfError> {
    Ok(MeshSdf::new(mesh.clone(), SignMode::Strict)?.signed_distance(x))
}

/// Evaluates the oracle at every query, in query order.
pub fn sample_gt<S: SignedDistance + ?Sized>(oracle: &S, queries: &[Point3]) -> SampleSet {
    let samples = par::map_indexed(queries.len(), |i| SdfSample {
        x: queries[i],
        s: oracle.signed_distance(queries[i]),
    });
    SampleSet { samples }
}

/// Writes a sample set as CSV (`x,y,z,sdf`, 17-significant-digit
/// decimals).
pub fn write_sample_csv(set: &SampleSet, path: impl AsRef<Path>) -> Result<(), SdfError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| SdfError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| SdfError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(w, "x,y,z,sdf").map_err(io_err)?;
    for s in &set.samples {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", s.x.x, s.x.y, s.x.z, s.s)
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a sample set written by [`write_sample_csv`].
pub fn read_sample_csv(path: impl AsRef<Path>) -> Result<SampleSet, SdfError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SdfError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SdfError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if idx == 0 {
            if line.trim() != "x,y,z,sdf" {
                return Err(SdfError::MalformedRecord {
                    path: path.display().to_string(),
                    line: 1,
                    reason: format!("expected header 'x,y,z,sdf', found '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(SdfError::MalformedRecord {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 4];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.trim().parse().map_err(|_| SdfError::MalformedRecord {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("cannot parse '{f}'"),
            })?;
        }
        samples.push(SdfSample {
            x: Point3::new(vals[0], vals[1], vals[2]),
            s: vals[3],
        });
    }
    Ok(SampleSet { samples })
}

// ---------------------------------------------------------------------------
// BVH over triangles: closest-point queries and ray-crossing counts.

#[derive(Debug)]
struct BvhNode {
    aabb: Aabb,
    left: usize,
    right: usize,
    start: usize,
    end: usize,
}

#[derive(Debug)]
struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

const BVH_LEAF: usize = 4;

impl Bvh {
    fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.triangles.len();
        let centroids: Vec<Point3> = (0..n)
            .map(|t| {
                let [a, b, c] = mesh.triangle_vertices(t);
                (a + b + c) * (1.0 / 3.0)
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..n).collect(),
        };
        if n > 0 {
            bvh.split(mesh, &centroids, 0, n);
        }
        bvh
    }

    fn triangle_aabb(mesh: &TriangleMesh, t: usize) -> Aabb {
        let vs = mesh.triangle_vertices(t);
        Aabb::from_points(&vs).unwrap()
    }

    fn split(&mut self, mesh: &TriangleMesh, centroids: &[Point3], start: usize, end: usize) -> usize {
        let mut aabb = Self::triangle_aabb(mesh, self.order[start]);
        for &t in &self.order[start + 1..end] {
            let ta = Self::triangle_aabb(mesh, t);
            aabb = Aabb::new(
                Point3::new(
                    aabb.min.x.min(ta.min.x),
                    aabb.min.y.min(ta.min.y),
                    aabb.min.z.min(ta.min.z),
                ),
                Point3::new(
                    aabb.max.x.max(ta.max.x),
                    aabb.max.y.max(ta.max.y),
                    aabb.max.z.max(ta.max.z),
                ),
            );
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            aabb,
            left: usize::MAX,
            right: usize::MAX,
            start,
            end,
        });
        if end - start > BVH_LEAF {
            let ext = aabb.max - aabb.min;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = (start + end) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a]
                    .coord(axis)
                    .partial_cmp(&centroids[b].coord(axis))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let left = self.split(mesh, centroids, start, mid);
            let right = self.split(mesh, centroids, mid, end);
            self.nodes[id].left = left;
            self.nodes[id].right = right;
        }
        id
    }

    fn closest_distance(&self, mesh: &TriangleMesh, p: Point3) -> f64 {
        let mut best = f64::INFINITY;
        self.closest_visit(mesh, 0, p, &mut best);
        best.sqrt()
    }

    fn closest_visit(&self, mesh: &TriangleMesh, node: usize, p: Point3, best_sq: &mut f64) {
        let n = &self.nodes[node];
        if n.aabb.distance_squared(p) > *best_sq {
            return;
        }
        if n.left == usize::MAX {
            for &t in &self.order[n.start..n.end] {
                let [a, b, c] = mesh.triangle_vertices(t);
                let q = closest_point_on_triangle(p, a, b, c);
                let d = (p - q).norm_squared();
                if d < *best_sq {
                    *best_sq = d;
                }
            }
            return;
        }
        let (l, r) = (n.left, n.right);
        let dl = self.nodes[l].aabb.distance_squared(p);
        let dr = self.nodes[r].aabb.distance_squared(p);
        if dl <= dr {
            self.closest_visit(mesh, l, p, best_sq);
            self.closest_visit(mesh, r, p, best_sq);
        } else {
            self.closest_visit(mesh, r, p, best_sq);
            self.closest_visit(mesh, l, p, best_sq);
        }
    }

    /// Number of ray/mesh crossings with `t > eps`. `Err(())` when any hit
    /// is too close to an edge or the ray is near-parallel to a crossed
    /// triangle, signalling the caller to jitter the direction.
    fn count_crossings(&self, mesh: &TriangleMesh, origin: Point3, dir: Point3) -> Result<usize, ()> {
        let mut count = 0usize;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let n = &self.nodes[node];
            if !ray_hits_aabb(origin, dir, &n.aabb) {
                continue;
            }
            if n.left == usize::MAX {
                for &t in &self.order[n.start..n.end] {
                    let [a, b, c] = mesh.triangle_vertices(t);
                    match ray_triangle(origin, dir, a, b, c) {
                        RayHit::Miss => {}
                        RayHit::Hit => count += 1,
                        RayHit::Uncertain => return Err(()),
                    }
                }
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
        Ok(count)
    }

    /// Last-resort crossing count that treats uncertain hits as hits.
    fn count_crossings_permissive(&self, mesh: &TriangleMesh, origin: Point3, dir: Point3) -> usize {
        let mut count = 0usize;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let n = &self.nodes[node];
            if !ray_hits_aabb(origin, dir, &n.aabb) {
                continue;
            }
            if n.left == usize::MAX {
                for &t in &self.order[n.start..n.end] {
                    let [a, b, c] = mesh.triangle_vertices(t);
                    if !matches!(ray_triangle(origin, dir, a, b, c), RayHit::Miss) {
                        count += 1;
                    }
                }
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
        count
    }
}

fn ray_hits_aabb(origin: Point3, dir: Point3, aabb: &Aabb) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for axis in 0..3 {
        let o = origin.coord(axis);
        let d = dir.coord(axis);
        let lo = aabb.min.coord(axis);
        let hi = aabb.max.coord(axis);
        if d.abs() < 1e-300 {
            if o < lo || o > hi {
                return false;
            }
        } else {
            let inv = 1.0 / d;
            let (t0, t1) = if inv >= 0.0 {
                ((lo - o) * inv, (hi - o) * inv)
            } else {
                ((hi - o) * inv, (lo - o) * inv)
            };
            tmin = tmin.max(t0);
            tmax = tmax.min(t1);
            if tmin > tmax {
                return false;
            }
        }
    }
    true
}

enum RayHit {
    Miss,
    Hit,
    /// Intersection within `RAY_EDGE_TOL` of an edge, a near-parallel
    /// triangle, or a hit at the ray origin: the parity vote cannot trust
    /// it.
    Uncertain,
}

const RAY_EDGE_TOL: f64 = 1e-12;

fn ray_triangle(origin: Point3, dir: Point3, a: Point3, b: Point3, c: Point3) -> RayHit {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(e2);
    let det = e1.dot(pvec);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= RAY_EDGE_TOL * scale.max(1e-300) {
        // Near-parallel: could still graze the triangle plane.
        let n = e1.cross(e2);
        let dist_to_plane = (origin - a).dot(n).abs() / n.norm().max(1e-300);
        if dist_to_plane < 1e-9 {
            return RayHit::Uncertain;
        }
        return RayHit::Miss;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(pvec) * inv_det;
    let qvec = tvec.cross(e1);
    let v = dir.dot(qvec) * inv_det;
    let t = e2.dot(qvec) * inv_det;

    let margin = RAY_EDGE_TOL;
    if u < -margin || v < -margin || u + v > 1.0 + margin {
        return RayHit::Miss;
    }
    if t <= 0.0 {
        // Behind the origin, or exactly at it.
        if t > -margin {
            return RayHit::Uncertain;
        }
        return RayHit::Miss;
    }
    if u < margin || v < margin || u + v > 1.0 - margin || t < margin {
        return RayHit::Uncertain;
    }
    RayHit::Hit
}

/// Closest point on triangle `abc` to `p` (Ericson's region test).
fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_sphere() -> AnalyticShape {
        AnalyticShape::Sphere {
            center: Point3::ORIGIN,
            radius: 0.5,
        }
    }

    /// Axis-aligned cube mesh spanning `[-h, h]^3`, outward-oriented.
    pub(crate) fn cube_mesh(h: f64) -> TriangleMesh {
        let mut vertices = Vec::new();
        for z in [-h, h] {
            for y in [-h, h] {
                for x in [-h, h] {
                    vertices.push(Point3::new(x, y, z));
                }
            }
        }
        // Quads per face, outward CCW, fan-triangulated.
        let quads: [[usize; 4]; 6] = [
            [0, 2, 6, 4], // -x
            [1, 5, 7, 3], // +x
            [0, 4, 5, 1], // -y
            [2, 3, 7, 6], // +y
            [0, 1, 3, 2], // -z
            [4, 6, 7, 5], // +z
        ];
        let mut triangles = Vec::new();
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriangleMesh { vertices, triangles }
    }

    #[test]
    fn sphere_sdf_center_surface_outside() {
        let s = unit_sphere();
        assert_eq!(s.sdf(Point3::ORIGIN), -0.5);
        assert!(s.sdf(Point3::new(0.5, 0.0, 0.0)).abs() < 1e-15);
        assert!((s.sdf(Point3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn box_sdf_matches_hand_values() {
        let b = AnalyticShape::Box {
            center: Point3::ORIGIN,
            half_extents: Point3::new(0.5, 0.5, 0.5),
        };
        assert_eq!(b.sdf(Point3::ORIGIN), -0.5);
        assert!((b.sdf(Point3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-15);
        assert!(b.sdf(Point3::new(0.5, 0.0, 0.0)).abs() < 1e-15);
        // outside near a corner: Euclidean distance to the corner
        let d = b.sdf(Point3::new(1.0, 1.0, 1.0));
        assert!((d - (3.0f64).sqrt() * 0.5).abs() < 1e-12);
    }

    #[test]
    fn torus_sdf_basics() {
        let t = AnalyticShape::Torus {
            center: Point3::ORIGIN,
            major_radius: 0.5,
            minor_radius: 0.2,
        };
        // On the tube center circle
        assert!((t.sdf(Point3::new(0.5, 0.0, 0.0)) + 0.2).abs() < 1e-15);
        // On the outer equator
        assert!(t.sdf(Point3::new(0.7, 0.0, 0.0)).abs() < 1e-15);
        assert!(t.sdf(Point3::ORIGIN) > 0.0);
    }

    #[test]
    fn sphere_gradient_has_unit_norm() {
        use rand::{Rng, SeedableRng};
        let s = unit_sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..200 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if p.norm() < 0.1 {
                continue; // medial axis neighborhood
            }
            let gx = (s.sdf(p + Point3::new(h, 0.0, 0.0)) - s.sdf(p - Point3::new(h, 0.0, 0.0)))
                / (2.0 * h);
            let gy = (s.sdf(p + Point3::new(0.0, h, 0.0)) - s.sdf(p - Point3::new(0.0, h, 0.0)))
                / (2.0 * h);
            let gz = (s.sdf(p + Point3::new(0.0, 0.0, h)) - s.sdf(p - Point3::new(0.0, 0.0, h)))
                / (2.0 * h);
            let g = Point3::new(gx, gy, gz).norm();
            assert!((g - 1.0).abs() < 1e-6, "gradient norm {g} at {p:?}");
        }
    }

    #[test]
    fn cube_mesh_sdf_matches_examples() {
        let sdf = MeshSdf::new(cube_mesh(0.5), SignMode::Strict).unwrap();
        assert!(sdf.is_signed());
        assert!((sdf.signed_distance(Point3::ORIGIN) + 0.5).abs() < 1e-12);
        assert!((sdf.signed_distance(Point3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!(sdf.signed_distance(Point3::new(0.5, 0.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn cube_mesh_sdf_matches_analytic_box_everywhere() {
        use rand::{Rng, SeedableRng};
        let mesh_sdf = MeshSdf::new(cube_mesh(0.5), SignMode::Strict).unwrap();
        let analytic = AnalyticShape::Box {
            center: Point3::ORIGIN,
            half_extents: Point3::new(0.5, 0.5, 0.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let a = analytic.sdf(p);
            let m = mesh_sdf.signed_distance(p);
            assert!((a - m).abs() < 1e-9, "mismatch at {p:?}: {a} vs {m}");
        }
    }

    /// Icosphere: subdivided icosahedron with vertices projected onto the
    /// sphere. 20 * 4^s faces.
    fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5.0f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ];
        let mut vertices: Vec<Point3> = raw
            .iter()
            .map(|&(x, y, z)| Point3::new(x, y, z).normalized() * radius)
            .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: std::collections::HashMap<(usize, usize), usize> =
                std::collections::HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let mut mid = |u: usize, v: usize| {
                    let key = (u.min(v), u.max(v));
                    *midpoint.entry(key).or_insert_with(|| {
                        let p = ((vertices[u] + vertices[v]) * 0.5).normalized() * radius;
                        vertices.push(p);
                        vertices.len() - 1
                    })
                };
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        TriangleMesh {
            vertices,
            triangles: faces,
        }
    }

    #[test]
    fn icosphere_mesh_sdf_tracks_analytic_sphere() {
        use rand::{Rng, SeedableRng};
        let mesh = icosphere(0.5, 3);
        assert_eq!(mesh.triangles.len(), 1280);
        assert_eq!(mesh.vertices.len(), 642); // V = E - F + 2 = 1920 - 1280 + 2
        assert!(mesh.is_closed_manifold());
        let sdf = MeshSdf::new(mesh, SignMode::Strict).unwrap();
        let sphere = unit_sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut max_diff = 0.0f64;
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            max_diff = max_diff.max((sdf.signed_distance(p) - sphere.sdf(p)).abs());
        }
        assert!(max_diff <= 0.01, "max |mesh sdf - analytic sdf| = {max_diff}");
    }

    #[test]
    fn open_mesh_strict_refuses_fallback_unsigned() {
        let mut mesh = cube_mesh(0.5);
        mesh.triangles.pop();
        assert!(matches!(
            MeshSdf::new(mesh.clone(), SignMode::Strict),
            Err(SdfError::NotWatertight)
        ));
        let sdf = MeshSdf::new(mesh, SignMode::UnsignedFallback).unwrap();
        assert!(!sdf.is_signed());
        // Unsigned: interior point reports positive distance.
        assert!(sdf.signed_distance(Point3::ORIGIN) > 0.0);
    }

    #[test]
    fn sign_flips_exactly_once_across_a_face() {
        let sdf = MeshSdf::new(cube_mesh(0.5), SignMode::Strict).unwrap();
        // March through the +x face along x at fixed (y, z).
        let mut flips = 0;
        let mut prev = sdf.signed_distance(Point3::new(0.2, 0.1, -0.07)).signum();
        let steps = 200;
        for k in 1..=steps {
            let x = 0.2 + (0.8 - 0.2) * k as f64 / steps as f64;
            let s = sdf.signed_distance(Point3::new(x, 0.1, -0.07)).signum();
            if s != prev {
                flips += 1;
                prev = s;
            }
        }
        assert_eq!(flips, 1);
    }

    #[test]
    fn sample_gt_preserves_query_order() {
        let s = unit_sphere();
        let queries = [Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)];
        let set = sample_gt(&s, &queries);
        assert_eq!(set.len(), 2);
        assert_eq!(set.samples[0].s, -0.5);
        assert!((set.samples[1].s - 0.5).abs() < 1e-15);

        let empty = sample_gt(&s, &[]);
        assert!(empty.is_empty());
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        for shape in [
            unit_sphere(),
            AnalyticShape::Box {
                center: Point3::new(0.1, 0.0, -0.2),
                half_extents: Point3::new(0.4, 0.3, 0.5),
            },
            AnalyticShape::Torus {
                center: Point3::ORIGIN,
                major_radius: 0.5,
                minor_radius: 0.2,
            },
        ] {
            let cloud = shape.sample_surface(500, 7);
            assert_eq!(cloud.len(), 500);
            for p in &cloud.points {
                assert!(shape.sdf(*p).abs() < 1e-12, "{shape:?} sample off surface");
            }
            // determinism
            let again = shape.sample_surface(500, 7);
            assert_eq!(cloud.points, again.points);
        }
    }

    #[test]
    fn sample_csv_roundtrip() {
        let set = SampleSet {
            samples: vec![
                SdfSample {
                    x: Point3::new(0.1, -0.2, 1.0 / 3.0),
                    s: -0.125,
                },
                SdfSample {
                    x: Point3::new(1.0, 2.0, 3.0),
                    s: 0.5,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        write_sample_csv(&set, &path).unwrap();
        let back = read_sample_csv(&path).unwrap();
        assert_eq!(back.samples, set.samples);
    }
}
