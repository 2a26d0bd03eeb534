//! Zero level-set extraction on a regular grid (marching cubes).
//!
//! The 256-entry case table is generated, not transcribed: for every
//! corner sign configuration the crossed cube edges are linked into
//! closed contour loops by walking each face with a fixed pairing rule
//! (an in→out boundary crossing connects to the next out→in crossing in
//! cyclic face order, faces oriented outward). Adjacent cells see a
//! shared face with the same sign pattern and opposite orientation, so
//! their contours agree and the output is crack-free; the fan
//! triangulation of each loop winds so normals point toward positive
//! field values. Vertices lie on grid edges by linear interpolation and
//! are shared through an edge-keyed map.
//!
//! With a CSRBF model the field is discontinuous across Voronoi cell
//! boundaries, which can create spurious crossings; triangles touching a
//! grid edge whose endpoints lie in different cells are counted as a
//! diagnostic rather than silently accepted.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::basis::{eval_sdf, BasisKind, ImplicitModel};
use crate::geom::{Aabb, Point3, TriangleMesh};
use crate::par;

#[derive(Error, Debug)]
pub enum SurfacingError {
    #[error("grid resolution must be at least 8, got {0}")]
    ResolutionTooSmall(usize),
    #[error("grid bounds are degenerate along some axis")]
    DegenerateBounds,
    #[error("field value at grid node ({i}, {j}, {k}) = {position:?} is not finite")]
    NonFiniteField {
        i: usize,
        j: usize,
        k: usize,
        position: Point3,
    },
}

/// Sampling grid for extraction: `resolution` cells per axis over
/// `bounds`, surfacing the `iso` level.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub resolution: usize,
    pub bounds: Aabb,
    pub iso: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 128,
            bounds: Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0)),
            iso: 0.0,
        }
    }
}

impl GridSpec {
    pub fn with_resolution(resolution: usize) -> Self {
        GridSpec {
            resolution,
            ..GridSpec::default()
        }
    }

    fn validate(&self) -> Result<(), SurfacingError> {
        if self.resolution < 8 {
            return Err(SurfacingError::ResolutionTooSmall(self.resolution));
        }
        let ext = self.bounds.max - self.bounds.min;
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) {
            return Err(SurfacingError::DegenerateBounds);
        }
        Ok(())
    }
}

/// Extraction result: the mesh plus the count of triangles that touch a
/// Voronoi-cell boundary (CSRBF models only, diagnostic).
#[derive(Debug)]
pub struct Extraction {
    pub mesh: TriangleMesh,
    pub cross_cell_triangles: usize,
}

/// Extracts the iso-surface of a fitted model.
pub fn extract_isosurface(
    model: &ImplicitModel,
    grid: &GridSpec,
) -> Result<Extraction, SurfacingError> {
    let cell_of =
        (model.kind() == BasisKind::Csrbf).then_some(|x: Point3| model.kernels().nearest(x));
    extract_impl(&|x| eval_sdf(model, x), grid, cell_of.as_ref())
}

/// Extracts the iso-surface of an arbitrary scalar field (reference and
/// test path).
pub fn extract_isosurface_from_field<F>(
    field: F,
    grid: &GridSpec,
) -> Result<TriangleMesh, SurfacingError>
where
    F: Fn(Point3) -> f64 + Sync,
{
    let none: Option<&fn(Point3) -> usize> = None;
    Ok(extract_impl(&field, grid, none)?.mesh)
}

// Cube corners: corner `c` sits at offset ((c>>0)&1, (c>>1)&1, (c>>2)&1).
// Edges are ordered lower-corner first; ids 0..4 run along x, 4..8 along
// y, 8..12 along z.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

// Faces as corner cycles, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // -x
    [1, 3, 7, 5], // +x
    [0, 1, 5, 4], // -y
    [2, 6, 7, 3], // +y
    [0, 2, 3, 1], // -z
    [4, 5, 7, 6], // +z
];

fn edge_id(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES
        .iter()
        .position(|&e| e == key)
        .expect("corner pair is a cube edge")
}

fn build_case(config: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| (config >> c) & 1 == 1;

    // For each face, link every in→out boundary crossing (exit) to the
    // next out→in crossing (entry) in cyclic order. Each crossed cube
    // edge is an exit on exactly one of its two faces, so `next` is a
    // permutation of the crossed edges.
    let mut next = [usize::MAX; 12];
    for face in FACES {
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if inside(a) && !inside(b) {
                for step in 1..4 {
                    let j = (k + step) % 4;
                    let (c, d) = (face[j], face[(j + 1) % 4]);
                    if !inside(c) && inside(d) {
                        next[edge_id(a, b)] = edge_id(c, d);
                        break;
                    }
                }
            }
        }
    }

    // Trace the loops; start each at its smallest edge id so the table is
    // canonical. The fan is emitted reversed so triangle normals point
    // from inside (negative) to outside (positive).
    let mut triangles = Vec::new();
    let mut visited = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut cur = next[start];
        while cur != start {
            cycle.push(cur);
            visited[cur] = true;
            cur = next[cur];
        }
        debug_assert!(cycle.len() >= 3);
        for i in 1..cycle.len() - 1 {
            triangles.push([cycle[0] as u8, cycle[i + 1] as u8, cycle[i] as u8]);
        }
    }
    triangles
}

fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|config| build_case(config as u8)))
}

fn extract_impl<F, C>(
    field: &F,
    grid: &GridSpec,
    cell_of: Option<&C>,
) -> Result<Extraction, SurfacingError>
where
    F: Fn(Point3) -> f64 + Sync,
    C: Fn(Point3) -> usize + Sync,
{
    grid.validate()?;
    let res = grid.resolution;
    let nodes = res + 1;
    let min = grid.bounds.min;
    let ext = grid.bounds.max - min;
    let step = Point3::new(
        ext.x / res as f64,
        ext.y / res as f64,
        ext.z / res as f64,
    );
    let node_pos = |i: usize, j: usize, k: usize| {
        Point3::new(
            min.x + step.x * i as f64,
            min.y + step.y * j as f64,
            min.z + step.z * k as f64,
        )
    };
    let node_index = |i: usize, j: usize, k: usize| (k * nodes + j) * nodes + i;

    // Node sampling is the hot loop; parallel over nodes, index order
    // preserved.
    let total = nodes * nodes * nodes;
    let values: Vec<f64> = par::map_indexed(total, |idx| {
        let i = idx % nodes;
        let j = (idx / nodes) % nodes;
        let k = idx / (nodes * nodes);
        field(node_pos(i, j, k))
    });
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        let i = bad % nodes;
        let j = (bad / nodes) % nodes;
        let k = bad / (nodes * nodes);
        return Err(SurfacingError::NonFiniteField {
            i,
            j,
            k,
            position: node_pos(i, j, k),
        });
    }
    let supports: Option<Vec<usize>> = cell_of.map(|f| {
        par::map_indexed(total, |idx| {
            let i = idx % nodes;
            let j = (idx / nodes) % nodes;
            let k = idx / (nodes * nodes);
            f(node_pos(i, j, k))
        })
    });

    let table = case_table();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut vertex_crosses_cells: Vec<bool> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut cross_cell_triangles = 0usize;
    // Global edge key: (node index of the lower corner, axis).
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();

    let iso = grid.iso;
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let corner_nodes: [usize; 8] = std::array::from_fn(|c| {
                    node_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))
                });
                let mut config = 0u8;
                for (c, &node) in corner_nodes.iter().enumerate() {
                    if values[node] < iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 0xFF {
                    continue;
                }
                for tri in &table[config as usize] {
                    let mut ids = [0usize; 3];
                    let mut crosses = false;
                    for (slot, &edge) in tri.iter().enumerate() {
                        let (ca, cb) = EDGES[edge as usize];
                        let na = corner_nodes[ca];
                        let nb = corner_nodes[cb];
                        let axis = edge / 4;
                        let vid = *edge_vertex.entry((na, axis)).or_insert_with(|| {
                            let va = values[na];
                            let vb = values[nb];
                            let t = (iso - va) / (vb - va);
                            let pa = node_pos(
                                na % nodes,
                                (na / nodes) % nodes,
                                na / (nodes * nodes),
                            );
                            let pb = node_pos(
                                nb % nodes,
                                (nb / nodes) % nodes,
                                nb / (nodes * nodes),
                            );
                            vertices.push(pa + (pb - pa) * t);
                            vertex_crosses_cells.push(
                                supports
                                    .as_ref()
                                    .map(|s| s[na] != s[nb])
                                    .unwrap_or(false),
                            );
                            vertices.len() - 1
                        });
                        ids[slot] = vid;
                        crosses |= vertex_crosses_cells[vid];
                    }
                    triangles.push(ids);
                    if crosses {
                        cross_cell_triangles += 1;
                    }
                }
            }
        }
    }

    Ok(Extraction {
        mesh: TriangleMesh {
            vertices,
            triangles,
        },
        cross_cell_triangles,
    })
}
