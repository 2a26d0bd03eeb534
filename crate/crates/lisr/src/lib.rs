//! Fitting toolkit for linear implicit surface representations.
//!
//! A 3D shape is encoded as the zero level set of a signed distance field
//! written as a linear combination of radial basis functions anchored at
//! kernel points. The crate covers the full loop:
//!
//! * [`geom`] — point clouds, meshes, file IO, normalization into the
//!   `[-1,1]^3` optimization domain, and the nearest-neighbor index that
//!   backs Voronoi local supports.
//! * [`sdf`] — ground-truth signed distance supervision from analytic
//!   shapes or watertight meshes.
//! * [`basis`] — the basis families (tri-harmonic, mono-harmonic, HRBF and
//!   the Voronoi-gated CSRBF), design-matrix assembly and model evaluation.
//! * [`query`] — query-point selection: the per-kernel axis-offset strategy
//!   that makes the Gram matrix a scaled identity, and a uniform baseline.
//! * [`solver`] — closed-form and gradient-descent coefficient fitting plus
//!   Gram-matrix rank diagnostics.
//! * [`surfacing`] — marching-cubes extraction of the zero level set.
//! * [`metrics`] — Chamfer-L1 and F-score reconstruction metrics.
//!
//! With the default `parallel` feature the batch-oriented inner loops
//! (design-matrix assembly, grid sampling, nearest-neighbor sweeps) run on
//! rayon; disabling the feature falls back to equivalent sequential code.
//! All results are independent of thread count.

pub mod basis;
pub mod geom;
pub mod metrics;
mod par;
pub mod query;
pub mod sdf;
pub mod solver;
pub mod surfacing;

pub use geom::{Aabb, KernelSet, NormalizeTransform, Point3, PointCloud, TriangleMesh};
