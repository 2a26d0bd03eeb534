//! Basis-function families and design-matrix assembly.
//!
//! Four radial families share one interface. Tri-harmonic (`r^3`) and
//! mono-harmonic (`r`) contribute one column per kernel. The gradient
//! basis contributes three columns per kernel, `∇‖x−p‖³ = 3‖x−p‖(x−p)`,
//! either globally supported (HRBF) or gated by the kernel's Voronoi cell
//! (CSRBF) so that each row of the design matrix touches a single kernel's
//! column block.

mod model;

pub use model::{
    beta_view, eval_sdf, eval_sdf_batch, eval_sdf_batch_seq, read_model, write_model,
    ImplicitModel,
};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geom::{KernelSet, Point3};
use crate::par;

#[derive(Error, Debug)]
pub enum BasisError {
    #[error("operation requires a {expected} model, got {found}")]
    WrongKind {
        expected: &'static str,
        found: BasisKind,
    },
    #[error("kernel index {index} out of range for {q} kernels")]
    KernelIndexOutOfRange { index: usize, q: usize },
    #[error("coefficient vector has length {found}, expected {expected}")]
    CoefficientLengthMismatch { expected: usize, found: usize },
    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: missing or out-of-order field '{field}'")]
    MissingField { path: String, field: &'static str },
    #[error("{path}:{line}: {reason}")]
    MalformedModel {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: unsupported model version {found} (supported: {supported})")]
    UnsupportedVersion {
        path: String,
        found: String,
        supported: u32,
    },
    #[error("unknown basis kind '{0}'")]
    UnknownBasisKind(String),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
}

/// The basis families. `columns_per_kernel` distinguishes the scalar
/// harmonic kinds (one coefficient per kernel) from the gradient kinds
/// (three).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    TriHarmonic,
    MonoHarmonic,
    Hrbf,
    Csrbf,
}

impl BasisKind {
    pub const ALL: [BasisKind; 4] = [
        BasisKind::TriHarmonic,
        BasisKind::MonoHarmonic,
        BasisKind::Hrbf,
        BasisKind::Csrbf,
    ];

    pub fn columns_per_kernel(self) -> usize {
        match self {
            BasisKind::TriHarmonic | BasisKind::MonoHarmonic => 1,
            BasisKind::Hrbf | BasisKind::Csrbf => 3,
        }
    }

    pub fn coefficient_count(self, q: usize) -> usize {
        q * self.columns_per_kernel()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::TriHarmonic => "tri-harmonic",
            BasisKind::MonoHarmonic => "mono-harmonic",
            BasisKind::Hrbf => "hrbf",
            BasisKind::Csrbf => "csrbf",
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BasisKind {
    type Err = BasisError;
    fn from_str(s: &str) -> Result<Self, BasisError> {
        match s {
            "tri-harmonic" => Ok(BasisKind::TriHarmonic),
            "mono-harmonic" => Ok(BasisKind::MonoHarmonic),
            "hrbf" => Ok(BasisKind::Hrbf),
            "csrbf" => Ok(BasisKind::Csrbf),
            other => Err(BasisError::UnknownBasisKind(other.to_string())),
        }
    }
}

/// `∇‖x−p‖³ = 3‖x−p‖(x−p)`, the three gradient-basis values for one
/// kernel.
#[inline]
pub fn gradient_basis(x: Point3, p: Point3) -> [f64; 3] {
    let d = x - p;
    let r3 = 3.0 * d.norm();
    [r3 * d.x, r3 * d.y, r3 * d.z]
}

/// One CSRBF design-matrix row: all nonzeros live in the column block of
/// the supporting kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRow {
    pub support: usize,
    pub values: [f64; 3],
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<f64>),
    /// CSRBF rows; the column count is `3q`.
    BlockSparse { q: usize, rows: Vec<BlockRow> },
}

/// The m×n matrix `Vᵀ` of basis values at query points. CSRBF systems are
/// held row-sparse (one 3-wide block per row); the other kinds are dense.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    kind: BasisKind,
    q: usize,
    storage: Storage,
}

impl DesignMatrix {
    /// Wraps a dense matrix directly; the reference path for synthetic
    /// systems and dual-route checks. The column count must be divisible
    /// by the kind's per-kernel width.
    pub fn from_dense(kind: BasisKind, matrix: DMatrix<f64>) -> DesignMatrix {
        let w = kind.columns_per_kernel();
        assert_eq!(matrix.ncols() % w, 0, "columns not divisible by block width");
        DesignMatrix {
            kind,
            q: matrix.ncols() / w,
            storage: Storage::Dense(matrix),
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Number of kernels behind the columns.
    pub fn kernel_count(&self) -> usize {
        self.q
    }

    pub fn nrows(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows(),
            Storage::BlockSparse { rows, .. } => rows.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.ncols(),
            Storage::BlockSparse { q, .. } => 3 * q,
        }
    }

    pub fn is_block_sparse(&self) -> bool {
        matches!(self.storage, Storage::BlockSparse { .. })
    }

    /// Supporting kernel of a row (CSRBF only).
    pub fn row_support(&self, row: usize) -> Option<usize> {
        match &self.storage {
            Storage::Dense(_) => None,
            Storage::BlockSparse { rows, .. } => Some(rows[row].support),
        }
    }

    pub(crate) fn block_rows(&self) -> Option<&[BlockRow]> {
        match &self.storage {
            Storage::Dense(_) => None,
            Storage::BlockSparse { rows, .. } => Some(rows),
        }
    }

    pub(crate) fn dense(&self) -> Option<&DMatrix<f64>> {
        match &self.storage {
            Storage::Dense(m) => Some(m),
            Storage::BlockSparse { .. } => None,
        }
    }

    /// `Vᵀ · alpha`: predicted SDF values at the query points.
    pub fn apply(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.ncols(), "coefficient length mismatch");
        match &self.storage {
            Storage::Dense(m) => {
                let v = nalgebra::DVector::from_column_slice(alpha);
                (m * v).data.into()
            }
            Storage::BlockSparse { rows, .. } => rows
                .iter()
                .map(|r| {
                    let b = 3 * r.support;
                    r.values[0] * alpha[b]
                        + r.values[1] * alpha[b + 1]
                        + r.values[2] * alpha[b + 2]
                })
                .collect(),
        }
    }

    /// `V · r` for a residual vector `r` over rows: the gradient-side
    /// product.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.nrows(), "residual length mismatch");
        match &self.storage {
            Storage::Dense(m) => {
                let v = nalgebra::DVector::from_column_slice(r);
                (m.transpose() * v).data.into()
            }
            Storage::BlockSparse { rows, q } => {
                let mut out = vec![0.0; 3 * q];
                for (row, &ri) in rows.iter().zip(r) {
                    let b = 3 * row.support;
                    out[b] += row.values[0] * ri;
                    out[b + 1] += row.values[1] * ri;
                    out[b + 2] += row.values[2] * ri;
                }
                out
            }
        }
    }

    /// Materializes the full dense matrix (reference paths and small
    /// systems).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::BlockSparse { q, rows } => {
                let mut m = DMatrix::zeros(rows.len(), 3 * q);
                for (i, row) in rows.iter().enumerate() {
                    for k in 0..3 {
                        m[(i, 3 * row.support + k)] = row.values[k];
                    }
                }
                m
            }
        }
    }
}

/// Basis values at one point: a dense row of length `n`.
///
/// Tri-harmonic: column `i` is `‖x−pᵢ‖³`. Mono-harmonic: `‖x−pᵢ‖`. HRBF:
/// columns `3i..3i+3` are the gradient basis of kernel `i`. CSRBF: the
/// HRBF row with every block zeroed except the Voronoi cell containing
/// `x`.
pub fn eval_basis_row(kind: BasisKind, kernels: &KernelSet, x: Point3) -> Vec<f64> {
    let q = kernels.len();
    match kind {
        BasisKind::TriHarmonic => kernels
            .points()
            .iter()
            .map(|&p| (x - p).norm().powi(3))
            .collect(),
        BasisKind::MonoHarmonic => kernels.points().iter().map(|&p| (x - p).norm()).collect(),
        BasisKind::Hrbf => {
            let mut row = Vec::with_capacity(3 * q);
            for &p in kernels.points() {
                row.extend_from_slice(&gradient_basis(x, p));
            }
            row
        }
        BasisKind::Csrbf => {
            let mut row = vec![0.0; 3 * q];
            let i = kernels.nearest(x);
            row[3 * i..3 * i + 3].copy_from_slice(&gradient_basis(x, kernels.point(i)));
            row
        }
    }
}

fn dense_from_rows(kind: BasisKind, q: usize, m: usize, rows: Vec<Vec<f64>>) -> DesignMatrix {
    let n = kind.coefficient_count(q);
    let mut flat = Vec::with_capacity(m * n);
    for row in rows {
        flat.extend_from_slice(&row);
    }
    DesignMatrix {
        kind,
        q,
        storage: Storage::Dense(DMatrix::from_row_slice(m, n, &flat)),
    }
}

/// Assembles `Vᵀ` with one row per query, in query order.
pub fn assemble_design_matrix(
    kind: BasisKind,
    kernels: &KernelSet,
    queries: &[Point3],
) -> DesignMatrix {
    assert!(!queries.is_empty(), "query set must be non-empty");
    let q = kernels.len();
    if kind == BasisKind::Csrbf {
        let rows = par::map_indexed(queries.len(), |j| csrbf_row(kernels, queries[j]));
        return DesignMatrix {
            kind,
            q,
            storage: Storage::BlockSparse { q, rows },
        };
    }
    let rows = par::map_indexed(queries.len(), |j| eval_basis_row(kind, kernels, queries[j]));
    dense_from_rows(kind, q, queries.len(), rows)
}

/// Sequential twin of [`assemble_design_matrix`]; the `parallel` feature's
/// fallback and the benchmark baseline.
pub fn assemble_design_matrix_seq(
    kind: BasisKind,
    kernels: &KernelSet,
    queries: &[Point3],
) -> DesignMatrix {
    assert!(!queries.is_empty(), "query set must be non-empty");
    let q = kernels.len();
    if kind == BasisKind::Csrbf {
        let rows = par::map_indexed_seq(queries.len(), |j| csrbf_row(kernels, queries[j]));
        return DesignMatrix {
            kind,
            q,
            storage: Storage::BlockSparse { q, rows },
        };
    }
    let rows = par::map_indexed_seq(queries.len(), |j| eval_basis_row(kind, kernels, queries[j]));
    dense_from_rows(kind, q, queries.len(), rows)
}

#[inline]
fn csrbf_row(kernels: &KernelSet, x: Point3) -> BlockRow {
    let i = kernels.nearest(x);
    BlockRow {
        support: i,
        values: gradient_basis(x, kernels.point(i)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::KernelSet;

    fn kernels(pts: &[(f64, f64, f64)]) -> KernelSet {
        KernelSet::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
    }

    #[test]
    fn tri_harmonic_row_is_cubed_distance() {
        let ks = kernels(&[(0.0, 0.0, 0.0)]);
        let row = eval_basis_row(BasisKind::TriHarmonic, &ks, Point3::new(0.0, 2.0, 0.0));
        assert_eq!(row, vec![8.0]);
    }

    #[test]
    fn mono_harmonic_row_is_distance() {
        let ks = kernels(&[(0.0, 0.0, 0.0), (0.0, 0.0, 3.0)]);
        let row = eval_basis_row(BasisKind::MonoHarmonic, &ks, Point3::new(0.0, 4.0, 0.0));
        assert_eq!(row, vec![4.0, 5.0]);
    }

    #[test]
    fn csrbf_row_single_kernel_matches_gradient() {
        let ks = kernels(&[(0.0, 0.0, 0.0)]);
        let row = eval_basis_row(BasisKind::Csrbf, &ks, Point3::new(0.1, 0.0, 0.0));
        assert!((row[0] - 0.03).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn csrbf_and_hrbf_rows_at_tie_point() {
        let ks = kernels(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let x = Point3::new(0.5, 0.0, 0.0); // tie breaks to kernel 0
        let csrbf = eval_basis_row(BasisKind::Csrbf, &ks, x);
        assert_eq!(csrbf, vec![0.75, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let hrbf = eval_basis_row(BasisKind::Hrbf, &ks, x);
        assert_eq!(hrbf, vec![0.75, 0.0, 0.0, -0.75, 0.0, 0.0]);
    }

    #[test]
    fn csrbf_row_equals_hrbf_block_inside_cell() {
        let ks = kernels(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        let x = Point3::new(0.1, -0.05, 0.2); // strictly inside cell 0
        let csrbf = eval_basis_row(BasisKind::Csrbf, &ks, x);
        let hrbf = eval_basis_row(BasisKind::Hrbf, &ks, x);
        assert_eq!(&csrbf[0..3], &hrbf[0..3]);
        assert!(csrbf[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_basis_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..100 {
            let p = Point3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let x = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if (x - p).norm() < 0.05 {
                continue;
            }
            let g = gradient_basis(x, p);
            let f = |y: Point3| (y - p).norm().powi(3);
            let fd = [
                (f(x + Point3::new(h, 0.0, 0.0)) - f(x - Point3::new(h, 0.0, 0.0))) / (2.0 * h),
                (f(x + Point3::new(0.0, h, 0.0)) - f(x - Point3::new(0.0, h, 0.0))) / (2.0 * h),
                (f(x + Point3::new(0.0, 0.0, h)) - f(x - Point3::new(0.0, 0.0, h))) / (2.0 * h),
            ];
            let scale = (x - p).norm_squared() * 3.0; // |∇| magnitude scale
            for k in 0..3 {
                assert!(
                    (g[k] - fd[k]).abs() <= 1e-6 * scale.max(1e-12),
                    "component {k}: {} vs {}",
                    g[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn assembled_shape_matches_queries_and_kind() {
        let ks = kernels(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let queries: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64 * 0.1, 0.2, 0.0)).collect();
        let m = assemble_design_matrix(BasisKind::TriHarmonic, &ks, &queries);
        assert_eq!((m.nrows(), m.ncols()), (5, 2));
        let m = assemble_design_matrix(BasisKind::Hrbf, &ks, &queries);
        assert_eq!((m.nrows(), m.ncols()), (5, 6));
    }

    #[test]
    fn single_kernel_axis_offsets_give_scaled_identity() {
        let ks = kernels(&[(0.0, 0.0, 0.0)]);
        let eps = 0.1;
        let queries = [
            Point3::new(eps, 0.0, 0.0),
            Point3::new(0.0, eps, 0.0),
            Point3::new(0.0, 0.0, eps),
        ];
        let m = assemble_design_matrix(BasisKind::Csrbf, &ks, &queries).to_dense();
        let expected = DMatrix::from_diagonal_element(3, 3, 0.03);
        assert!((m - expected).norm() < 1e-15);
    }

    #[test]
    fn block_sparse_assembly_matches_dense_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..40)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let ks = KernelSet::new(pts).unwrap();
        let queries: Vec<Point3> = (0..137)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let sparse = assemble_design_matrix(BasisKind::Csrbf, &ks, &queries);
        assert!(sparse.is_block_sparse());
        // Dense reference assembled row by row from eval_basis_row.
        let mut reference = DMatrix::zeros(queries.len(), 3 * ks.len());
        for (j, &x) in queries.iter().enumerate() {
            let row = eval_basis_row(BasisKind::Csrbf, &ks, x);
            for (k, v) in row.iter().enumerate() {
                reference[(j, k)] = *v;
            }
        }
        assert_eq!(sparse.to_dense(), reference);
        // Every row touches at most one 3-wide block.
        for j in 0..queries.len() {
            let support = sparse.row_support(j).unwrap();
            let row = reference.row(j);
            for c in 0..3 * ks.len() {
                if c / 3 != support {
                    assert_eq!(row[c], 0.0);
                }
            }
        }
    }

    #[test]
    fn axis_offset_queries_give_scaled_identity_blocks() {
        // On axis-offset queries every kernel's 3x3 block must come out
        // as 3 eps^2 I, verified against the dense reference assembly.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let pts: Vec<Point3> = (0..50)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.9..0.9),
                    rng.random_range(-0.9..0.9),
                    rng.random_range(-0.9..0.9),
                )
            })
            .collect();
        let ks = KernelSet::new(pts).unwrap();
        let qs = crate::query::select_query_points_fast(&ks, 0.5).unwrap();
        let eps = match qs.strategy {
            crate::query::QueryStrategy::AxisOffset { epsilon } => epsilon,
            _ => unreachable!(),
        };
        let dense = assemble_design_matrix(BasisKind::Csrbf, &ks, &qs.points).to_dense();
        let scale = 3.0 * eps * eps;
        for i in 0..ks.len() {
            for r in 0..3 {
                for c in 0..dense.ncols() {
                    let expected = if c == 3 * i + r { scale } else { 0.0 };
                    let got = dense[(3 * i + r, c)];
                    assert!(
                        (got - expected).abs() <= 1e-15 * (1.0 + scale),
                        "block {i}, row {r}, col {c}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn seq_and_parallel_assembly_agree() {
        let ks = kernels(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        let queries: Vec<Point3> = (0..50)
            .map(|i| Point3::new((i as f64 * 0.717).sin(), (i as f64 * 0.313).cos(), 0.1))
            .collect();
        for kind in BasisKind::ALL {
            let a = assemble_design_matrix(kind, &ks, &queries);
            let b = assemble_design_matrix_seq(kind, &ks, &queries);
            assert_eq!(a.to_dense(), b.to_dense(), "{kind}");
        }
    }

    #[test]
    fn apply_and_apply_transpose_match_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let ks = kernels(&[(0.0, 0.0, 0.0), (0.8, 0.1, 0.0), (0.0, 0.9, -0.3)]);
        let queries: Vec<Point3> = (0..23)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        for kind in BasisKind::ALL {
            let m = assemble_design_matrix(kind, &ks, &queries);
            let dense = m.to_dense();
            let alpha: Vec<f64> = (0..m.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..m.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();

            let fast = m.apply(&alpha);
            let reference = &dense * nalgebra::DVector::from_column_slice(&alpha);
            for (a, b) in fast.iter().zip(reference.iter()) {
                assert!((a - b).abs() < 1e-12);
            }

            let fast_t = m.apply_transpose(&r);
            let reference_t = dense.transpose() * nalgebra::DVector::from_column_slice(&r);
            for (a, b) in fast_t.iter().zip(reference_t.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_kind_string_roundtrip() {
        for kind in BasisKind::ALL {
            assert_eq!(kind.as_str().parse::<BasisKind>().unwrap(), kind);
        }
        assert!("cubic".parse::<BasisKind>().is_err());
    }
}
