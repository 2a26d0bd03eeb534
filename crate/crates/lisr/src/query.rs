//! Query-point selection.
//!
//! Fitting compares predicted and ground-truth SDF values at query points.
//! Two strategies are provided. The axis-offset strategy places exactly
//! three points `{p + εx̂, p + εŷ, p + εẑ}` in every kernel's Voronoi
//! cell with one common ε, which makes the design matrix block-diagonal
//! and the Gram matrix a scaled identity. The uniform strategy draws
//! i.i.d. points from `[-1,1]^3` as the baseline the global bases use.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{KernelSet, Point3};

/// Inradius stand-in for a single kernel, whose cell is all of space.
pub const SINGLE_KERNEL_INRADIUS: f64 = 0.25;

/// Offsets below this collapse into the kernel point at f64 precision.
pub const MIN_EPSILON: f64 = 1e-9;

#[derive(Error, Debug)]
pub enum QueryError {
    #[error("safety factor must lie in (0, 1), got {0}")]
    InvalidSafety(f64),
    #[error("offset epsilon {0:.3e} below {MIN_EPSILON:.0e}; kernels are too clustered")]
    EpsilonTooSmall(f64),
    #[error("query count must be at least 1")]
    ZeroCount,
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// How a query set was produced. The `algorithm2` label in CLI grammar and
/// CSV output maps to [`QueryStrategy::AxisOffset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryStrategy {
    /// Three axis-offset points per kernel with common spacing `epsilon`,
    /// in kernel order.
    AxisOffset { epsilon: f64 },
    /// `count` i.i.d. uniform points in `[-1,1]^3`.
    Uniform { seed: u64, count: usize },
}

impl QueryStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            QueryStrategy::AxisOffset { .. } => "algorithm2",
            QueryStrategy::Uniform { .. } => "uniform",
        }
    }
}

/// An ordered query-point set tagged with its generating strategy.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub points: Vec<Point3>,
    pub strategy: QueryStrategy,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Generating kernel of query `j` for axis-offset sets.
    pub fn generating_kernel(&self, j: usize) -> Option<usize> {
        match self.strategy {
            QueryStrategy::AxisOffset { .. } => Some(j / 3),
            QueryStrategy::Uniform { .. } => None,
        }
    }
}

/// Lower bound on the inradius of kernel `i`'s Voronoi cell: half the
/// distance to the nearest other kernel. A single-kernel set returns
/// [`SINGLE_KERNEL_INRADIUS`].
pub fn support_inradius(kernels: &KernelSet, i: usize) -> f64 {
    match kernels.nearest_excluding(kernels.point(i), i) {
        Some((_, d)) => 0.5 * d,
        None => SINGLE_KERNEL_INRADIUS,
    }
}

/// Axis-offset queries with `ε = safety × min_i inradius_i`, guaranteeing
/// every query point lands strictly inside its own kernel's cell.
pub fn select_query_points_fast(
    kernels: &KernelSet,
    safety: f64,
) -> Result<QuerySet, QueryError> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(QueryError::InvalidSafety(safety));
    }
    let min_inradius = (0..kernels.len())
        .map(|i| support_inradius(kernels, i))
        .fold(f64::INFINITY, f64::min);
    let epsilon = safety * min_inradius;
    if epsilon.is_nan() || epsilon < MIN_EPSILON {
        return Err(QueryError::EpsilonTooSmall(epsilon));
    }
    Ok(axis_offset_queries(kernels, epsilon))
}

/// Axis-offset queries with a caller-forced spacing. Containment inside
/// each cell is only guaranteed when `epsilon` is below every cell's
/// inradius; prefer [`select_query_points_fast`].
pub fn select_query_points_with_epsilon(
    kernels: &KernelSet,
    epsilon: f64,
) -> Result<QuerySet, QueryError> {
    if epsilon.is_nan() || epsilon < MIN_EPSILON {
        return Err(QueryError::EpsilonTooSmall(epsilon));
    }
    Ok(axis_offset_queries(kernels, epsilon))
}

fn axis_offset_queries(kernels: &KernelSet, epsilon: f64) -> QuerySet {
    let mut points = Vec::with_capacity(3 * kernels.len());
    for &p in kernels.points() {
        points.push(p + Point3::new(epsilon, 0.0, 0.0));
        points.push(p + Point3::new(0.0, epsilon, 0.0));
        points.push(p + Point3::new(0.0, 0.0, epsilon));
    }
    QuerySet {
        points,
        strategy: QueryStrategy::AxisOffset { epsilon },
    }
}

/// `count` i.i.d. uniform points in `[-1,1]^3`, deterministic per seed.
pub fn select_query_points_uniform(count: usize, seed: u64) -> Result<QuerySet, QueryError> {
    if count == 0 {
        return Err(QueryError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            )
        })
        .collect();
    Ok(QuerySet {
        points,
        strategy: QueryStrategy::Uniform { seed, count },
    })
}

/// Writes the set as CSV `x,y,z,kernel_index`; uniform points carry -1.
pub fn write_query_csv(set: &QuerySet, w: &mut impl Write) -> Result<(), QueryError> {
    writeln!(w, "x,y,z,kernel_index")?;
    for (j, p) in set.points.iter().enumerate() {
        let idx = set
            .generating_kernel(j)
            .map(|i| i as i64)
            .unwrap_or(-1);
        writeln!(w, "{:.16e},{:.16e},{:.16e},{idx}", p.x, p.y, p.z)?;
    }
    Ok(())
}
