//! Reconstruction quality metrics over point sets.
//!
//! Chamfer-L1 is the two-term sum of mean nearest-neighbor L1 distances
//! (a halved variant exists for cross-convention comparisons). The
//! F-score at threshold τ is the harmonic mean of precision (predicted
//! points within τ of the reference) and recall (reference points within
//! τ of the prediction), with Euclidean distances. Mesh inputs are
//! reduced to point sets by area-weighted surface sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{KdTree, PointCloud, TriangleMesh};
use crate::par;

/// Default F-score distance threshold.
pub const DEFAULT_TAU: f64 = 0.02;

/// Default number of surface samples when reducing a mesh to points.
pub const DEFAULT_MESH_SAMPLES: usize = 100_000;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("point cloud '{0}' is empty")]
    EmptyCloud(&'static str),
    #[error("threshold tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("mesh has no triangles to sample")]
    EmptyMesh,
    #[error("mesh surface area is zero")]
    ZeroArea,
}

/// Chamfer-L1 convention: the plain two-term sum, or half of it for
/// comparisons against pipelines that average the directed terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamferConvention {
    Sum,
    HalvedMean,
}

/// Metric bundle for one prediction/reference pair.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub chamfer_l1: f64,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub tau: f64,
    pub n_pred: usize,
    pub n_gt: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "chamfer_l1,f_score,precision,recall,tau,n_pred,n_gt";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            self.chamfer_l1, self.f_score, self.precision, self.recall, self.tau, self.n_pred,
            self.n_gt
        )
    }

    /// Computes Chamfer-L1 and the F-score in one pass over shared
    /// nearest-neighbor structures.
    pub fn compute(
        pred: &PointCloud,
        gt: &PointCloud,
        tau: f64,
        convention: ChamferConvention,
    ) -> Result<MetricReport, MetricsError> {
        if pred.is_empty() {
            return Err(MetricsError::EmptyCloud("prediction"));
        }
        if gt.is_empty() {
            return Err(MetricsError::EmptyCloud("reference"));
        }
        if tau.is_nan() || tau <= 0.0 {
            return Err(MetricsError::NonPositiveTau(tau));
        }
        let pred_tree = KdTree::build(&pred.points);
        let gt_tree = KdTree::build(&gt.points);

        let pred_to_gt_l1 = directed_l1(&pred.points, &gt_tree);
        let gt_to_pred_l1 = directed_l1(&gt.points, &pred_tree);
        let sum = mean(&pred_to_gt_l1) + mean(&gt_to_pred_l1);
        let chamfer = match convention {
            ChamferConvention::Sum => sum,
            ChamferConvention::HalvedMean => 0.5 * sum,
        };

        let pred_hits = within_tau(&pred.points, &gt_tree, tau);
        let gt_hits = within_tau(&gt.points, &pred_tree, tau);
        let precision = pred_hits as f64 / pred.len() as f64;
        let recall = gt_hits as f64 / gt.len() as f64;
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };

        Ok(MetricReport {
            chamfer_l1: chamfer,
            f_score,
            precision,
            recall,
            tau,
            n_pred: pred.len(),
            n_gt: gt.len(),
        })
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "chamfer-L1: {:.6e}", self.chamfer_l1)?;
        writeln!(
            f,
            "f-score @ tau {}: {:.4} (precision {:.4}, recall {:.4})",
            self.tau, self.f_score, self.precision, self.recall
        )?;
        write!(f, "samples: {} predicted vs {} reference", self.n_pred, self.n_gt)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn directed_l1(from: &[crate::geom::Point3], to: &KdTree) -> Vec<f64> {
    par::map_indexed(from.len(), |i| to.nearest_l1(from[i]).1)
}

fn within_tau(from: &[crate::geom::Point3], to: &KdTree, tau: f64) -> usize {
    par::map_indexed(from.len(), |i| to.nearest(from[i]).1 <= tau)
        .into_iter()
        .filter(|&b| b)
        .count()
}

/// Two-term Chamfer-L1 distance between point sets.
pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::EmptyCloud("first"));
    }
    if b.is_empty() {
        return Err(MetricsError::EmptyCloud("second"));
    }
    let tree_a = KdTree::build(&a.points);
    let tree_b = KdTree::build(&b.points);
    Ok(mean(&directed_l1(&a.points, &tree_b)) + mean(&directed_l1(&b.points, &tree_a)))
}

/// Sequential twin of [`chamfer_l1`] (benchmark baseline).
pub fn chamfer_l1_seq(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::EmptyCloud("first"));
    }
    if b.is_empty() {
        return Err(MetricsError::EmptyCloud("second"));
    }
    let tree_a = KdTree::build(&a.points);
    let tree_b = KdTree::build(&b.points);
    let dir = |from: &[crate::geom::Point3], to: &KdTree| {
        par::map_indexed_seq(from.len(), |i| to.nearest_l1(from[i]).1)
    };
    Ok(mean(&dir(&a.points, &tree_b)) + mean(&dir(&b.points, &tree_a)))
}

/// Precision/recall/F-score at threshold `tau` (Euclidean), bundled with
/// Chamfer-L1 in the returned report.
pub fn f_score(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<MetricReport, MetricsError> {
    MetricReport::compute(pred, gt, tau, ChamferConvention::Sum)
}

/// Uniform-by-area surface samples from a mesh, deterministic per seed.
pub fn sample_mesh_surface(
    mesh: &TriangleMesh,
    count: usize,
    seed: u64,
) -> Result<PointCloud, MetricsError> {
    if mesh.triangles.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(MetricsError::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let pick: f64 = rng.random_range(0.0..total);
        let t = cumulative.partition_point(|&c| c <= pick).min(mesh.triangles.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(t);
        // Uniform barycentric sampling.
        let r1: f64 = rng.random_range(0.0..1.0);
        let r2: f64 = rng.random_range(0.0..1.0);
        let s = r1.sqrt();
        let (u, v, w) = (1.0 - s, s * (1.0 - r2), s * r2);
        points.push(a * u + b * v + c * w);
    }
    Ok(PointCloud::new(points))
}
