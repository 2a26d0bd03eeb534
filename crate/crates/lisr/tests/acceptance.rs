//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured values (visible with `--nocapture`). Tolerances are
//! pinned in code; nothing is deferred to later calibration.
//!
//! Run with:
//!
//! ```text
//! cargo test -p lisr --test acceptance -- --nocapture
//! ```

use std::time::Instant;

use lisr::basis::{assemble_design_matrix, eval_sdf, BasisKind, ImplicitModel};
use lisr::geom::{farthest_point_sample, normalize_to_unit_cube, KernelSet, Point3, PointCloud};
use lisr::metrics::{chamfer_l1, f_score, sample_mesh_surface, MetricReport, ChamferConvention};
use lisr::query::{select_query_points_fast, QuerySet, QueryStrategy};
use lisr::sdf::{sample_gt, AnalyticShape, SampleSet, SdfSample};
use lisr::solver::{
    closed_form_fit, closed_form_solve, gd_fit, gram_deviation_from, gram_identity_deviation,
    loss_gradient, perturb_block, rank_of_gram, sdf_loss, singular_values, StepRule,
    RANK_REL_TOL,
};
use lisr::surfacing::{extract_isosurface, GridSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic cloud on a radius-`r` sphere: a spiral lattice plus the
/// six axis poles, so the bounding box is exactly `[-r, r]^3` and the
/// normalization transform is exact.
fn sphere_cloud(n: usize, r: f64) -> PointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let lattice = n - 6;
    let mut points = vec![
        Point3::new(r, 0.0, 0.0),
        Point3::new(-r, 0.0, 0.0),
        Point3::new(0.0, r, 0.0),
        Point3::new(0.0, -r, 0.0),
        Point3::new(0.0, 0.0, r),
        Point3::new(0.0, 0.0, -r),
    ];
    for i in 0..lattice {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / lattice as f64;
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        points.push(Point3::new(r * rho * phi.cos(), r * rho * phi.sin(), r * z));
    }
    PointCloud::new(points)
}

/// Normalized kernels and axis-offset queries for the standard q=1000
/// configuration used by criteria 1, 2 and 5.
fn standard_system() -> (KernelSet, QuerySet, f64) {
    let cloud = sphere_cloud(5000, 0.5);
    let (normalized, _) = normalize_to_unit_cube(&cloud, 0.95).unwrap();
    let kernels = farthest_point_sample(&normalized, 1000, 42).unwrap();
    let kernels = KernelSet::new(kernels.points).unwrap();
    let queries = select_query_points_fast(&kernels, 0.5).unwrap();
    let epsilon = match queries.strategy {
        QueryStrategy::AxisOffset { epsilon } => epsilon,
        _ => unreachable!(),
    };
    (kernels, queries, epsilon)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.9..0.9),
                    rng.random_range(-0.9..0.9),
                    rng.random_range(-0.9..0.9),
                )
            })
            .collect(),
    )
}

#[test]
fn criterion_01_full_rank_gram_at_q1000() {
    let start = Instant::now();
    let (kernels, queries, _) = standard_system();
    let v_t = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
    let report = rank_of_gram(&v_t, 1e-10);
    assert_eq!(report.max_rank, 3000);
    assert_eq!(report.rank, 3000, "rank {} of {}", report.rank, report.max_rank);
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "runtime {elapsed:?} exceeds 60 s"
    );
    println!(
        "criterion 1 (full-rank reproduction): PASS — rank {}/{} at rel_tol 1e-10 in {elapsed:?}",
        report.rank, report.max_rank
    );
}

#[test]
fn criterion_02_gram_is_scaled_identity() {
    // The constant 9eps^4 is first confirmed by dense computation at
    // small q, then the full q=1000 system is checked blockwise (exact;
    // off-block entries of V V^T are structurally zero).
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let small = KernelSet::new(random_cloud(&mut rng, 8).points).unwrap();
    let small_queries = select_query_points_fast(&small, 0.5).unwrap();
    let eps_small = match small_queries.strategy {
        QueryStrategy::AxisOffset { epsilon } => epsilon,
        _ => unreachable!(),
    };
    let dense = lisr::basis::DesignMatrix::from_dense(
        BasisKind::TriHarmonic,
        assemble_design_matrix(BasisKind::Csrbf, &small, &small_queries.points).to_dense(),
    );
    let c_small = 9.0 * eps_small.powi(4);
    let dev_dense = gram_deviation_from(&dense, c_small);
    let norm_dense = c_small * (dense.ncols() as f64).sqrt();
    assert!(
        dev_dense / norm_dense <= 1e-9,
        "dense q=8 deviation {:.3e}",
        dev_dense / norm_dense
    );

    let (kernels, queries, epsilon) = standard_system();
    let v_t = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
    let c = 9.0 * epsilon.powi(4);
    let deviation = gram_deviation_from(&v_t, c);
    let identity_norm = c * (v_t.ncols() as f64).sqrt();
    let relative = deviation / identity_norm;
    assert!(relative <= 1e-9, "relative Frobenius deviation {relative:.3e}");

    // The least-squares constant agrees with 9eps^4.
    let (c_fit, _) = gram_identity_deviation(&v_t);
    assert!(((c_fit - c) / c).abs() <= 1e-9);
    println!(
        "criterion 2 (gram identity): PASS — ||VVt - 9eps^4 I||_F / ||9eps^4 I||_F = {relative:.3e}, c = {c:.6e}"
    );
}

#[test]
fn criterion_03_one_step_convergence_on_20_shapes() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A random ellipsoid-ish analytic shape supplies the supervision.
        let shape = AnalyticShape::Sphere {
            center: Point3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            ),
            radius: rng.random_range(0.3..0.8),
        };
        let cloud = shape.sample_surface(400, seed);
        let kernels = farthest_point_sample(&cloud, 80, seed).unwrap();
        let kernels = KernelSet::new(kernels.points).unwrap();
        let queries = select_query_points_fast(&kernels, 0.5).unwrap();
        let v_t = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
        let samples = sample_gt(&shape, &queries.points);

        let star = closed_form_solve(&v_t, &samples).unwrap();
        let report = gd_fit(&v_t, &samples, StepRule::Auto, 100, 1e-9, RANK_REL_TOL).unwrap();
        assert_eq!(report.iterations, 1, "seed {seed}: {} iterations", report.iterations);
        let star_norm = star.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = report
            .alpha
            .iter()
            .zip(&star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(
            diff <= 1e-8 * (1.0 + star_norm),
            "seed {seed}: ||a1 - a*|| = {diff:.3e}"
        );
    }
    println!(
        "criterion 3 (one-step convergence): PASS — 20 seeded shapes each converged in exactly 1 iteration"
    );
}

#[test]
fn criterion_04_global_bases_are_rank_deficient() {
    let start = Instant::now();
    let shapes: [(&str, AnalyticShape); 3] = [
        (
            "sphere",
            AnalyticShape::Sphere {
                center: Point3::ORIGIN,
                radius: 0.5,
            },
        ),
        (
            "box",
            AnalyticShape::Box {
                center: Point3::ORIGIN,
                half_extents: Point3::new(0.45, 0.35, 0.55),
            },
        ),
        (
            "torus",
            AnalyticShape::Torus {
                center: Point3::ORIGIN,
                major_radius: 0.55,
                minor_radius: 0.25,
            },
        ),
    ];
    let mut summary = Vec::new();
    for (name, shape) in shapes {
        let cloud = shape.sample_surface(5000, 4);
        let (normalized, _) = normalize_to_unit_cube(&cloud, 0.95).unwrap();
        let kernels = farthest_point_sample(&normalized, 1000, 4).unwrap();
        let kernels = KernelSet::new(kernels.points).unwrap();
        let queries = lisr::query::select_query_points_uniform(1000, 4).unwrap();
        for kind in [BasisKind::TriHarmonic, BasisKind::MonoHarmonic, BasisKind::Hrbf] {
            let v_t = assemble_design_matrix(kind, &kernels, &queries.points);
            let report = rank_of_gram(&v_t, 1e-10);
            let expected_max = match kind {
                BasisKind::Hrbf => 3000,
                _ => 1000,
            };
            assert_eq!(report.max_rank, expected_max);
            assert!(
                report.rank < report.max_rank,
                "{name}/{kind}: rank {} not below max {}",
                report.rank,
                report.max_rank
            );
            summary.push(format!("{name}/{kind}: {}/{}", report.rank, report.max_rank));
        }
    }
    println!(
        "criterion 4 (rank-deficiency contrast): PASS — {} (in {:?})",
        summary.join(", "),
        start.elapsed()
    );
}

#[test]
fn criterion_05_exact_interpolation_at_queries() {
    let (kernels, queries, _) = standard_system();
    let shape = AnalyticShape::Sphere {
        center: Point3::ORIGIN,
        radius: 0.95,
    };
    let v_t = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
    let samples = sample_gt(&shape, &queries.points);
    let alpha = closed_form_solve(&v_t, &samples).unwrap();
    let predicted = v_t.apply(&alpha);
    let s = samples.values();
    let max_s = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_residual = predicted
        .iter()
        .zip(&s)
        .map(|(p, t)| (p - t).abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_residual <= 1e-8 * (1.0 + max_s),
        "max residual {max_residual:.3e} vs bound {:.3e}",
        1e-8 * (1.0 + max_s)
    );
    // Machine-level total loss relative to the supervision energy.
    let loss = sdf_loss(&alpha, &v_t, &samples).unwrap();
    let energy: f64 = s.iter().map(|v| v * v).sum();
    assert!(loss <= 1e-16 * energy, "loss {loss:.3e} vs 1e-16 * {energy:.3e}");
    println!(
        "criterion 5 (exact interpolation): PASS — max query residual {max_residual:.3e}, loss {loss:.3e}"
    );
}

#[test]
fn criterion_06_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..50 {
        let m = rng.random_range(2..=100);
        let n = rng.random_range(2..=60);
        let matrix = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let v_t = lisr::basis::DesignMatrix::from_dense(BasisKind::TriHarmonic, matrix);
        let s = SampleSet {
            samples: (0..m)
                .map(|_| SdfSample {
                    x: Point3::ORIGIN,
                    s: rng.random_range(-1.0..1.0),
                })
                .collect(),
        };
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = loss_gradient(&alpha, &v_t, &s).unwrap();
        let grad_norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        let h = 1e-6;
        for k in 0..n {
            let mut plus = alpha.clone();
            plus[k] += h;
            let mut minus = alpha.clone();
            minus[k] -= h;
            let fd =
                (sdf_loss(&plus, &v_t, &s).unwrap() - sdf_loss(&minus, &v_t, &s).unwrap())
                    / (2.0 * h);
            let err = (grad[k] - fd).abs();
            assert!(
                err <= 1e-5 * (1.0 + grad_norm),
                "case {case} component {k}: error {err:.3e} (grad norm {grad_norm:.3e})"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?} exceeds 10 s");
    println!(
        "criterion 6 (gradient oracle): PASS — 50 random systems up to 100x60 in {elapsed:?}"
    );
}

#[test]
fn criterion_07_locality_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud = sphere_cloud(2000, 0.95);
    let kernels = farthest_point_sample(&cloud, 200, 7).unwrap();
    let kernels = KernelSet::new(kernels.points).unwrap();
    let n = BasisKind::Csrbf.coefficient_count(kernels.len());
    let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target_block = 17usize;
    // Exactly 10k test points outside the perturbed cell.
    let mut test_points = Vec::with_capacity(10_000);
    while test_points.len() < 10_000 {
        let x = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if kernels.nearest(x) != target_block {
            test_points.push(x);
        }
    }

    // CSRBF: bit-identical outside the perturbed cell.
    let csrbf = ImplicitModel::new(BasisKind::Csrbf, kernels.clone(), alpha.clone(), None).unwrap();
    let perturbed = perturb_block(&csrbf, target_block, 1e-2, 7).unwrap();
    for &x in &test_points {
        assert_eq!(
            eval_sdf(&csrbf, x).to_bits(),
            eval_sdf(&perturbed, x).to_bits(),
            "CSRBF field changed outside the perturbed cell at {x:?}"
        );
    }

    // HRBF: the same block perturbation touches (almost) every point.
    let hrbf = ImplicitModel::new(BasisKind::Hrbf, kernels.clone(), alpha, None).unwrap();
    let perturbed = perturb_block(&hrbf, target_block, 1e-2, 7).unwrap();
    let changed = test_points
        .iter()
        .filter(|&&x| eval_sdf(&hrbf, x).to_bits() != eval_sdf(&perturbed, x).to_bits())
        .count();
    assert!(
        changed as f64 >= 0.99 * test_points.len() as f64,
        "HRBF perturbation changed only {changed} of {} points",
        test_points.len()
    );
    println!(
        "criterion 7 (locality): PASS — CSRBF bit-identical at 10000 points outside the cell; HRBF changed {changed}/10000"
    );
}

#[test]
fn criterion_08_end_to_end_sphere_pipeline() {
    let start = Instant::now();
    // 5000 samples of the radius-0.5 sphere; the exact-bbox poles make
    // the normalization transform exact, so the normalized ground truth
    // is the radius-0.95 sphere.
    let cloud = sphere_cloud(5000, 0.5);
    let (normalized, _) = normalize_to_unit_cube(&cloud, 0.95).unwrap();
    let kernels = farthest_point_sample(&normalized, 1000, 8).unwrap();
    let kernels = KernelSet::new(kernels.points).unwrap();
    let queries = select_query_points_fast(&kernels, 0.5).unwrap();
    let epsilon = match queries.strategy {
        QueryStrategy::AxisOffset { epsilon } => epsilon,
        _ => unreachable!(),
    };
    let gt = AnalyticShape::Sphere {
        center: Point3::ORIGIN,
        radius: 0.95,
    };
    let v_t = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
    let samples = sample_gt(&gt, &queries.points);
    let fit = closed_form_fit(&v_t, &samples, 1e-10).unwrap();
    assert!(fit.gram.is_full_rank());
    let model =
        ImplicitModel::new(BasisKind::Csrbf, kernels, fit.alpha.clone(), Some(epsilon)).unwrap();

    let extraction = extract_isosurface(&model, &GridSpec::with_resolution(128)).unwrap();
    assert!(!extraction.mesh.triangles.is_empty());

    // 600k samples per surface: the Chamfer sampling-noise floor for two
    // samplings of one identical surface is ~0.0064 here, safely inside
    // the 0.01 budget (at the 100k default the floor alone is ~0.0158).
    let sample_count = 600_000;
    let pred = sample_mesh_surface(&extraction.mesh, sample_count, 88).unwrap();
    let gt_points = gt.sample_surface(sample_count, 89);
    let report =
        MetricReport::compute(&pred, &gt_points, 0.02, ChamferConvention::Sum).unwrap();
    assert!(
        report.chamfer_l1 <= 0.01,
        "chamfer-L1 {:.4e} exceeds 0.01",
        report.chamfer_l1
    );
    assert!(
        report.f_score >= 0.95,
        "f-score {:.4} below 0.95",
        report.f_score
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "runtime {elapsed:?} exceeds 2 min");
    println!(
        "criterion 8 (end-to-end sphere): PASS — chamfer-L1 {:.4e}, f-score {:.4} in {elapsed:?}",
        report.chamfer_l1, report.f_score
    );
}

#[test]
fn criterion_09_metric_unit_suite() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = random_cloud(&mut rng, 60);
        assert_eq!(chamfer_l1(&cloud, &cloud).unwrap(), 0.0);
        let self_report = f_score(&cloud, &cloud, 0.02).unwrap();
        assert_eq!(self_report.f_score, 1.0);
    }
    // Brute-force equality on small clouds.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let na = rng.random_range(1..=100);
        let nb = rng.random_range(1..=100);
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let fast = chamfer_l1(&a, &b).unwrap();
        let brute = {
            let dir = |from: &PointCloud, to: &PointCloud| {
                from.points
                    .iter()
                    .map(|&x| {
                        to.points
                            .iter()
                            .map(|&p| (x - p).norm_l1())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum::<f64>()
                    / from.len() as f64
            };
            dir(&a, &b) + dir(&b, &a)
        };
        assert_eq!(fast, brute, "accelerated chamfer deviates from brute force");
    }
    println!(
        "criterion 9 (metric unit suite): PASS — self-metrics exact on 10 clouds, brute-force parity on clouds up to 100 points"
    );
}

#[test]
fn criterion_10_note_on_learned_network_numbers() {
    // The published cross-method table comes from trained networks that
    // are out of scope here; criteria 1-9 are the property-based
    // substitute, with criterion 8 as the quantitative end-to-end proxy.
    println!(
        "criterion 10 (learned-network numbers): NOT APPLICABLE — covered by criteria 1-9; see criterion 8 for the quantitative proxy"
    );
}

/// The solver's spectrum helper agrees with a dense SVD on the standard
/// system (supporting check for criteria 1 and 4's shared machinery).
#[test]
fn supporting_block_spectrum_matches_dense_svd_at_small_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let kernels = KernelSet::new(random_cloud(&mut rng, 6).points).unwrap();
    let queries = select_query_points_fast(&kernels, 0.5).unwrap();
    let sparse = assemble_design_matrix(BasisKind::Csrbf, &kernels, &queries.points);
    let dense = lisr::basis::DesignMatrix::from_dense(BasisKind::TriHarmonic, sparse.to_dense());
    let a = singular_values(&sparse);
    let b = singular_values(&dense);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + y));
    }
}
