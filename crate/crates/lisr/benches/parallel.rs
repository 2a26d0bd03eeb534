//! Rayon vs sequential comparison for the three data-parallel hot paths:
//! design-matrix assembly, batch field evaluation and the Chamfer
//! nearest-neighbor sweep.
//!
//! ```text
//! cargo bench -p lisr
//! ```

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lisr::basis::{
    assemble_design_matrix, assemble_design_matrix_seq, eval_sdf_batch, eval_sdf_batch_seq,
    BasisKind, ImplicitModel,
};
use lisr::geom::{farthest_point_sample, KernelSet, Point3, PointCloud};
use lisr::metrics::{chamfer_l1, chamfer_l1_seq};
use lisr::query::select_query_points_fast;
use lisr::sdf::AnalyticShape;

fn sphere() -> AnalyticShape {
    AnalyticShape::Sphere {
        center: Point3::ORIGIN,
        radius: 0.95,
    }
}

fn kernels(q: usize) -> KernelSet {
    let cloud = sphere().sample_surface(4 * q, 0);
    let sampled = farthest_point_sample(&cloud, q, 0).unwrap();
    KernelSet::new(sampled.points).unwrap()
}

fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

fn bench_assembly(c: &mut Criterion) {
    let ks = kernels(500);
    let queries = random_points(6000, 1);
    let mut group = c.benchmark_group("assemble_design_matrix");
    for kind in [BasisKind::Csrbf, BasisKind::Hrbf] {
        group.bench_function(format!("{kind}/rayon"), |b| {
            b.iter(|| assemble_design_matrix(kind, black_box(&ks), black_box(&queries)))
        });
        group.bench_function(format!("{kind}/sequential"), |b| {
            b.iter(|| assemble_design_matrix_seq(kind, black_box(&ks), black_box(&queries)))
        });
    }
    group.finish();
}

fn bench_field_evaluation(c: &mut Criterion) {
    use rand::{Rng, SeedableRng};
    let ks = kernels(500);
    let queries = select_query_points_fast(&ks, 0.5).unwrap();
    let v_t = assemble_design_matrix(BasisKind::Csrbf, &ks, &queries.points);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let alpha: Vec<f64> = (0..v_t.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = ImplicitModel::new(BasisKind::Csrbf, ks, alpha, None).unwrap();
    let points = random_points(50_000, 3);

    let mut group = c.benchmark_group("eval_sdf_batch");
    group.bench_function("rayon", |b| {
        b.iter(|| eval_sdf_batch(black_box(&model), black_box(&points)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| eval_sdf_batch_seq(black_box(&model), black_box(&points)))
    });
    group.finish();
}

fn bench_chamfer(c: &mut Criterion) {
    let a = PointCloud::new(random_points(30_000, 4));
    let b_cloud = PointCloud::new(random_points(30_000, 5));
    let mut group = c.benchmark_group("chamfer_l1");
    group.sample_size(20);
    group.bench_function("rayon", |b| {
        b.iter(|| chamfer_l1(black_box(&a), black_box(&b_cloud)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| chamfer_l1_seq(black_box(&a), black_box(&b_cloud)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_assembly, bench_field_evaluation, bench_chamfer);
criterion_main!(benches);
