//! Pipeline stages shared by the subcommands.
//!
//! `pipeline` is literally `fit` then `extract` then `eval` invoked on the
//! files the previous stage wrote, with per-stage seeds derived by name
//! from the one top-level seed, so the compositions produce byte-identical
//! artifacts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use lisr::basis::{
    assemble_design_matrix, read_model, write_model, BasisKind, ImplicitModel,
};
use lisr::geom::{
    farthest_point_sample, load_mesh, load_point_cloud, normalize_to_unit_cube, write_obj,
    KernelSet, PointCloud, TriangleMesh,
};
use lisr::metrics::{sample_mesh_surface, ChamferConvention, MetricReport};
use lisr::query::{
    select_query_points_fast, select_query_points_uniform, write_query_csv, QuerySet,
    QueryStrategy,
};
use lisr::sdf::{
    sample_gt, write_sample_csv, AnalyticShape, MeshSdf, SampleSet, SignMode, SignedDistance,
};
use lisr::solver::{
    closed_form_fit, gd_fit, perturb_block, perturb_coefficients, rank_of_gram, RankReport,
    StepRule,
};
use lisr::surfacing::{extract_isosurface, Extraction, GridSpec};
use lisr::{Aabb, NormalizeTransform, Point3};

use crate::config::{stage_seed, QuerySpec, SolverSpec, StepSpec};

/// Ground-truth oracle specification, in normalized-domain coordinates.
pub enum OracleSpec {
    Shape(AnalyticShape),
    /// Mesh path plus the transform mapping it into the normalized domain
    /// (the same transform applied to the input cloud).
    Mesh(PathBuf),
}

enum BuiltOracle {
    Shape(AnalyticShape),
    Mesh(MeshSdf),
}

impl BuiltOracle {
    fn as_signed_distance(&self) -> &dyn SignedDistance {
        match self {
            BuiltOracle::Shape(s) => s,
            BuiltOracle::Mesh(m) => m,
        }
    }

    /// The mesh actually used as supervision, already in the normalized
    /// domain.
    fn normalized_mesh(&self) -> Option<&TriangleMesh> {
        match self {
            BuiltOracle::Shape(_) => None,
            BuiltOracle::Mesh(m) => Some(m.mesh()),
        }
    }
}

fn build_oracle(spec: &OracleSpec, transform: Option<&NormalizeTransform>) -> Result<BuiltOracle> {
    match spec {
        OracleSpec::Shape(shape) => {
            shape.validate()?;
            Ok(BuiltOracle::Shape(*shape))
        }
        OracleSpec::Mesh(path) => {
            let (mesh, dropped) = load_mesh(path)?;
            if dropped > 0 {
                eprintln!(
                    "warning: dropped {dropped} degenerate faces from {}",
                    path.display()
                );
            }
            let mesh = match transform {
                Some(t) => t.apply_mesh(&mesh),
                None => mesh,
            };
            if !mesh.is_closed_manifold() {
                eprintln!(
                    "warning: {} is not watertight; supervision uses unsigned distances",
                    path.display()
                );
            }
            Ok(BuiltOracle::Mesh(MeshSdf::new(mesh, SignMode::UnsignedFallback)?))
        }
    }
}

/// Loads a cloud, maps it into the optimization domain and picks kernel
/// points: the cloud itself when `|cloud| <= q`, else a farthest-point
/// subsample.
pub fn prepare_kernels(
    cloud_path: &Path,
    q: usize,
    margin: f64,
    seed: u64,
) -> Result<(KernelSet, NormalizeTransform)> {
    if q == 0 {
        bail!("kernel count q must be at least 1");
    }
    let cloud = load_point_cloud(cloud_path)?;
    let (normalized, transform) = normalize_to_unit_cube(&cloud, margin)?;
    let kernel_cloud = if normalized.len() <= q {
        normalized
    } else {
        farthest_point_sample(&normalized, q, stage_seed(seed, "fps"))?
    };
    let kernels = KernelSet::new(kernel_cloud.points)?;
    Ok((kernels, transform))
}

pub fn build_queries(
    spec: QuerySpec,
    kernels: &KernelSet,
    safety: f64,
    seed: u64,
) -> Result<QuerySet> {
    Ok(match spec {
        QuerySpec::Algorithm2 => select_query_points_fast(kernels, safety)?,
        QuerySpec::Uniform { count } => {
            select_query_points_uniform(count, stage_seed(seed, "queries"))?
        }
    })
}

pub struct SampleSdfParams {
    pub oracle: OracleSpec,
    pub queries: QuerySpec,
    pub kernels_from: Option<PathBuf>,
    pub q: usize,
    pub safety: f64,
    pub margin: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_sample_sdf(p: &SampleSdfParams) -> Result<SampleSet> {
    let (queries, transform) = match (p.queries, &p.kernels_from) {
        (QuerySpec::Algorithm2, Some(cloud)) => {
            let (kernels, transform) = prepare_kernels(cloud, p.q, p.margin, p.seed)?;
            (
                build_queries(QuerySpec::Algorithm2, &kernels, p.safety, p.seed)?,
                Some(transform),
            )
        }
        (QuerySpec::Algorithm2, None) => {
            bail!("--queries algorithm2 requires --kernels-from CLOUD")
        }
        (QuerySpec::Uniform { count }, kernels_from) => {
            // Uniform queries need no kernels; a mesh oracle without a
            // kernel cloud is normalized by its own bounding box.
            let transform = match (kernels_from, &p.oracle) {
                (Some(cloud), _) => {
                    let (_, transform) = prepare_kernels(cloud, p.q, p.margin, p.seed)?;
                    Some(transform)
                }
                (None, OracleSpec::Mesh(path)) => {
                    let (mesh, _) = load_mesh(path)?;
                    let cloud = PointCloud::new(mesh.vertices);
                    let (_, transform) = normalize_to_unit_cube(&cloud, p.margin)?;
                    Some(transform)
                }
                (None, OracleSpec::Shape(_)) => None,
            };
            (
                select_query_points_uniform(count, stage_seed(p.seed, "queries"))?,
                transform,
            )
        }
    };

    let oracle = build_oracle(&p.oracle, transform.as_ref())?;
    let samples = sample_gt(oracle.as_signed_distance(), &queries.points);

    std::fs::create_dir_all(&p.out)?;
    write_sample_csv(&samples, p.out.join("samples.csv"))?;
    let mut query_csv = Vec::new();
    write_query_csv(&queries, &mut query_csv)?;
    std::fs::write(p.out.join("queries.csv"), query_csv)?;
    println!(
        "wrote {} samples to {}",
        samples.len(),
        p.out.join("samples.csv").display()
    );
    Ok(samples)
}

pub struct FitParams {
    pub cloud: PathBuf,
    pub basis: BasisKind,
    pub q: usize,
    pub queries: QuerySpec,
    pub safety: f64,
    pub oracle: OracleSpec,
    pub solver: SolverSpec,
    pub step: StepSpec,
    pub iters: usize,
    pub tol: f64,
    pub rank_tol: f64,
    pub margin: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub struct FitOutputs {
    pub model_path: PathBuf,
}

pub fn run_fit(p: &FitParams) -> Result<FitOutputs> {
    let (kernels, transform) = prepare_kernels(&p.cloud, p.q, p.margin, p.seed)?;
    let queries = build_queries(p.queries, &kernels, p.safety, p.seed)?;
    let oracle = build_oracle(&p.oracle, Some(&transform))?;
    let samples = sample_gt(oracle.as_signed_distance(), &queries.points);

    let v_t = assemble_design_matrix(p.basis, &kernels, &queries.points);
    let mut report = match p.solver {
        SolverSpec::Closed => closed_form_fit(&v_t, &samples, p.rank_tol)?,
        SolverSpec::Gd => {
            let step = match p.step {
                StepSpec::Auto => StepRule::Auto,
                StepSpec::Fixed(v) => StepRule::Fixed(v),
            };
            gd_fit(&v_t, &samples, step, p.iters, p.tol, p.rank_tol)?
        }
    };
    report.gram.strategy = queries.strategy.label().to_string();

    if !report.gram.is_full_rank() {
        let is_axis_csrbf = p.basis == BasisKind::Csrbf
            && matches!(queries.strategy, QueryStrategy::AxisOffset { .. });
        if is_axis_csrbf {
            bail!(
                "CSRBF with axis-offset queries must be full rank, got {} of {}; \
                 this indicates corrupted kernels or queries",
                report.gram.rank,
                report.gram.max_rank
            );
        }
        eprintln!(
            "warning: rank-deficient system ({} of {}); gradient descent cannot reach \
             the least-squares optimum from arbitrary starts",
            report.gram.rank, report.gram.max_rank
        );
    }

    let epsilon = match queries.strategy {
        QueryStrategy::AxisOffset { epsilon } => Some(epsilon),
        QueryStrategy::Uniform { .. } => None,
    };
    let model = ImplicitModel::new(p.basis, kernels, report.alpha.clone(), epsilon)?;

    std::fs::create_dir_all(&p.out)?;
    let model_path = p.out.join("model.lisr");
    write_model(&model, &model_path)?;
    let csv = format!("{}\n{}\n", RankReport::CSV_HEADER, report.csv_row());
    std::fs::write(p.out.join("fit_report.csv"), csv)?;
    // The extraction lives in the normalized domain; persist the
    // supervision mesh in the same frame so downstream `eval` compares
    // like with like.
    if let Some(mesh) = oracle.normalized_mesh() {
        write_obj(mesh, p.out.join("gt_normalized.obj"))?;
    }

    print!("{report}");
    println!("model written to {}", model_path.display());
    Ok(FitOutputs { model_path })
}

pub struct RankReportParams {
    pub cloud: PathBuf,
    pub q: usize,
    pub uniform_count: usize,
    pub safety: f64,
    pub rank_tol: f64,
    pub margin: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_rank_report(p: &RankReportParams) -> Result<Vec<RankReport>> {
    let (kernels, _) = prepare_kernels(&p.cloud, p.q, p.margin, p.seed)?;
    let mut reports = Vec::new();
    for kind in BasisKind::ALL {
        let spec = match kind {
            BasisKind::Csrbf => QuerySpec::Algorithm2,
            _ => QuerySpec::Uniform {
                count: p.uniform_count,
            },
        };
        let queries = build_queries(spec, &kernels, p.safety, p.seed)?;
        let v_t = assemble_design_matrix(kind, &kernels, &queries.points);
        let report = rank_of_gram(&v_t, p.rank_tol).with_strategy(queries.strategy.label());
        println!("{report}");
        reports.push(report);
    }
    std::fs::create_dir_all(&p.out)?;
    let mut csv = String::from(RankReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    std::fs::write(p.out.join("rank_report.csv"), csv)?;
    Ok(reports)
}

pub struct ExtractParams {
    pub model: PathBuf,
    pub resolution: usize,
    pub iso: f64,
    pub domain: f64,
    pub out: PathBuf,
}

pub fn run_extract(p: &ExtractParams) -> Result<PathBuf> {
    let model = read_model(&p.model)?;
    let grid = GridSpec {
        resolution: p.resolution,
        bounds: Aabb::new(
            Point3::new(-p.domain, -p.domain, -p.domain),
            Point3::new(p.domain, p.domain, p.domain),
        ),
        iso: p.iso,
    };
    let Extraction {
        mesh,
        cross_cell_triangles,
    } = extract_isosurface(&model, &grid)?;
    if mesh.triangles.is_empty() {
        eprintln!("warning: no iso-level crossing found; mesh is empty");
    }
    std::fs::create_dir_all(&p.out)?;
    let mesh_path = p.out.join("mesh.obj");
    write_obj(&mesh, &mesh_path)?;
    println!(
        "extracted {} vertices, {} triangles ({} crossing Voronoi cell boundaries) to {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        cross_cell_triangles,
        mesh_path.display()
    );
    Ok(mesh_path)
}

pub struct EvalParams {
    pub pred: PathBuf,
    pub gt: OracleSpec,
    pub tau: f64,
    pub samples: usize,
    pub cd_mean: bool,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_eval(p: &EvalParams) -> Result<MetricReport> {
    // One shared sampling seed: evaluating a mesh against itself then
    // compares identical point sets and reports an exact zero.
    let sample_seed = stage_seed(p.seed, "metrics");
    let (pred_mesh, _) = load_mesh(&p.pred)?;
    let pred_cloud = sample_mesh_surface(&pred_mesh, p.samples, sample_seed)?;
    let gt_cloud = match &p.gt {
        OracleSpec::Shape(shape) => {
            shape.validate()?;
            shape.sample_surface(p.samples, sample_seed)
        }
        OracleSpec::Mesh(path) => {
            let (mesh, _) = load_mesh(path)?;
            sample_mesh_surface(&mesh, p.samples, sample_seed)?
        }
    };
    let convention = if p.cd_mean {
        ChamferConvention::HalvedMean
    } else {
        ChamferConvention::Sum
    };
    let report = MetricReport::compute(&pred_cloud, &gt_cloud, p.tau, convention)?;

    std::fs::create_dir_all(&p.out)?;
    let csv = format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row());
    std::fs::write(p.out.join("metrics.csv"), csv)?;
    println!("{report}");
    Ok(report)
}

pub struct PerturbParams {
    pub model: PathBuf,
    pub etas: Vec<f64>,
    pub block: Option<usize>,
    pub resolution: usize,
    pub domain: f64,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_perturb(p: &PerturbParams) -> Result<Vec<(f64, f64)>> {
    let model = read_model(&p.model)?;
    let grid = GridSpec {
        resolution: p.resolution,
        bounds: Aabb::new(
            Point3::new(-p.domain, -p.domain, -p.domain),
            Point3::new(p.domain, p.domain, p.domain),
        ),
        iso: 0.0,
    };
    std::fs::create_dir_all(&p.out)?;

    let baseline = extract_isosurface(&model, &grid)?;
    if baseline.mesh.triangles.is_empty() {
        bail!("baseline model extracts an empty mesh; nothing to compare against");
    }
    write_obj(&baseline.mesh, p.out.join("mesh_baseline.obj"))?;
    let sample_seed = stage_seed(p.seed, "metrics-perturb");
    let baseline_cloud = sample_mesh_surface(&baseline.mesh, p.samples, sample_seed)?;

    let mut table = Vec::new();
    for (i, &eta) in p.etas.iter().enumerate() {
        let perturb_seed = stage_seed(p.seed, &format!("perturb-{i}"));
        let perturbed = match p.block {
            Some(block) => perturb_block(&model, block, eta, perturb_seed)?,
            None => perturb_coefficients(&model, eta, perturb_seed),
        };
        write_model(&perturbed, p.out.join(format!("model_eta_{eta:e}.lisr")))?;
        let extraction = extract_isosurface(&perturbed, &grid)?;
        write_obj(&extraction.mesh, p.out.join(format!("mesh_eta_{eta:e}.obj")))?;
        let cd = if extraction.mesh.triangles.is_empty() {
            f64::INFINITY
        } else {
            let cloud = sample_mesh_surface(&extraction.mesh, p.samples, sample_seed)?;
            lisr::metrics::chamfer_l1(&cloud, &baseline_cloud)?
        };
        println!("eta {eta:e}: chamfer-L1 vs baseline {cd:.6e}");
        table.push((eta, cd));
    }

    let mut csv = String::from("eta,chamfer_l1\n");
    for (eta, cd) in &table {
        csv.push_str(&format!("{eta:.16e},{cd:.16e}\n"));
    }
    std::fs::write(p.out.join("perturb.csv"), csv)?;
    Ok(table)
}

/// `fit` then `extract` then `eval`, each stage reading exactly the files
/// the previous stage wrote.
pub struct PipelineParams {
    pub fit: FitParams,
    pub resolution: usize,
    pub iso: f64,
    pub domain: f64,
    pub tau: f64,
    pub samples: usize,
    pub cd_mean: bool,
}

pub fn run_pipeline(p: &PipelineParams) -> Result<MetricReport> {
    let fit_out = run_fit(&p.fit)?;
    let mesh_path = run_extract(&ExtractParams {
        model: fit_out.model_path,
        resolution: p.resolution,
        iso: p.iso,
        domain: p.domain,
        out: p.fit.out.clone(),
    })?;
    // A mesh oracle is evaluated against its normalized copy written by
    // the fit stage: both surfaces live in the normalized domain.
    let gt = match &p.fit.oracle {
        OracleSpec::Shape(shape) => OracleSpec::Shape(*shape),
        OracleSpec::Mesh(_) => OracleSpec::Mesh(p.fit.out.join("gt_normalized.obj")),
    };
    run_eval(&EvalParams {
        pred: mesh_path,
        gt,
        tau: p.tau,
        samples: p.samples,
        cd_mean: p.cd_mean,
        seed: p.fit.seed,
        out: p.fit.out.clone(),
    })
}
