//! Command-line front end for the fitting toolkit.
//!
//! Subcommands: `sample-sdf`, `fit`, `rank-report`, `extract`, `eval`,
//! `perturb`, `pipeline`. Every option can also come from a config file
//! (`--config`, `key = value` lines mirroring the long flag names); flags
//! override the file, and each run writes the effective configuration to
//! `<out>/config.resolved`.

mod config;
mod stages;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::{parse_etas, parse_shape, QuerySpec, Resolver, SolverSpec, StepSpec};
use lisr::basis::BasisKind;
use stages::OracleSpec;

#[derive(Parser)]
#[command(
    name = "lisr",
    version,
    about = "Fit signed distance fields with compactly supported radial basis functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed; per-stage seeds derive from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<(Resolver, PathBuf, u64)> {
        let mut r = Resolver::new(self.config.as_deref())?;
        let out = r
            .optional_path("out", self.out.clone())?
            .unwrap_or_else(|| PathBuf::from("."));
        let seed = r.value("seed", self.seed, 0u64)?;
        Ok((r, out, seed))
    }
}

#[derive(Args)]
struct OracleArgs {
    /// Analytic ground truth in normalized coordinates
    /// (sphere:R | box:H | box:HX,HY,HZ | torus:R,r).
    #[arg(long, value_name = "SPEC")]
    shape: Option<String>,
    /// Ground-truth mesh (.obj or ascii .ply).
    #[arg(long, value_name = "PATH")]
    mesh: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground-truth SDF samples at selected query points as CSV.
    SampleSdf {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Query strategy: algorithm2 | uniform:COUNT.
        #[arg(long, value_name = "SPEC")]
        queries: Option<QuerySpec>,
        /// Point cloud supplying the kernel points (required for
        /// algorithm2 queries).
        #[arg(long, value_name = "PATH")]
        kernels_from: Option<PathBuf>,
        /// Kernel count; clouds larger than this are subsampled by
        /// farthest-point iteration.
        #[arg(long)]
        q: Option<usize>,
        /// Fraction of the minimum cell inradius used as the axis offset.
        #[arg(long)]
        safety: Option<f64>,
        /// Largest half-extent after normalization.
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Fit coefficients against ground-truth SDF supervision.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Input point cloud (.xyz, .obj or .ply).
        #[arg(long, value_name = "PATH")]
        cloud: Option<PathBuf>,
        /// Basis family: tri-harmonic | mono-harmonic | hrbf | csrbf.
        #[arg(long, value_name = "KIND")]
        basis: Option<String>,
        #[arg(long)]
        q: Option<usize>,
        /// Query strategy: algorithm2 | uniform:COUNT.
        #[arg(long, value_name = "SPEC")]
        queries: Option<QuerySpec>,
        #[arg(long)]
        safety: Option<f64>,
        /// Analytic ground truth (see sample-sdf --shape).
        #[arg(long, value_name = "SPEC")]
        gt_shape: Option<String>,
        /// Ground-truth mesh; it is mapped into the normalized domain
        /// with the input cloud's transform.
        #[arg(long, value_name = "PATH")]
        gt_mesh: Option<PathBuf>,
        /// Solver: closed | gd.
        #[arg(long)]
        solver: Option<SolverSpec>,
        /// Gradient-descent step: auto | NUMBER.
        #[arg(long)]
        step: Option<StepSpec>,
        /// Gradient-descent iteration cap.
        #[arg(long)]
        iters: Option<usize>,
        /// Gradient-norm stopping tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Relative singular-value threshold for rank decisions.
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Rank of the Gram matrix for every basis kind on shared kernels.
    RankReport {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        cloud: Option<PathBuf>,
        #[arg(long)]
        q: Option<usize>,
        /// Uniform query count used for the globally supported bases.
        #[arg(long)]
        uniform_count: Option<usize>,
        #[arg(long)]
        safety: Option<f64>,
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Extract the zero level set of a fitted model as an OBJ mesh.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        /// Fitted model (.lisr).
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Grid cells per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Iso value to surface.
        #[arg(long)]
        iso: Option<f64>,
        /// Half-width of the sampling cube.
        #[arg(long)]
        domain: Option<f64>,
    },
    /// Chamfer-L1 and F-score of a predicted mesh against ground truth.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Predicted mesh (.obj or ascii .ply).
        #[arg(long, value_name = "PATH")]
        pred: Option<PathBuf>,
        /// Ground-truth mesh, in the same coordinates as the prediction.
        #[arg(long, value_name = "PATH")]
        gt_mesh: Option<PathBuf>,
        /// Analytic ground truth (see sample-sdf --shape).
        #[arg(long, value_name = "SPEC")]
        gt_shape: Option<String>,
        /// F-score distance threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Surface samples per mesh.
        #[arg(long)]
        samples: Option<usize>,
        /// Report half of the two-term Chamfer sum.
        #[arg(long)]
        cd_mean: bool,
    },
    /// Perturb model coefficients and report surface damage per
    /// magnitude.
    Perturb {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Comma-separated noise magnitudes.
        #[arg(long, value_name = "LIST")]
        etas: Option<String>,
        /// Perturb only this kernel's coefficient block.
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        domain: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// fit, extract and eval in one run over a single output directory.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        cloud: Option<PathBuf>,
        #[arg(long, value_name = "KIND")]
        basis: Option<String>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, value_name = "SPEC")]
        queries: Option<QuerySpec>,
        #[arg(long)]
        safety: Option<f64>,
        #[arg(long, value_name = "SPEC")]
        gt_shape: Option<String>,
        #[arg(long, value_name = "PATH")]
        gt_mesh: Option<PathBuf>,
        #[arg(long)]
        solver: Option<SolverSpec>,
        #[arg(long)]
        step: Option<StepSpec>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        iso: Option<f64>,
        #[arg(long)]
        domain: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        cd_mean: bool,
    },
}

fn resolve_oracle(
    r: &mut Resolver,
    shape_key: &str,
    mesh_key: &str,
    shape: Option<String>,
    mesh: Option<PathBuf>,
) -> Result<OracleSpec> {
    let shape = r.optional(shape_key, shape)?;
    let mesh = r.optional_path(mesh_key, mesh)?;
    match (shape, mesh) {
        (Some(spec), None) => Ok(OracleSpec::Shape(parse_shape(&spec)?)),
        (None, Some(path)) => Ok(OracleSpec::Mesh(path)),
        (Some(_), Some(_)) => bail!("--{shape_key} and --{mesh_key} are mutually exclusive"),
        (None, None) => bail!("a ground-truth oracle is required (--{shape_key} or --{mesh_key})"),
    }
}

fn parse_basis(r: &mut Resolver, flag: Option<String>) -> Result<BasisKind> {
    let raw = r.value("basis", flag, "csrbf".to_string())?;
    Ok(raw.parse::<BasisKind>()?)
}

#[allow(clippy::too_many_arguments)]
fn resolve_fit_params(
    common: &CommonArgs,
    cloud: Option<PathBuf>,
    basis: Option<String>,
    q: Option<usize>,
    queries: Option<QuerySpec>,
    safety: Option<f64>,
    gt_shape: Option<String>,
    gt_mesh: Option<PathBuf>,
    solver: Option<SolverSpec>,
    step: Option<StepSpec>,
    iters: Option<usize>,
    tol: Option<f64>,
    rank_tol: Option<f64>,
    margin: Option<f64>,
) -> Result<(Resolver, stages::FitParams)> {
    let (mut r, out, seed) = common.resolve()?;
    let params = stages::FitParams {
        cloud: r.required_path("cloud", cloud)?,
        basis: parse_basis(&mut r, basis)?,
        q: r.value("q", q, 1000)?,
        queries: r.value("queries", queries, QuerySpec::Algorithm2)?,
        safety: r.value("safety", safety, 0.5)?,
        oracle: resolve_oracle(&mut r, "gt-shape", "gt-mesh", gt_shape, gt_mesh)?,
        solver: r.value("solver", solver, SolverSpec::Closed)?,
        step: r.value("step", step, StepSpec::Auto)?,
        iters: r.value("iters", iters, 1000)?,
        tol: r.value("tol", tol, 1e-9)?,
        rank_tol: r.value("rank-tol", rank_tol, 1e-10)?,
        margin: r.value("margin", margin, 0.95)?,
        seed,
        out,
    };
    Ok((r, params))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SampleSdf {
            common,
            oracle,
            queries,
            kernels_from,
            q,
            safety,
            margin,
        } => {
            let (mut r, out, seed) = common.resolve()?;
            let params = stages::SampleSdfParams {
                oracle: resolve_oracle(&mut r, "shape", "mesh", oracle.shape, oracle.mesh)?,
                queries: r
                    .optional("queries", queries)?
                    .ok_or_else(|| anyhow::anyhow!("--queries is required"))?,
                kernels_from: r.optional_path("kernels-from", kernels_from)?,
                q: r.value("q", q, 1000)?,
                safety: r.value("safety", safety, 0.5)?,
                margin: r.value("margin", margin, 0.95)?,
                seed,
                out,
            };
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_sample_sdf(&params)?;
        }
        Command::Fit {
            common,
            cloud,
            basis,
            q,
            queries,
            safety,
            gt_shape,
            gt_mesh,
            solver,
            step,
            iters,
            tol,
            rank_tol,
            margin,
        } => {
            let (r, params) = resolve_fit_params(
                &common, cloud, basis, q, queries, safety, gt_shape, gt_mesh, solver, step,
                iters, tol, rank_tol, margin,
            )?;
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_fit(&params)?;
        }
        Command::RankReport {
            common,
            cloud,
            q,
            uniform_count,
            safety,
            rank_tol,
            margin,
        } => {
            let (mut r, out, seed) = common.resolve()?;
            let params = stages::RankReportParams {
                cloud: r.required_path("cloud", cloud)?,
                q: r.value("q", q, 1000)?,
                uniform_count: r.value("uniform-count", uniform_count, 1000)?,
                safety: r.value("safety", safety, 0.5)?,
                rank_tol: r.value("rank-tol", rank_tol, 1e-10)?,
                margin: r.value("margin", margin, 0.95)?,
                seed,
                out,
            };
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_rank_report(&params)?;
        }
        Command::Extract {
            common,
            model,
            resolution,
            iso,
            domain,
        } => {
            let (mut r, out, _) = common.resolve()?;
            let params = stages::ExtractParams {
                model: r.required_path("model", model)?,
                resolution: r.value("resolution", resolution, 128)?,
                iso: r.value("iso", iso, 0.0)?,
                domain: r.value("domain", domain, 1.0)?,
                out,
            };
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_extract(&params)?;
        }
        Command::Eval {
            common,
            pred,
            gt_mesh,
            gt_shape,
            tau,
            samples,
            cd_mean,
        } => {
            let (mut r, out, seed) = common.resolve()?;
            let params = stages::EvalParams {
                pred: r.required_path("pred", pred)?,
                gt: resolve_oracle(&mut r, "gt-shape", "gt-mesh", gt_shape, gt_mesh)?,
                tau: r.value("tau", tau, lisr::metrics::DEFAULT_TAU)?,
                samples: r.value("samples", samples, lisr::metrics::DEFAULT_MESH_SAMPLES)?,
                cd_mean: r.switch("cd-mean", cd_mean)?,
                seed,
                out,
            };
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_eval(&params)?;
        }
        Command::Perturb {
            common,
            model,
            etas,
            block,
            resolution,
            domain,
            samples,
        } => {
            let (mut r, out, seed) = common.resolve()?;
            let etas_spec = r.value("etas", etas, "1e-6,1e-5,1e-4,1e-2".to_string())?;
            let params = stages::PerturbParams {
                model: r.required_path("model", model)?,
                etas: parse_etas(&etas_spec)?,
                block: r.optional("block", block)?,
                resolution: r.value("resolution", resolution, 128)?,
                domain: r.value("domain", domain, 1.0)?,
                samples: r.value("samples", samples, lisr::metrics::DEFAULT_MESH_SAMPLES)?,
                seed,
                out,
            };
            std::fs::create_dir_all(&params.out)?;
            r.write_resolved(&params.out)?;
            stages::run_perturb(&params)?;
        }
        Command::Pipeline {
            common,
            cloud,
            basis,
            q,
            queries,
            safety,
            gt_shape,
            gt_mesh,
            solver,
            step,
            iters,
            tol,
            rank_tol,
            margin,
            resolution,
            iso,
            domain,
            tau,
            samples,
            cd_mean,
        } => {
            let (mut r, fit_params) = resolve_fit_params(
                &common, cloud, basis, q, queries, safety, gt_shape, gt_mesh, solver, step,
                iters, tol, rank_tol, margin,
            )?;
            let params = stages::PipelineParams {
                resolution: r.value("resolution", resolution, 128)?,
                iso: r.value("iso", iso, 0.0)?,
                domain: r.value("domain", domain, 1.0)?,
                tau: r.value("tau", tau, lisr::metrics::DEFAULT_TAU)?,
                samples: r.value("samples", samples, lisr::metrics::DEFAULT_MESH_SAMPLES)?,
                cd_mean: r.switch("cd-mean", cd_mean)?,
                fit: fit_params,
            };
            std::fs::create_dir_all(&params.fit.out)?;
            r.write_resolved(&params.fit.out)?;
            stages::run_pipeline(&params)?;
        }
    }
    Ok(())
}
