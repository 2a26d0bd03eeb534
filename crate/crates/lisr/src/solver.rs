//! Coefficient fitting and Gram-matrix diagnostics.
//!
//! The fitting objective is the summed squared SDF residual
//! `ℓ(α) = Σ_x (Vᵀα − s_gt)²` over the query points. Its gradient is
//! computed as `2·V(Vᵀα − s_gt)`, which is algebraically `2VVᵀ(α − α*)`
//! but stays defined when `VVᵀ` is singular and never materializes the
//! Gram matrix. Gradient descent converges to the true least-squares
//! solution from any start exactly when `VVᵀ` has full rank, so every fit
//! carries a rank report; with CSRBF bases on axis-offset queries `VVᵀ`
//! degenerates to `9ε⁴·I` and descent with the auto step reaches the
//! optimum in a single iteration.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::basis::{BasisError, BasisKind, DesignMatrix, ImplicitModel};
use crate::sdf::SampleSet;

/// Relative singular-value threshold that separates numerical rank from
/// noise at f64 precision.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Relative Frobenius deviation below which `VVᵀ` counts as a scaled
/// identity.
pub const IDENTITY_REL_TOL: f64 = 1e-9;

/// Power-iteration length for the auto step when `VVᵀ` is not a scaled
/// identity.
const POWER_ITERATIONS: usize = 50;

#[derive(Error, Debug)]
pub enum SolverError {
    #[error("dimension mismatch: design matrix is {rows}x{cols}, got {what} of length {found}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        what: &'static str,
        found: usize,
    },
    #[error("loss became non-finite at iteration {iteration}; step size too large")]
    NonFiniteLoss { iteration: usize },
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Spectrum-based rank diagnostic of `VVᵀ` (equal to the rank of `Vᵀ`).
#[derive(Debug, Clone)]
pub struct RankReport {
    pub basis: BasisKind,
    pub q: usize,
    /// Strategy label for reports; empty when unknown to the solver.
    pub strategy: String,
    pub m: usize,
    pub rank: usize,
    pub max_rank: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rel_tol: f64,
}

impl RankReport {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.max_rank
    }

    pub fn with_strategy(mut self, label: impl Into<String>) -> Self {
        self.strategy = label.into();
        self
    }

    pub const CSV_HEADER: &'static str = "basis,q,strategy,m,rank,max_rank,sigma_max,sigma_min";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.16e},{:.16e}",
            self.basis,
            self.q,
            self.strategy,
            self.m,
            self.rank,
            self.max_rank,
            self.sigma_max,
            self.sigma_min
        )
    }
}

impl std::fmt::Display for RankReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (q={}, {} queries{}): rank {} of {} (sigma_max {:.3e}, sigma_min {:.3e}, rel_tol {:.0e})",
            self.basis,
            self.q,
            self.m,
            if self.strategy.is_empty() {
                String::new()
            } else {
                format!(", {}", self.strategy)
            },
            self.rank,
            self.max_rank,
            self.sigma_max,
            self.sigma_min,
            self.rel_tol
        )
    }
}

/// Which solver produced a [`FitReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ClosedForm,
    GradientDescent,
}

/// Everything a fit reports: the coefficients, the optimization record and
/// the Gram diagnostics attached to every fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub alpha: Vec<f64>,
    pub solver: SolverKind,
    /// Gradient-descent update steps applied (0 for the closed form).
    pub iterations: usize,
    pub final_loss: f64,
    /// Loss at the initial iterate and after every update.
    pub loss_trace: Vec<f64>,
    pub gram: RankReport,
    pub gram_is_identity_scaled: bool,
    /// The constant `c` with `VVᵀ ≈ c·I`, when identity-scaled.
    pub gram_identity_constant: Option<f64>,
}

impl FitReport {
    pub fn csv_row(&self) -> String {
        self.gram.csv_row()
    }
}

impl std::fmt::Display for FitReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "solver: {}",
            match self.solver {
                SolverKind::ClosedForm => "closed form",
                SolverKind::GradientDescent => "gradient descent",
            }
        )?;
        writeln!(f, "iterations: {}", self.iterations)?;
        writeln!(f, "final loss: {:.6e}", self.final_loss)?;
        writeln!(f, "gram: {}", self.gram)?;
        match self.gram_identity_constant {
            Some(c) => writeln!(f, "gram matrix is identity-scaled, c = {c:.12e}"),
            None => writeln!(f, "gram matrix is not identity-scaled"),
        }
    }
}

fn check_dims(v_t: &DesignMatrix, alpha: Option<&[f64]>, s: &[f64]) -> Result<(), SolverError> {
    if let Some(a) = alpha {
        if a.len() != v_t.ncols() {
            return Err(SolverError::DimensionMismatch {
                rows: v_t.nrows(),
                cols: v_t.ncols(),
                what: "coefficient vector",
                found: a.len(),
            });
        }
    }
    if s.len() != v_t.nrows() {
        return Err(SolverError::DimensionMismatch {
            rows: v_t.nrows(),
            cols: v_t.ncols(),
            what: "ground-truth vector",
            found: s.len(),
        });
    }
    Ok(())
}

fn loss_of(v_t: &DesignMatrix, alpha: &[f64], s: &[f64]) -> f64 {
    v_t.apply(alpha)
        .iter()
        .zip(s)
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

fn gradient_of(v_t: &DesignMatrix, alpha: &[f64], s: &[f64]) -> Vec<f64> {
    let mut residual = v_t.apply(alpha);
    for (r, t) in residual.iter_mut().zip(s) {
        *r -= t;
    }
    let mut g = v_t.apply_transpose(&residual);
    for v in &mut g {
        *v *= 2.0;
    }
    g
}

/// Summed squared residual `Σ (Vᵀα − s_gt)²`.
pub fn sdf_loss(alpha: &[f64], v_t: &DesignMatrix, s_gt: &SampleSet) -> Result<f64, SolverError> {
    let s = s_gt.values();
    check_dims(v_t, Some(alpha), &s)?;
    Ok(loss_of(v_t, alpha, &s))
}

/// Gradient of [`sdf_loss`], computed as `2·V(Vᵀα − s_gt)`.
pub fn loss_gradient(
    alpha: &[f64],
    v_t: &DesignMatrix,
    s_gt: &SampleSet,
) -> Result<Vec<f64>, SolverError> {
    let s = s_gt.values();
    check_dims(v_t, Some(alpha), &s)?;
    Ok(gradient_of(v_t, alpha, &s))
}

/// All singular values of `Vᵀ` in descending order, length `min(m, n)`.
///
/// Block-sparse systems decompose per kernel: after row and column
/// grouping the matrix is block-diagonal with one `m_i x 3` block per
/// kernel, so the spectrum is the union of the block spectra padded with
/// structural zeros.
pub fn singular_values(v_t: &DesignMatrix) -> Vec<f64> {
    let expected = v_t.nrows().min(v_t.ncols());
    let mut sv: Vec<f64> = match v_t.block_rows() {
        Some(rows) => {
            let q = v_t.kernel_count();
            let mut per_kernel: Vec<Vec<[f64; 3]>> = vec![Vec::new(); q];
            for row in rows {
                per_kernel[row.support].push(row.values);
            }
            let mut sv = Vec::with_capacity(expected);
            for block in per_kernel.iter().filter(|b| !b.is_empty()) {
                let m = DMatrix::from_fn(block.len(), 3, |r, c| block[r][c]);
                sv.extend(m.singular_values().iter());
            }
            sv
        }
        None => {
            let m = v_t.dense().expect("dense storage");
            // Tall orientation keeps the bidiagonalization cheap.
            if m.ncols() > m.nrows() {
                m.transpose().singular_values().iter().cloned().collect()
            } else {
                m.clone().singular_values().iter().cloned().collect()
            }
        }
    };
    sv.resize(expected.max(sv.len()), 0.0);
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv.truncate(expected);
    sv
}

/// Rank of `VVᵀ` (= rank of `Vᵀ`): singular values above
/// `rel_tol × σ_max`, plus the spectrum summary.
pub fn rank_of_gram(v_t: &DesignMatrix, rel_tol: f64) -> RankReport {
    let sv = singular_values(v_t);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let sigma_min = sv.last().copied().unwrap_or(0.0);
    let rank = if sigma_max > 0.0 {
        sv.iter().filter(|&&s| s > rel_tol * sigma_max).count()
    } else {
        0
    };
    RankReport {
        basis: v_t.kind(),
        q: v_t.kernel_count(),
        strategy: String::new(),
        m: v_t.nrows(),
        rank,
        max_rank: v_t.ncols(),
        sigma_max,
        sigma_min,
        rel_tol,
    }
}

/// Least-squares estimate of `c` and the relative Frobenius deviation
/// `‖VVᵀ − cI‖_F / ‖cI‖_F`. Block-sparse systems compute it exactly from
/// the per-kernel `MᵢᵀMᵢ` blocks (everything off-block is structurally
/// zero); dense systems derive it from the singular values.
pub fn gram_identity_deviation(v_t: &DesignMatrix) -> (f64, f64) {
    let n = v_t.ncols() as f64;
    match v_t.block_rows() {
        Some(rows) => {
            let q = v_t.kernel_count();
            // Accumulate G_i = M_i^T M_i per kernel.
            let mut blocks = vec![[[0.0f64; 3]; 3]; q];
            for row in rows {
                let g = &mut blocks[row.support];
                for (grow, &va) in g.iter_mut().zip(&row.values) {
                    for (entry, &vb) in grow.iter_mut().zip(&row.values) {
                        *entry += va * vb;
                    }
                }
            }
            let trace: f64 = blocks.iter().map(|g| g[0][0] + g[1][1] + g[2][2]).sum();
            let c = trace / n;
            if c <= 0.0 {
                return (c, f64::INFINITY);
            }
            let mut dev_sq = 0.0;
            for g in &blocks {
                for (a, grow) in g.iter().enumerate() {
                    for (b, &entry) in grow.iter().enumerate() {
                        let d = entry - if a == b { c } else { 0.0 };
                        dev_sq += d * d;
                    }
                }
            }
            (c, dev_sq.sqrt() / (c * n.sqrt()))
        }
        None => {
            let sv = singular_values(v_t);
            let sum_sq: f64 = sv.iter().map(|s| s * s).sum();
            let sum_quad: f64 = sv.iter().map(|s| s.powi(4)).sum();
            let c = sum_sq / n;
            if c <= 0.0 {
                return (c, f64::INFINITY);
            }
            let dev_sq = (sum_quad - sum_sq * sum_sq / n).max(0.0);
            (c, dev_sq.sqrt() / (c * n.sqrt()))
        }
    }
}

/// Exact Frobenius deviation `‖VVᵀ − c·I‖_F` for a caller-supplied
/// constant. Block-sparse systems sum the per-kernel `MᵢᵀMᵢ` deviations
/// (off-block entries are structurally zero); dense systems materialize
/// the Gram matrix.
pub fn gram_deviation_from(v_t: &DesignMatrix, c: f64) -> f64 {
    match v_t.block_rows() {
        Some(rows) => {
            let q = v_t.kernel_count();
            let mut blocks = vec![[[0.0f64; 3]; 3]; q];
            for row in rows {
                let g = &mut blocks[row.support];
                for (grow, &va) in g.iter_mut().zip(&row.values) {
                    for (entry, &vb) in grow.iter_mut().zip(&row.values) {
                        *entry += va * vb;
                    }
                }
            }
            let mut dev_sq = 0.0;
            for g in &blocks {
                for (a, grow) in g.iter().enumerate() {
                    for (b, &entry) in grow.iter().enumerate() {
                        let d = entry - if a == b { c } else { 0.0 };
                        dev_sq += d * d;
                    }
                }
            }
            dev_sq.sqrt()
        }
        None => {
            let a = v_t.dense().expect("dense storage");
            let mut gram = a.transpose() * a;
            for i in 0..gram.nrows() {
                gram[(i, i)] -= c;
            }
            gram.norm()
        }
    }
}

/// Minimum-norm least-squares coefficients.
///
/// When the block structure with `VVᵀ = cI` is detected the solution is
/// `V·s_gt / c`, assembled per 3-wide block with no global factorization.
/// Other block-sparse systems solve the decoupled per-kernel least-squares
/// problems; dense systems fall back to an SVD pseudo-inverse with
/// threshold [`RANK_REL_TOL`]`·σ_max`. Rank deficiency is never an error
/// here; it is surfaced by the rank report attached to fits.
pub fn closed_form_solve(v_t: &DesignMatrix, s_gt: &SampleSet) -> Result<Vec<f64>, SolverError> {
    let s = s_gt.values();
    check_dims(v_t, None, &s)?;

    if let Some(rows) = v_t.block_rows() {
        let (c, dev) = gram_identity_deviation(v_t);
        if dev <= IDENTITY_REL_TOL {
            let mut alpha = v_t.apply_transpose(&s);
            for a in &mut alpha {
                *a /= c;
            }
            return Ok(alpha);
        }
        // Decoupled per-kernel least squares.
        let q = v_t.kernel_count();
        let mut per_kernel: Vec<(Vec<[f64; 3]>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); q];
        for (row, &si) in rows.iter().zip(&s) {
            per_kernel[row.support].0.push(row.values);
            per_kernel[row.support].1.push(si);
        }
        let mut alpha = vec![0.0; 3 * q];
        for (i, (block, rhs)) in per_kernel.iter().enumerate() {
            if block.is_empty() {
                continue; // kernel unseen by any query: minimum norm is zero
            }
            let m = DMatrix::from_fn(block.len(), 3, |r, c| block[r][c]);
            let b = nalgebra::DVector::from_column_slice(rhs);
            let svd = m.svd(true, true);
            let eps = RANK_REL_TOL * svd.singular_values.max();
            let x = svd.solve(&b, eps).expect("SVD factors were computed");
            alpha[3 * i..3 * i + 3].copy_from_slice(x.as_slice());
        }
        return Ok(alpha);
    }

    let m = v_t.dense().expect("dense storage");
    let svd = m.clone().svd(true, true);
    let eps = RANK_REL_TOL * svd.singular_values.max();
    let b = nalgebra::DVector::from_column_slice(&s);
    let x = svd.solve(&b, eps).expect("SVD factors were computed");
    Ok(x.as_slice().to_vec())
}

/// [`closed_form_solve`] wrapped with the Gram diagnostics every fit
/// carries.
pub fn closed_form_fit(
    v_t: &DesignMatrix,
    s_gt: &SampleSet,
    rel_tol: f64,
) -> Result<FitReport, SolverError> {
    let alpha = closed_form_solve(v_t, s_gt)?;
    let final_loss = sdf_loss(&alpha, v_t, s_gt)?;
    let gram = rank_of_gram(v_t, rel_tol);
    let (c, dev) = gram_identity_deviation(v_t);
    let identity = dev <= IDENTITY_REL_TOL;
    Ok(FitReport {
        alpha,
        solver: SolverKind::ClosedForm,
        iterations: 0,
        final_loss,
        loss_trace: vec![final_loss],
        gram,
        gram_is_identity_scaled: identity,
        gram_identity_constant: identity.then_some(c),
    })
}

/// Step-size rule for [`gd_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/(2c)` when `VVᵀ = cI` is detected (one-step convergence),
    /// otherwise `1/(2λ_max(VVᵀ))` with `λ_max` estimated by power
    /// iteration.
    Auto,
    Fixed(f64),
}

fn power_iteration_lambda_max(v_t: &DesignMatrix) -> f64 {
    let n = v_t.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CAFE);
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let wn = norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        for x in &mut w {
            *x /= wn;
        }
        w = v_t.apply_transpose(&v_t.apply(&w));
        lambda = norm(&w);
    }
    lambda
}

/// Gradient descent on the SDF loss from `α₀ = 0`.
///
/// Stops when `‖∇ℓ‖ ≤ tol` or after `max_iters` update steps, recording
/// the loss after every update. With the auto step on an identity-scaled
/// Gram matrix the first update lands on the closed-form solution.
pub fn gd_fit(
    v_t: &DesignMatrix,
    s_gt: &SampleSet,
    step: StepRule,
    max_iters: usize,
    tol: f64,
    rel_tol: f64,
) -> Result<FitReport, SolverError> {
    if max_iters == 0 {
        return Err(SolverError::ZeroIterations);
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolverError::NonPositiveTolerance(tol));
    }
    let s = s_gt.values();
    check_dims(v_t, None, &s)?;

    let (c, dev) = gram_identity_deviation(v_t);
    let identity = dev <= IDENTITY_REL_TOL && c > 0.0;
    let step = match step {
        StepRule::Fixed(s) => s,
        StepRule::Auto => {
            if identity {
                1.0 / (2.0 * c)
            } else {
                let lambda = power_iteration_lambda_max(v_t);
                if lambda > 0.0 {
                    1.0 / (2.0 * lambda)
                } else {
                    1.0 // zero matrix: gradient is constant zero
                }
            }
        }
    };

    let n = v_t.ncols();
    let mut alpha = vec![0.0; n];
    let mut trace = vec![loss_of(v_t, &alpha, &s)];
    let mut iterations = 0;
    for it in 0..max_iters {
        let g = gradient_of(v_t, &alpha, &s);
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm <= tol {
            break;
        }
        for (a, gi) in alpha.iter_mut().zip(&g) {
            *a -= step * gi;
        }
        let l = loss_of(v_t, &alpha, &s);
        if !l.is_finite() {
            return Err(SolverError::NonFiniteLoss { iteration: it + 1 });
        }
        trace.push(l);
        iterations += 1;
    }

    let final_loss = *trace.last().unwrap();
    let gram = rank_of_gram(v_t, rel_tol);
    Ok(FitReport {
        alpha,
        solver: SolverKind::GradientDescent,
        iterations,
        final_loss,
        loss_trace: trace,
        gram,
        gram_is_identity_scaled: identity,
        gram_identity_constant: identity.then_some(c),
    })
}

/// Adds independent uniform noise from `[-eta, eta]` to every coefficient;
/// deterministic per seed, the input model untouched. `eta = 0` returns a
/// bit-identical copy.
pub fn perturb_coefficients(model: &ImplicitModel, eta: f64, seed: u64) -> ImplicitModel {
    assert!(eta >= 0.0, "eta must be non-negative");
    if eta == 0.0 {
        return model.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = model
        .alpha()
        .iter()
        .map(|a| a + rng.random_range(-eta..=eta))
        .collect();
    model.with_alpha(alpha).expect("perturbed coefficients stay valid")
}

/// Targeted variant: perturbs only the coefficient block of kernel
/// `block`, leaving every other coefficient bit-identical.
pub fn perturb_block(
    model: &ImplicitModel,
    block: usize,
    eta: f64,
    seed: u64,
) -> Result<ImplicitModel, SolverError> {
    assert!(eta >= 0.0, "eta must be non-negative");
    let q = model.kernels().len();
    if block >= q {
        return Err(SolverError::Basis(BasisError::KernelIndexOutOfRange {
            index: block,
            q,
        }));
    }
    let width = model.kind().columns_per_kernel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = model.alpha().to_vec();
    if eta > 0.0 {
        for a in &mut alpha[width * block..width * (block + 1)] {
            *a += rng.random_range(-eta..=eta);
        }
    }
    Ok(model.with_alpha(alpha)?)
}
