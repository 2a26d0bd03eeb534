//! A fitted implicit model and its on-disk format.
//!
//! The `.lisr` file is a versioned line-oriented text format, floats at 17
//! significant digits so round-trips are exact:
//!
//! ```text
//! version 1
//! basis_kind csrbf
//! epsilon 1.25e-1          (only for models fitted on axis-offset queries)
//! kernels <q>
//! <x> <y> <z>              (q lines)
//! alpha <n>
//! <value>                  (n lines)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{gradient_basis, BasisError, BasisKind};
use crate::geom::{KernelSet, Point3};
use crate::par;

const MODEL_VERSION: u32 = 1;

/// A fitted linear implicit surface: basis kind, kernel points and the
/// coefficient vector. `epsilon` records the axis-offset spacing when the
/// model was fitted on such queries.
#[derive(Debug, Clone)]
pub struct ImplicitModel {
    kind: BasisKind,
    kernels: KernelSet,
    alpha: Vec<f64>,
    epsilon: Option<f64>,
}

impl ImplicitModel {
    pub fn new(
        kind: BasisKind,
        kernels: KernelSet,
        alpha: Vec<f64>,
        epsilon: Option<f64>,
    ) -> Result<Self, BasisError> {
        let expected = kind.coefficient_count(kernels.len());
        if alpha.len() != expected {
            return Err(BasisError::CoefficientLengthMismatch {
                expected,
                found: alpha.len(),
            });
        }
        if let Some(i) = alpha.iter().position(|v| !v.is_finite()) {
            return Err(BasisError::NonFiniteCoefficient { index: i });
        }
        Ok(ImplicitModel {
            kind,
            kernels,
            alpha,
            epsilon,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Replaces the coefficients, keeping kind and kernels.
    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self, BasisError> {
        ImplicitModel::new(self.kind, self.kernels.clone(), alpha, self.epsilon)
    }

    /// The 3-vector coefficient block of kernel `i` (gradient-basis kinds
    /// only).
    pub fn beta(&self, i: usize) -> Result<[f64; 3], BasisError> {
        beta_view(self, i)
    }

    /// Evaluates the fitted field at `x`.
    pub fn eval(&self, x: Point3) -> f64 {
        eval_sdf(self, x)
    }
}

/// Field value of the fitted model at `x`.
///
/// CSRBF models touch only the nearest kernel's three coefficients; the
/// global kinds accumulate over all kernels. Within one Voronoi cell the
/// CSRBF field is continuous, but it may jump across cell boundaries —
/// surfacing counts (rather than hides) crossings there.
pub fn eval_sdf(model: &ImplicitModel, x: Point3) -> f64 {
    let alpha = &model.alpha;
    match model.kind {
        BasisKind::TriHarmonic => model
            .kernels
            .points()
            .iter()
            .zip(alpha)
            .map(|(&p, &a)| a * (x - p).norm().powi(3))
            .sum(),
        BasisKind::MonoHarmonic => model
            .kernels
            .points()
            .iter()
            .zip(alpha)
            .map(|(&p, &a)| a * (x - p).norm())
            .sum(),
        BasisKind::Hrbf => model
            .kernels
            .points()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let g = gradient_basis(x, p);
                alpha[3 * i] * g[0] + alpha[3 * i + 1] * g[1] + alpha[3 * i + 2] * g[2]
            })
            .sum(),
        BasisKind::Csrbf => {
            let i = model.kernels.nearest(x);
            let g = gradient_basis(x, model.kernels.point(i));
            alpha[3 * i] * g[0] + alpha[3 * i + 1] * g[1] + alpha[3 * i + 2] * g[2]
        }
    }
}

/// Field values at a batch of points, in input order.
pub fn eval_sdf_batch(model: &ImplicitModel, points: &[Point3]) -> Vec<f64> {
    par::map_indexed(points.len(), |i| eval_sdf(model, points[i]))
}

/// Sequential twin of [`eval_sdf_batch`].
pub fn eval_sdf_batch_seq(model: &ImplicitModel, points: &[Point3]) -> Vec<f64> {
    par::map_indexed_seq(points.len(), |i| eval_sdf(model, points[i]))
}

/// Coefficient block `(α_{3i}, α_{3i+1}, α_{3i+2})` of kernel `i`
/// (0-based), defined for the gradient-basis kinds.
pub fn beta_view(model: &ImplicitModel, i: usize) -> Result<[f64; 3], BasisError> {
    if model.kind.columns_per_kernel() != 3 {
        return Err(BasisError::WrongKind {
            expected: "hrbf or csrbf",
            found: model.kind,
        });
    }
    if i >= model.kernels.len() {
        return Err(BasisError::KernelIndexOutOfRange {
            index: i,
            q: model.kernels.len(),
        });
    }
    Ok([
        model.alpha[3 * i],
        model.alpha[3 * i + 1],
        model.alpha[3 * i + 2],
    ])
}

/// Writes the model in `.lisr` format.
pub fn write_model(model: &ImplicitModel, path: impl AsRef<Path>) -> Result<(), BasisError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| BasisError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| BasisError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(w, "version {MODEL_VERSION}").map_err(io_err)?;
    writeln!(w, "basis_kind {}", model.kind).map_err(io_err)?;
    if let Some(eps) = model.epsilon {
        writeln!(w, "epsilon {eps:.16e}").map_err(io_err)?;
    }
    writeln!(w, "kernels {}", model.kernels.len()).map_err(io_err)?;
    for p in model.kernels.points() {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z).map_err(io_err)?;
    }
    writeln!(w, "alpha {}", model.alpha.len()).map_err(io_err)?;
    for a in &model.alpha {
        writeln!(w, "{a:.16e}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads and validates a `.lisr` model file.
pub fn read_model(path: impl AsRef<Path>) -> Result<ImplicitModel, BasisError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|source| BasisError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let mut next = |field: &'static str| -> Result<(usize, String), BasisError> {
        match lines.next() {
            Some((i, Ok(line))) => Ok((i + 1, line)),
            Some((_, Err(source))) => Err(BasisError::Io {
                path: path_str.clone(),
                source,
            }),
            None => Err(BasisError::MissingField {
                path: path_str.clone(),
                field,
            }),
        }
    };

    let malformed = |line: usize, reason: String| BasisError::MalformedModel {
        path: path.display().to_string(),
        line,
        reason,
    };

    // `version`
    let (lineno, line) = next("version")?;
    let version = match line.strip_prefix("version ") {
        Some(v) => v.trim().to_string(),
        None => {
            return Err(BasisError::MissingField {
                path: path_str,
                field: "version",
            })
        }
    };
    if version != MODEL_VERSION.to_string() {
        return Err(BasisError::UnsupportedVersion {
            path: path_str,
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let _ = lineno;

    // `basis_kind`
    let (lineno, line) = next("basis_kind")?;
    let kind: BasisKind = match line.strip_prefix("basis_kind ") {
        Some(k) => k.trim().parse()?,
        None => {
            return Err(BasisError::MissingField {
                path: path_str,
                field: "basis_kind",
            })
        }
    };
    let _ = lineno;

    // optional `epsilon`, then `kernels`
    let (mut lineno, mut line) = next("kernels")?;
    let mut epsilon = None;
    if let Some(e) = line.strip_prefix("epsilon ") {
        let value: f64 = e
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("cannot parse epsilon '{}'", e.trim())))?;
        epsilon = Some(value);
        (lineno, line) = next("kernels")?;
    }
    let q: usize = match line.strip_prefix("kernels ") {
        Some(n) => n
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad kernel count '{}'", n.trim())))?,
        None => {
            return Err(BasisError::MissingField {
                path: path_str,
                field: "kernels",
            })
        }
    };

    let mut kernel_points = Vec::with_capacity(q);
    for _ in 0..q {
        let (lineno, line) = next("kernels")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed(
                lineno,
                format!("expected 3 kernel coordinates, found {}", fields.len()),
            ));
        }
        let mut c = [0.0f64; 3];
        for (k, f) in fields.iter().enumerate() {
            c[k] = f
                .parse()
                .map_err(|_| malformed(lineno, format!("cannot parse coordinate '{f}'")))?;
        }
        kernel_points.push(Point3::new(c[0], c[1], c[2]));
    }

    // `alpha`
    let (lineno, line) = next("alpha")?;
    let n: usize = match line.strip_prefix("alpha ") {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad alpha count '{}'", v.trim())))?,
        None => {
            return Err(BasisError::MissingField {
                path: path_str,
                field: "alpha",
            })
        }
    };
    let mut alpha = Vec::with_capacity(n);
    for _ in 0..n {
        let (lineno, line) = next("alpha")?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("cannot parse coefficient '{}'", line.trim())))?;
        alpha.push(v);
    }

    let kernels = KernelSet::new(kernel_points)?;
    ImplicitModel::new(kind, kernels, alpha, epsilon)
}
