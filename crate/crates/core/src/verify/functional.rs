//! Scalar observations of a draw and the generic measurement loop.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ensembles::{ColumnEnsemble, SpectrumStats};
use crate::linalg::{gram_scaled, spectral_norm, sym_eigenvalues_desc};
use crate::resolvent::ResolventSample;
use crate::{Error, RMatrix, RVector, Result};

use super::stats::ConcentrationReport;
use super::{accept_draws, VerifyOptions, NORM_SLACK};

/// Which part of a complex-valued observation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    #[default]
    Re,
    Im,
}

impl Part {
    fn of(self, v: Complex64) -> f64 {
        match self {
            Part::Re => v.re,
            Part::Im => v.im,
        }
    }
}

/// A map `R^{p x n} -> R` with a certified Lipschitz constant (for the
/// Frobenius norm) that is claimed to be quasi-convex.
pub trait ConvexObservable: Debug + Send + Sync {
    fn name(&self) -> String;
    fn lipschitz(&self) -> f64;
    fn evaluate(&self, x: &RMatrix) -> f64;
    fn params(&self) -> Value {
        Value::Null
    }
}

/// `X -> ||X - X_0||_F`.
#[derive(Debug, Clone)]
pub struct DistanceToPoint {
    point: RMatrix,
}

impl DistanceToPoint {
    pub fn new(point: RMatrix) -> Self {
        Self { point }
    }

    /// Distance to the matrix with every entry equal to `value`.
    pub fn filled(p: usize, n: usize, value: f64) -> Self {
        Self::new(RMatrix::from_element(p, n, value))
    }
}

impl ConvexObservable for DistanceToPoint {
    fn name(&self) -> String {
        "distance_to_point".into()
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn evaluate(&self, x: &RMatrix) -> f64 {
        (x - &self.point).norm()
    }
    fn params(&self) -> Value {
        json!({ "point_norm": self.point.norm() })
    }
}

/// Largest singular value, a norm and hence convex; `|σ_1(X) - σ_1(Y)| <=
/// ||X - Y|| <= ||X - Y||_F`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LargestSingularValue;

impl ConvexObservable for LargestSingularValue {
    fn name(&self) -> String {
        "largest_singular_value".into()
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn evaluate(&self, x: &RMatrix) -> f64 {
        spectral_norm(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantObservable(pub f64);

impl ConvexObservable for ConstantObservable {
    fn name(&self) -> String {
        "constant".into()
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn evaluate(&self, _x: &RMatrix) -> f64 {
        self.0
    }
}

/// What is measured on each draw `X` (a `p x n` matrix, columns `x_i`).
#[derive(Debug, Clone)]
pub enum FunctionalSpec {
    /// `tr(A Q^z)` with `||A|| <= 1`.
    TraceAQ {
        a: RMatrix,
        z: Complex64,
        part: Part,
    },
    /// `(1/p) tr Q^z`.
    Stieltjes {
        z: Complex64,
        part: Part,
    },
    /// `x_1^T A x_0` for two independent columns.
    QuadraticForm {
        a: RMatrix,
    },
    /// `a^T (x_0 ⊙ x_1 ⊙ ... ⊙ x_{m-1})`, or `a^T x_0^{⊙m}` when `identical`.
    EntrywiseProduct {
        a: RVector,
        m: usize,
        identical: bool,
    },
    /// `tr(A (X/sqrt(n))^m)` for square draws.
    MatrixProductTrace {
        a: RMatrix,
        m: usize,
    },
    ConvexLipschitz(Arc<dyn ConvexObservable>),
}

/// Serializable description of a functional, written into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalInfo {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub quasi_convex: bool,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl FunctionalInfo {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            lipschitz: None,
            quasi_convex: false,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.into(), value);
        self
    }
}

fn z_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

impl FunctionalSpec {
    pub fn convex(obs: impl ConvexObservable + 'static) -> Self {
        FunctionalSpec::ConvexLipschitz(Arc::new(obs))
    }

    pub fn info(&self) -> FunctionalInfo {
        match self {
            FunctionalSpec::TraceAQ { a, z, part } => FunctionalInfo::new("trace_aq")
                .with("z", z_json(*z))
                .with("part", json!(part))
                .with("a_operator_norm", json!(spectral_norm(a))),
            FunctionalSpec::Stieltjes { z, part } => FunctionalInfo::new("stieltjes")
                .with("z", z_json(*z))
                .with("part", json!(part)),
            FunctionalSpec::QuadraticForm { a } => FunctionalInfo::new("quadratic_form")
                .with("a_frobenius", json!(a.norm()))
                .with("a_operator_norm", json!(spectral_norm(a))),
            FunctionalSpec::EntrywiseProduct { a, m, identical } => {
                FunctionalInfo::new("entrywise_product")
                    .with("m", json!(m))
                    .with("identical", json!(identical))
                    .with("a_norm", json!(a.norm()))
            }
            FunctionalSpec::MatrixProductTrace { a, m } => {
                FunctionalInfo::new("matrix_product_trace")
                    .with("m", json!(m))
                    .with("a_operator_norm", json!(spectral_norm(a)))
            }
            FunctionalSpec::ConvexLipschitz(obs) => {
                let mut info = FunctionalInfo::new(obs.name()).with("params", obs.params());
                info.lipschitz = Some(obs.lipschitz());
                info.quasi_convex = true;
                info
            }
        }
    }

    /// Checks shapes and norm constraints against a `p x n` draw.
    pub fn validate(&self, p: usize, n: usize) -> Result<()> {
        let square = |a: &RMatrix, dim: usize, what: &'static str| {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::Dimension {
                    what,
                    expected: dim,
                    got: if a.nrows() != dim {
                        a.nrows()
                    } else {
                        a.ncols()
                    },
                });
            }
            Ok(())
        };
        match self {
            FunctionalSpec::TraceAQ { a, .. } => {
                square(a, p, "trace_aq matrix")?;
                let norm = spectral_norm(a);
                if norm > 1.0 + NORM_SLACK {
                    return Err(Error::Config(format!(
                        "trace_aq needs ||A|| <= 1, got {norm}"
                    )));
                }
            }
            FunctionalSpec::Stieltjes { .. } | FunctionalSpec::ConvexLipschitz(_) => {}
            FunctionalSpec::QuadraticForm { a } => {
                square(a, p, "quadratic form matrix")?;
                if n < 2 {
                    return Err(Error::Config("quadratic form needs two columns".into()));
                }
            }
            FunctionalSpec::EntrywiseProduct { a, m, identical } => {
                if a.len() != p {
                    return Err(Error::Dimension {
                        what: "entrywise product vector",
                        expected: p,
                        got: a.len(),
                    });
                }
                if *m == 0 || (!identical && *m > n) {
                    return Err(Error::Config(format!(
                        "entrywise product of order {m} needs 1..={n} columns"
                    )));
                }
            }
            FunctionalSpec::MatrixProductTrace { a, m } => {
                if p != n {
                    return Err(Error::Config(format!(
                        "matrix powers need square draws, got {p}x{n}"
                    )));
                }
                square(a, p, "product trace matrix")?;
                if *m == 0 {
                    return Err(Error::Config("product order must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &RMatrix) -> Result<f64> {
        Ok(match self {
            FunctionalSpec::TraceAQ { a, z, part } => {
                part.of(ResolventSample::new(x.clone()).trace_a_resolvent(a, *z)?)
            }
            FunctionalSpec::Stieltjes { z, part } => {
                part.of(ResolventSample::new(x.clone()).stieltjes(*z)?)
            }
            FunctionalSpec::QuadraticForm { a } => x.column(1).dot(&(a * x.column(0))),
            FunctionalSpec::EntrywiseProduct { a, m, identical } => {
                let mut prod = x.column(0).into_owned();
                for j in 1..*m {
                    let col = if *identical { x.column(0) } else { x.column(j) };
                    prod.component_mul_assign(&col);
                }
                a.dot(&prod)
            }
            FunctionalSpec::MatrixProductTrace { a, m } => {
                let xs = x / (x.ncols() as f64).sqrt();
                let mut acc = a.clone();
                for _ in 0..*m {
                    acc *= &xs;
                }
                acc.trace()
            }
            FunctionalSpec::ConvexLipschitz(obs) => obs.evaluate(x),
        })
    }
}

/// Measures `f` on `n_draws` independent draws of `ens`.
pub fn measure_functional(
    ens: &ColumnEnsemble,
    f: &FunctionalSpec,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<ConcentrationReport> {
    measure_with(ens, f, n_draws, None, opts)
}

/// As [`measure_functional`], keeping only draws inside the event `A_eps`
/// described by `stats`; rejected draws are replaced by later ones.
pub fn measure_conditioned(
    ens: &ColumnEnsemble,
    f: &FunctionalSpec,
    n_draws: usize,
    stats: &SpectrumStats,
    opts: &VerifyOptions,
) -> Result<ConcentrationReport> {
    measure_with(ens, f, n_draws, Some(stats), opts)
}

fn measure_with(
    ens: &ColumnEnsemble,
    f: &FunctionalSpec,
    n_draws: usize,
    condition: Option<&SpectrumStats>,
    opts: &VerifyOptions,
) -> Result<ConcentrationReport> {
    let (samples, rejection_rate) = sample_functional(ens, f, n_draws, condition, opts)?;
    let mut info = f.info();
    if let Some(stats) = condition {
        info = info.with("conditioned_on_eps", json!(stats.eps));
    }
    let mut report = ConcentrationReport::from_samples(
        info,
        &samples,
        (ens.p(), ens.n()),
        ens.seed(),
        opts.ordered,
    );
    report.rejection_rate = rejection_rate;
    report.warnings.extend(ens.warnings().iter().cloned());
    Ok(report)
}

/// Raw values of `f` on accepted draws, in draw order, with the rejection
/// rate.
pub(crate) fn sample_functional(
    ens: &ColumnEnsemble,
    f: &FunctionalSpec,
    n_draws: usize,
    condition: Option<&SpectrumStats>,
    opts: &VerifyOptions,
) -> Result<(Vec<f64>, f64)> {
    if n_draws == 0 {
        return Err(Error::Config("at least one draw is required".into()));
    }
    f.validate(ens.p(), ens.n())?;
    accept_draws(opts.exec, n_draws, |d| {
        let x = ens.sample_matrix(d);
        if let Some(stats) = condition {
            if !stats.in_event(&sym_eigenvalues_desc(&gram_scaled(&x))) {
                return Ok(None);
            }
        }
        f.evaluate(&x).map(Some)
    })
}
