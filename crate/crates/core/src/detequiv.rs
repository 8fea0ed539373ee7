//! Deterministic equivalent of `E[Q^z]`.
//!
//! Given column covariances `Σ_i = E[x_i x_i^T]`, the vector `Λ̃ ∈ C^n` solves
//!
//! ```text
//! Λ̃_i = (1/n) tr(Σ_i Q̃),   Q̃ = (zI - (1/n) Σ_j Σ_j / (1 - Λ̃_j))^{-1}
//! ```
//!
//! Columns sharing a covariance share `Λ̃_i`, so the iteration runs on one
//! unknown per class. When every class covariance is diagonal in a common
//! orthonormal basis the map costs `O(k p)` per step instead of a `p x p`
//! complex inversion.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{inverse_c, reconstruct_c, sym_eigen_desc, to_complex};
use crate::{CMatrix, Error, RMatrix, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const POLE_TOL: f64 = 1e-10;
pub const MIN_DAMPING: f64 = 1.0 / 64.0;
const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct CommonBasis {
    /// `None` when every class covariance is already diagonal.
    u: Option<RMatrix>,
    /// `diag(U^T Σ_k U)` per class.
    diags: Vec<Vec<f64>>,
}

/// Class-compressed covariance family `(Σ_k, count_k)`.
#[derive(Debug, Clone)]
pub struct CovarianceFamily {
    p: usize,
    n: usize,
    sigmas: Vec<RMatrix>,
    counts: Vec<usize>,
    basis: Option<CommonBasis>,
}

fn is_diagonal(m: &RMatrix, tol: f64) -> bool {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let off: f64 = m
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % m.nrows() != idx / m.nrows())
        .map(|(_, v)| v * v)
        .sum();
    off.sqrt() <= tol * scale
}

impl CovarianceFamily {
    pub fn from_classes(p: usize, n: usize, classes: Vec<(RMatrix, usize)>) -> Result<Self> {
        if classes.is_empty() || n == 0 || p == 0 {
            return Err(Error::Config("empty covariance family".into()));
        }
        let total: usize = classes.iter().map(|c| c.1).sum();
        if total != n {
            return Err(Error::Config(format!(
                "class counts sum to {total}, expected n = {n}"
            )));
        }
        for (s, _) in &classes {
            if s.nrows() != p || s.ncols() != p {
                return Err(Error::Dimension {
                    what: "covariance size",
                    expected: p,
                    got: s.nrows(),
                });
            }
            if (s - s.transpose()).norm() > 1e-12 * s.norm().max(1.0) {
                return Err(Error::Config("covariance is not symmetric".into()));
            }
        }
        let (sigmas, counts): (Vec<RMatrix>, Vec<usize>) = classes.into_iter().unzip();
        let basis = common_basis(&sigmas);
        Ok(Self {
            p,
            n,
            sigmas,
            counts,
            basis,
        })
    }

    /// Every column has covariance `sigma2 I_p`.
    pub fn isotropic(p: usize, n: usize, sigma2: f64) -> Self {
        Self::from_classes(p, n, vec![(RMatrix::identity(p, p) * sigma2, n)])
            .expect("isotropic family is well formed")
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn n_classes(&self) -> usize {
        self.sigmas.len()
    }
    pub fn sigmas(&self) -> &[RMatrix] {
        &self.sigmas
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    /// Whether the `O(kp)` diagonal path is in use.
    pub fn has_common_basis(&self) -> bool {
        self.basis.is_some()
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts.iter().map(move |&c| c as f64 / self.n as f64)
    }

    fn check_poles(&self, lambda: &[Complex64]) -> Result<()> {
        for (k, l) in lambda.iter().enumerate() {
            let d = (Complex64::new(1.0, 0.0) - l).norm();
            if d < POLE_TOL {
                return Err(Error::Pole {
                    index: k,
                    distance: d,
                });
            }
        }
        Ok(())
    }

    /// `Q̃_Λ = (zI - (1/n) Σ_j Σ_j / (1 - Λ_j))^{-1}` for per-class `Λ`.
    pub fn q_tilde(&self, z: Complex64, lambda: &[Complex64]) -> Result<DetEquivMatrix> {
        if lambda.len() != self.n_classes() {
            return Err(Error::Dimension {
                what: "per-class lambda length",
                expected: self.n_classes(),
                got: lambda.len(),
            });
        }
        self.check_poles(lambda)?;
        let coef: Vec<Complex64> = self
            .weights()
            .zip(lambda)
            .map(|(w, l)| w / (Complex64::new(1.0, 0.0) - l))
            .collect();
        match &self.basis {
            Some(b) => {
                let diag = (0..self.p)
                    .map(|j| {
                        let mut d = z;
                        for (k, ck) in coef.iter().enumerate() {
                            d -= ck * b.diags[k][j];
                        }
                        if d.norm() == 0.0 {
                            return Err(Error::Singular);
                        }
                        Ok(d.inv())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DetEquivMatrix::Diagonal {
                    u: b.u.clone(),
                    diag,
                })
            }
            None => {
                let mut m = CMatrix::identity(self.p, self.p) * z;
                for (s, ck) in self.sigmas.iter().zip(&coef) {
                    m -= to_complex(s) * *ck;
                }
                Ok(DetEquivMatrix::Dense(inverse_c(m)?))
            }
        }
    }

    /// `F(Λ)_k = (1/n) tr(Σ_k Q̃_Λ)`.
    pub fn apply_map(
        &self,
        z: Complex64,
        lambda: &[Complex64],
    ) -> Result<(Vec<Complex64>, DetEquivMatrix)> {
        let q = self.q_tilde(z, lambda)?;
        let nf = self.n as f64;
        let f = match (&q, &self.basis) {
            (DetEquivMatrix::Diagonal { diag, .. }, Some(b)) => b
                .diags
                .iter()
                .map(|d| d.iter().zip(diag).map(|(s, q)| q * s).sum::<Complex64>() / nf)
                .collect(),
            _ => self.sigmas.iter().map(|s| q.trace_with(s) / nf).collect(),
        };
        Ok((f, q))
    }

    /// `(1/n) tr(Σ_k M)` for each class; the plug-in `Λ̄` when `M = E[Q^z]`.
    pub fn lambda_from(&self, m: &CMatrix) -> Vec<Complex64> {
        let nf = self.n as f64;
        self.sigmas
            .iter()
            .map(|s| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..self.p {
                    for j in 0..self.p {
                        acc += m[(i, j)] * s[(j, i)];
                    }
                }
                acc / nf
            })
            .collect()
    }

    /// Expands per-class values to one entry per column (class order).
    pub fn expand(&self, per_class: &[Complex64]) -> Vec<Complex64> {
        self.counts
            .iter()
            .zip(per_class)
            .flat_map(|(&c, &v)| std::iter::repeat_n(v, c))
            .collect()
    }
}

fn common_basis(sigmas: &[RMatrix]) -> Option<CommonBasis> {
    if sigmas.iter().all(|s| is_diagonal(s, 0.0)) {
        return Some(CommonBasis {
            u: None,
            diags: sigmas
                .iter()
                .map(|s| s.diagonal().iter().copied().collect())
                .collect(),
        });
    }
    // Eigenbasis of a generic combination; accepted only if it diagonalises
    // every class.
    let p = sigmas[0].nrows();
    let mut combo = RMatrix::zeros(p, p);
    for (k, s) in sigmas.iter().enumerate() {
        combo += s * (1.0 + 0.618_033_988_749_895 * k as f64).sqrt();
    }
    let (_, u) = sym_eigen_desc(&combo);
    let mut diags = Vec::with_capacity(sigmas.len());
    for s in sigmas {
        let rotated = u.transpose() * s * &u;
        if !is_diagonal(&rotated, BASIS_TOL) {
            return None;
        }
        diags.push(rotated.diagonal().iter().copied().collect());
    }
    Some(CommonBasis { u: Some(u), diags })
}

/// `Q̃` either as `U diag(q) U^T` or as a dense matrix.
#[derive(Debug, Clone)]
pub enum DetEquivMatrix {
    Diagonal {
        u: Option<RMatrix>,
        diag: Vec<Complex64>,
    },
    Dense(CMatrix),
}

impl DetEquivMatrix {
    pub fn to_matrix(&self) -> CMatrix {
        match self {
            DetEquivMatrix::Dense(m) => m.clone(),
            DetEquivMatrix::Diagonal { u: None, diag } => {
                CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))
            }
            DetEquivMatrix::Diagonal { u: Some(u), diag } => reconstruct_c(u, diag),
        }
    }

    pub fn trace(&self) -> Complex64 {
        match self {
            DetEquivMatrix::Dense(m) => m.trace(),
            DetEquivMatrix::Diagonal { diag, .. } => diag.iter().sum(),
        }
    }

    /// `tr(A Q̃)`.
    pub fn trace_with(&self, a: &RMatrix) -> Complex64 {
        match self {
            DetEquivMatrix::Dense(m) => {
                let p = m.nrows();
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..p {
                    for j in 0..p {
                        acc += m[(i, j)] * a[(j, i)];
                    }
                }
                acc
            }
            DetEquivMatrix::Diagonal { u: None, diag } => {
                diag.iter().enumerate().map(|(j, q)| q * a[(j, j)]).sum()
            }
            DetEquivMatrix::Diagonal { u: Some(u), diag } => {
                let au = a * u;
                diag.iter()
                    .enumerate()
                    .map(|(j, q)| q * u.column(j).dot(&au.column(j)))
                    .sum()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping `α`; halved on every residual increase.
    pub damping: f64,
    pub min_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: 10_000,
            damping: 1.0,
            min_damping: MIN_DAMPING,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub z: Complex64,
    /// `Λ̃` per class; see [`CovarianceFamily::expand`] for the per-column vector.
    pub lambda: Vec<Complex64>,
    pub q_tilde: DetEquivMatrix,
    /// `max_k |Λ_k - (1/n) tr(Σ_k Q̃)|` at the returned `Λ`.
    pub residual: f64,
    pub iterations: usize,
    pub damping_used: f64,
}

impl FixedPointSolution {
    /// `(1/p) tr Q̃`.
    pub fn stieltjes(&self) -> Complex64 {
        let p = match &self.q_tilde {
            DetEquivMatrix::Dense(m) => m.nrows(),
            DetEquivMatrix::Diagonal { diag, .. } => diag.len(),
        };
        self.q_tilde.trace() / p as f64
    }

    /// For `Im z != 0`, `Im((1/p) tr Q̃)` must have the opposite sign.
    pub fn branch_consistent(&self) -> bool {
        self.z.im == 0.0 || self.stieltjes().im * self.z.im < 0.0
    }

    /// Checks the bounded-norm proxy `||Q̃|| <= 4 / dist(z, support)`.
    /// Returns `(||Q̃||, bound)`.
    pub fn norm_proxy(&self, support: &[(f64, f64)]) -> (f64, f64) {
        let dist = support
            .iter()
            .map(|&(a, b)| {
                let dx = if self.z.re < a {
                    a - self.z.re
                } else if self.z.re > b {
                    self.z.re - b
                } else {
                    0.0
                };
                dx.hypot(self.z.im)
            })
            .fold(f64::INFINITY, f64::min);
        let norm = match &self.q_tilde {
            // normal matrices: spectral norm = largest |eigenvalue|
            DetEquivMatrix::Diagonal { diag, .. } => {
                diag.iter().map(|q| q.norm()).fold(0.0, f64::max)
            }
            DetEquivMatrix::Dense(m) => crate::linalg::spectral_norm_c(m),
        };
        (norm, 4.0 / dist)
    }
}

/// Damped Picard iteration `Λ <- (1-α) Λ + α F(Λ)`.
///
/// Starts from `Λ = 0` (the limit as `|z| -> ∞`) unless `warm_start` is
/// given. Cold starts close to the bulk can land on a spurious branch; use
/// [`solve_along_grid`] and check [`FixedPointSolution::branch_consistent`].
pub fn solve_fixed_point(
    family: &CovarianceFamily,
    z: Complex64,
    opts: &SolverOptions,
    warm_start: Option<&[Complex64]>,
) -> Result<FixedPointSolution> {
    let k = family.n_classes();
    let mut lambda = match warm_start {
        Some(w) if w.len() == k => w.to_vec(),
        Some(w) => {
            return Err(Error::Dimension {
                what: "warm start length",
                expected: k,
                got: w.len(),
            })
        }
        None => vec![Complex64::new(0.0, 0.0); k],
    };
    let mut alpha = opts.damping.clamp(opts.min_damping, 1.0);
    let mut prev = f64::INFINITY;
    let mut trajectory = Vec::new();
    for it in 0..opts.max_iter {
        let (f, q) = family.apply_map(z, &lambda)?;
        let residual = lambda
            .iter()
            .zip(&f)
            .map(|(l, fl)| (l - fl).norm())
            .fold(0.0, f64::max);
        trajectory.push(residual);
        if residual <= opts.tol {
            return Ok(FixedPointSolution {
                z,
                lambda,
                q_tilde: q,
                residual,
                iterations: it,
                damping_used: alpha,
            });
        }
        if residual > prev && alpha > opts.min_damping {
            alpha = (alpha * 0.5).max(opts.min_damping);
        }
        prev = residual;
        for (l, fl) in lambda.iter_mut().zip(&f) {
            *l = *l * (1.0 - alpha) + fl * alpha;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_residual: trajectory.last().copied().unwrap_or(f64::NAN),
        trajectory,
    })
}

/// Solves along `zs`, warm-starting each point from the last success.
/// Consecutive points should be close. Failures are reported per index and
/// do not stop the sweep.
pub fn solve_along_grid(
    family: &CovarianceFamily,
    zs: &[Complex64],
    opts: &SolverOptions,
) -> Vec<Result<FixedPointSolution>> {
    let mut warm: Option<Vec<Complex64>> = None;
    zs.iter()
        .enumerate()
        .map(|(i, &z)| {
            let r = solve_fixed_point(family, z, opts, warm.as_deref());
            match r {
                Ok(sol) => {
                    warm = Some(sol.lambda.clone());
                    Ok(sol)
                }
                Err(e) => Err(Error::at(i, e)),
            }
        })
        .collect()
}

/// Plug-in equivalent from a Monte Carlo mean: `Λ̄_k = (1/n) tr(Σ_k Ê[Q^z])`
/// and `Q̃_{Λ̄}`.
pub fn first_equiv_from_mc(
    family: &CovarianceFamily,
    mean_q: &CMatrix,
    z: Complex64,
) -> Result<(Vec<Complex64>, DetEquivMatrix)> {
    let lambda = family.lambda_from(mean_q);
    let q = family.q_tilde(z, &lambda)?;
    Ok((lambda, q))
}

/// Edges `σ²(1 ∓ √c)²` of the Marchenko-Pastur bulk.
pub fn mp_edges(c: f64, sigma2: f64) -> (f64, f64) {
    let r = c.sqrt();
    (sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2))
}

/// Closed-form `(1/p) tr Q̃` when every `Σ_i = σ² I_p` and `c = p/n`.
///
/// Root of `cσ²z m² - (z - σ²(1-c)) m + 1 = 0` written as
/// `m = 2 / (b + sqrt(z - λ₊) sqrt(z - λ₋))` with `b = z - σ²(1-c)`; the
/// principal square roots put the branch cut on the bulk and give
/// `m ~ 1/z` at infinity.
pub fn mp_oracle_stieltjes(c: f64, sigma2: f64, z: Complex64) -> Result<Complex64> {
    if !(c > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::Config(format!(
            "need c > 0 and sigma2 > 0, got {c}, {sigma2}"
        )));
    }
    let (lo, hi) = mp_edges(c, sigma2);
    if z.im == 0.0 && z.re >= lo && z.re <= hi {
        return Err(Error::OnSupport(z));
    }
    let b = z - sigma2 * (1.0 - c);
    let s = (z - hi).sqrt() * (z - lo).sqrt();
    let den = b + s;
    if den.norm() <= 1e-12 * (b.norm() + s.norm()) {
        // atom at zero when c > 1
        return Err(Error::OnSupport(z));
    }
    Ok(2.0 / den)
}

/// Marchenko-Pastur density (absolutely continuous part).
pub fn mp_density(c: f64, sigma2: f64, x: f64) -> f64 {
    let (lo, hi) = mp_edges(c, sigma2);
    if x <= lo || x >= hi || x <= 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * std::f64::consts::PI * sigma2 * c * x)
}

/// CSV rows `z_re, z_im, iterations, residual, lambda_class_k_{re,im}...,
/// trace_qtilde_re, trace_qtilde_im`. Failed points are skipped.
pub fn write_solutions_csv<W: Write>(
    mut w: W,
    n_classes: usize,
    sols: &[Result<FixedPointSolution>],
) -> Result<()> {
    let mut header = vec![
        "z_re".to_string(),
        "z_im".into(),
        "iterations".into(),
        "residual".into(),
    ];
    for k in 1..=n_classes {
        header.push(format!("lambda_class_{k}_re"));
        header.push(format!("lambda_class_{k}_im"));
    }
    header.push("trace_qtilde_re".into());
    header.push("trace_qtilde_im".into());
    writeln!(w, "{}", header.join(","))?;
    for sol in sols.iter().flatten() {
        let mut row = vec![
            format!("{:?}", sol.z.re),
            format!("{:?}", sol.z.im),
            sol.iterations.to_string(),
            format!("{:?}", sol.residual),
        ];
        for l in &sol.lambda {
            row.push(format!("{:?}", l.re));
            row.push(format!("{:?}", l.im));
        }
        let t = sol.q_tilde.trace();
        row.push(format!("{:?}", t.re));
        row.push(format!("{:?}", t.im));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
