//! Products of concentrated objects: bilinear and quadratic forms, entrywise
//! products of vectors and products of matrices.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ensembles::ColumnEnsemble;
use crate::linalg::spectral_norm;
use crate::par::try_map_indices;
use crate::resolvent::{ResolventSample, PIVOT_TOL};
use crate::rng::derive_seed;
use crate::{Error, RMatrix, RVector, Result};

use super::functional::{measure_functional, FunctionalInfo, FunctionalSpec};
use super::stats::{fit_tails, standard_error, ConcentrationReport};
use super::{accept_draws, VerifyOptions, NORM_SLACK};

/// Stream tag separating the factors of a matrix product.
const PRODUCT_STREAM: u64 = 0x5052_4f44;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HansonWrightReport {
    pub report: ConcentrationReport,
    /// `||A||_F`, the scale of the Gaussian regime.
    pub frobenius_scale: f64,
    /// `||A||`, the scale of the exponential regime.
    pub operator_scale: f64,
    /// `sigma_hat / ||A||_F`.
    pub gaussian_ratio: Option<f64>,
    /// `||A||_F² / ||A||`, where the two regimes meet.
    pub predicted_crossover: Option<f64>,
    /// Intersection of the two fitted log-tail curves.
    pub fitted_crossover: Option<f64>,
}

/// Measures `y^T A x` for two independent columns of each draw.
pub fn hanson_wright_check(
    ens: &ColumnEnsemble,
    a: &RMatrix,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<HansonWrightReport> {
    let report = measure_functional(
        ens,
        &FunctionalSpec::QuadraticForm { a: a.clone() },
        n_draws,
        opts,
    )?;
    let frobenius_scale = a.norm();
    let operator_scale = spectral_norm(a);
    let fits = fit_tails(&report.tails, report.std);
    let fitted_crossover = match (fits.gaussian, fits.exponential) {
        // a t² + b = c t + d
        (Some(g), Some(x)) if g.slope > 0.0 => {
            let disc = x.slope * x.slope - 4.0 * g.slope * (g.intercept - x.intercept);
            (disc >= 0.0).then(|| (x.slope + disc.sqrt()) / (2.0 * g.slope))
        }
        _ => None,
    };
    Ok(HansonWrightReport {
        gaussian_ratio: (frobenius_scale > 0.0).then(|| report.sigma_hat / frobenius_scale),
        predicted_crossover: (operator_scale > 0.0)
            .then(|| frobenius_scale.powi(2) / operator_scale),
        fitted_crossover,
        frobenius_scale,
        operator_scale,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrywiseReport {
    pub report: ConcentrationReport,
    /// Diameter of the plain linear form `a^T x`, measured on the same draws.
    pub reference_sigma: f64,
    pub kappa: f64,
    /// `(2 e κ)^{m-1} σ` for distinct vectors, `κ^{m-1} σ` for identical ones.
    pub bound: f64,
    pub ratio: Option<f64>,
}

/// Measures `a^T (x_0 ⊙ ... ⊙ x_{m-1})` with `κ = max |x_ij|`.
pub fn entrywise_product_check(
    ens: &ColumnEnsemble,
    a: &RVector,
    m: usize,
    identical: bool,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<EntrywiseReport> {
    if a.norm() > 1.0 + NORM_SLACK {
        return Err(Error::Config(format!(
            "entrywise check needs ||a|| <= 1, got {}",
            a.norm()
        )));
    }
    let spec = |m| FunctionalSpec::EntrywiseProduct {
        a: a.clone(),
        m,
        identical,
    };
    let report = measure_functional(ens, &spec(m), n_draws, opts)?;
    let reference_sigma = if m == 1 {
        report.sigma_hat
    } else {
        measure_functional(ens, &spec(1), n_draws, opts)?.sigma_hat
    };
    let kappa = ens.entry_bound();
    let growth = if identical { kappa } else { 2.0 * E * kappa };
    let bound = growth.powi(m as i32 - 1) * reference_sigma;
    Ok(EntrywiseReport {
        ratio: (bound > 0.0).then(|| report.sigma_hat / bound),
        report,
        reference_sigma,
        kappa,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub report: ConcentrationReport,
    pub m: usize,
    pub kappa: f64,
    /// Largest per-factor concentration scale `sqrt(var) ||A_k|| / sqrt(n)`.
    pub sigma: f64,
    /// `n_0 + n_1 + ... + n_m`.
    pub dimension_sum: usize,
    /// `κ^{m-1} σ sqrt(n_0 + ... + n_m)`.
    pub bound: f64,
    pub ratio: Option<f64>,
}

/// Measures `tr(A X_1 ⋯ X_m)` with `X_j` the `j`-th draw scaled by
/// `1/sqrt(n_j)`, rejecting draws where some `||X_j|| > κ`.
///
/// With one factor ensemble the same draw is reused `m` times (and must be
/// square); otherwise `factors.len() == m` and the draws are independent.
pub fn product_concentration_check(
    factors: &[ColumnEnsemble],
    m: usize,
    a: &RMatrix,
    kappa: f64,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<ProductReport> {
    let identical = factors.len() == 1;
    if m == 0 || (!identical && factors.len() != m) {
        return Err(Error::Config(format!(
            "{} factor ensembles cannot form a product of order {m}",
            factors.len()
        )));
    }
    let chain: Vec<&ColumnEnsemble> = (0..m)
        .map(|j| &factors[if identical { 0 } else { j }])
        .collect();
    for w in chain.windows(2) {
        if w[0].n() != w[1].p() {
            return Err(Error::Dimension {
                what: "product chain inner dimension",
                expected: w[0].n(),
                got: w[1].p(),
            });
        }
    }
    let (rows, cols) = (chain[m - 1].n(), chain[0].p());
    if a.nrows() != rows || a.ncols() != cols {
        return Err(Error::Dimension {
            what: "product trace matrix rows",
            expected: rows,
            got: a.nrows(),
        });
    }
    if spectral_norm(a) > 1.0 + NORM_SLACK {
        return Err(Error::Config("product check needs ||A|| <= 1".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let seeded: Vec<ColumnEnsemble> = factors
        .iter()
        .enumerate()
        .map(|(j, f)| {
            f.clone()
                .with_seed(derive_seed(f.seed(), j as u64, PRODUCT_STREAM))
        })
        .collect();
    let (samples, rejection_rate) = accept_draws(opts.exec, n_draws, |d| {
        let draws: Vec<RMatrix> = seeded
            .iter()
            .map(|f| f.sample_matrix(d) / (f.n() as f64).sqrt())
            .collect();
        if draws.iter().any(|x| spectral_norm(x) > kappa) {
            return Ok(None);
        }
        let mut acc = a.clone();
        for j in 0..m {
            acc *= &draws[if identical { 0 } else { j }];
        }
        Ok(Some(acc.trace()))
    })?;
    let sigma = chain
        .iter()
        .map(|f| {
            f.classes()
                .iter()
                .map(|c| c.base.variance().sqrt() * c.factor_norm())
                .fold(0.0, f64::max)
                / (f.n() as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let dimension_sum = chain[0].p() + chain.iter().map(|f| f.n()).sum::<usize>();
    let bound = kappa.powi(m as i32 - 1) * sigma * (dimension_sum as f64).sqrt();
    let info = FunctionalInfo::new("matrix_product_trace")
        .with("m", json!(m))
        .with("identical", json!(identical))
        .with("kappa", json!(kappa))
        .with("scaling", json!("columns / sqrt(n)"));
    let mut report = ConcentrationReport::from_samples(
        info,
        &samples,
        (cols, rows),
        factors[0].seed(),
        opts.ordered,
    );
    report.rejection_rate = rejection_rate;
    Ok(ProductReport {
        ratio: (bound > 0.0).then(|| report.sigma_hat / bound),
        report,
        m,
        kappa,
        sigma,
        dimension_sum,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFormReport {
    /// Distribution of `x_0^T A Q^z_{-0} x_0` (real part).
    pub report: ConcentrationReport,
    /// `tr(Σ_0 A Ê[Q^z])` (real part) from the same draws.
    pub target: f64,
    /// Mean of the paired differences `x_0^T A Q_{-0} x_0 - tr(Σ_0 A Q)`.
    pub difference: f64,
    pub standard_error: f64,
    pub within_three_se: bool,
}

/// Compares leave-one-out quadratic forms with their trace centering.
pub fn quadratic_form_check(
    ens: &ColumnEnsemble,
    a: &RMatrix,
    z: Complex64,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<QuadraticFormReport> {
    let p = ens.p();
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::Dimension {
            what: "quadratic form matrix",
            expected: p,
            got: a.nrows(),
        });
    }
    if n_draws < 2 {
        return Err(Error::Config(
            "quadratic form check needs at least two draws".into(),
        ));
    }
    let sigma_a = ens.column_model(0).second_moment() * a;
    let n = ens.n() as f64;
    let pairs = try_map_indices(opts.exec, n_draws, |d| {
        let eval = || -> Result<(f64, f64)> {
            let s = ResolventSample::new(ens.sample_matrix(d as u64));
            let w = s.resolvent_weights(z)?;
            let u = s.eigenvectors();
            let x = s.x().column(0);
            let b = u.transpose() * x;
            let c = u.transpose() * (a.transpose() * x);
            // x^T A Q x and x^T Q x through the eigenbasis
            let aq: Complex64 = (0..p).map(|k| w[k] * (c[k] * b[k])).sum();
            let qq: Complex64 = (0..p).map(|k| w[k] * (b[k] * b[k])).sum();
            let pivot = qq + n;
            if pivot.norm() < PIVOT_TOL * n {
                return Err(Error::DegeneratePivot(pivot.norm() / n));
            }
            // Q_{-0} = Q - Q x x^T Q / (n + x^T Q x)
            let form = aq * n / pivot;
            let centering = s.trace_a_resolvent(&sigma_a, z)?;
            Ok((form.re, centering.re))
        };
        eval().map_err(|e| Error::at(d, e))
    })?;
    let forms: Vec<f64> = pairs.iter().map(|v| v.0).collect();
    let diffs: Vec<f64> = pairs.iter().map(|v| v.0 - v.1).collect();
    let nf = n_draws as f64;
    let target = pairs.iter().map(|v| v.1).sum::<f64>() / nf;
    let difference = diffs.iter().sum::<f64>() / nf;
    let se = standard_error(&diffs);
    let info = FunctionalInfo::new("leave_one_out_quadratic_form")
        .with("z", json!([z.re, z.im]))
        .with("a_frobenius", json!(a.norm()))
        .with("a_operator_norm", json!(spectral_norm(a)));
    let mut report =
        ConcentrationReport::from_samples(info, &forms, (p, ens.n()), ens.seed(), opts.ordered);
    report.warnings.extend(ens.warnings().iter().cloned());
    Ok(QuadraticFormReport {
        report,
        target,
        difference,
        standard_error: se,
        within_three_se: difference.abs() <= 3.0 * se,
    })
}
