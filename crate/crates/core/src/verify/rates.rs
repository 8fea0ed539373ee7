//! Scaling experiments: how fluctuation and bias metrics shrink with `n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detequiv::{solve_fixed_point, SolverOptions};
use crate::ensembles::{ColumnEnsemble, SpectrumStats};
use crate::linalg::{gram_scaled, spectral_norm_c, sym_eigenvalues_desc, to_complex};
use crate::par::{map_indices, try_fold_blocks};
use crate::resolvent::{ResolventSample, PIVOT_TOL};
use crate::{CMatrix, Error, Result};

use super::functional::{measure_functional, FunctionalSpec};
use super::stats::{ConcentrationReport, ScalingAxis, ScalingRow, ScalingTable};
use super::{VerifyOptions, BAND_INVERSE, BAND_INVERSE_SQRT};

/// Draw indices used for event frequencies start here, so they never reuse
/// the draws that produced the mean spectrum.
pub const EVENT_DRAW_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    SigmaHat,
    Std,
}

/// Measures a functional for every size in `n_list` and fits the log-log
/// slope of the chosen metric.
pub fn rate_scan<E, F>(
    family: E,
    functional: F,
    n_list: &[usize],
    n_draws: usize,
    metric: RateMetric,
    axis: ScalingAxis,
    opts: &VerifyOptions,
) -> Result<(ScalingTable, Vec<ConcentrationReport>)>
where
    E: Fn(usize) -> Result<ColumnEnsemble>,
    F: Fn(&ColumnEnsemble) -> Result<FunctionalSpec>,
{
    let mut rows = Vec::with_capacity(n_list.len());
    let mut reports = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let ens = family(n)?;
        let report = measure_functional(&ens, &functional(&ens)?, n_draws, opts)?;
        rows.push(ScalingRow {
            n: ens.n(),
            p: ens.p(),
            value: match metric {
                RateMetric::SigmaHat => report.sigma_hat,
                RateMetric::Std => report.std,
            },
            noise: None,
        });
        reports.push(report);
    }
    let suffix = match metric {
        RateMetric::SigmaHat => "sigma_hat",
        RateMetric::Std => "std",
    };
    let name = match reports.first() {
        Some(r) => format!("{}_{suffix}", r.functional.kind),
        None => suffix.to_string(),
    };
    Ok((ScalingTable::new(name, axis, rows)?, reports))
}

/// Bias and fluctuation of the resolvent across sizes, from shared draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventRates {
    pub z: [f64; 2],
    pub draws: usize,
    /// `||Ê[Q^z] - Q̃^z||_F` against `n`; the `noise` column is the Monte
    /// Carlo standard error of `Ê[Q^z]` in the same norm.
    pub frobenius: ScalingTable,
    /// Standard deviation of `(1/p) tr Q^z` against `p`.
    pub stieltjes_std: ScalingTable,
    /// `(1/p) tr Ê[Q^z]` and `(1/p) tr Q̃^z` per size, as `[re, im]`.
    pub mean_stieltjes: Vec<[f64; 2]>,
    pub deterministic_stieltjes: Vec<[f64; 2]>,
    pub solver_iterations: Vec<usize>,
}

struct ResolventAccumulator {
    sum: CMatrix,
    sum_sq_norm: f64,
    stieltjes: Vec<Complex64>,
}

/// One pass over the draws per size computes both resolvent metrics.
pub fn resolvent_rate_scan<E>(
    family: E,
    z: Complex64,
    n_list: &[usize],
    n_draws: usize,
    solver: &SolverOptions,
    opts: &VerifyOptions,
) -> Result<ResolventRates>
where
    E: Fn(usize) -> Result<ColumnEnsemble>,
{
    if n_draws < 2 {
        return Err(Error::Config("rate scans need at least two draws".into()));
    }
    let nf = n_draws as f64;
    let mut frob_rows = Vec::new();
    let mut std_rows = Vec::new();
    let mut mean_g = Vec::new();
    let mut det_g = Vec::new();
    let mut iterations = Vec::new();
    for &n in n_list {
        let ens = family(n)?;
        let p = ens.p();
        let sol = solve_fixed_point(&ens.covariance_family(), z, solver, None)?;
        let q_tilde = sol.q_tilde.to_matrix();
        let acc = try_fold_blocks(
            opts.exec,
            n_draws,
            || ResolventAccumulator {
                sum: CMatrix::zeros(p, p),
                sum_sq_norm: 0.0,
                stieltjes: Vec::new(),
            },
            |mut acc, d| {
                let s = ResolventSample::new(ens.sample_matrix(d as u64));
                let q = s.resolvent(z).map_err(|e| Error::at(d, e))?;
                acc.sum_sq_norm += q.norm_squared();
                acc.stieltjes.push(q.trace() / p as f64);
                acc.sum += q;
                Ok::<_, Error>(acc)
            },
            |mut a, b| {
                a.sum += b.sum;
                a.sum_sq_norm += b.sum_sq_norm;
                a.stieltjes.extend(b.stieltjes);
                a
            },
        )?;
        let mean = acc.sum / Complex64::new(nf, 0.0);
        let spread = (acc.sum_sq_norm - nf * mean.norm_squared()).max(0.0) / (nf * (nf - 1.0));
        frob_rows.push(ScalingRow {
            n: ens.n(),
            p,
            value: (&mean - &q_tilde).norm(),
            noise: Some(spread.sqrt()),
        });
        let g_mean = acc.stieltjes.iter().sum::<Complex64>() / nf;
        let var = acc
            .stieltjes
            .iter()
            .map(|g| (g - g_mean).norm_sqr())
            .sum::<f64>()
            / nf;
        std_rows.push(ScalingRow {
            n: ens.n(),
            p,
            value: var.sqrt(),
            noise: Some(var.sqrt() / (2.0 * (nf - 1.0)).sqrt()),
        });
        mean_g.push([g_mean.re, g_mean.im]);
        let g_det = sol.stieltjes();
        det_g.push([g_det.re, g_det.im]);
        iterations.push(sol.iterations);
    }
    let [lo, hi] = BAND_INVERSE_SQRT;
    let frobenius = ScalingTable::new("resolvent_mean_frobenius_error", ScalingAxis::N, frob_rows)?
        .with_band(lo, hi);
    let [lo, hi] = BAND_INVERSE;
    let stieltjes_std =
        ScalingTable::new("stieltjes_std", ScalingAxis::P, std_rows)?.with_band(lo, hi);
    Ok(ResolventRates {
        z: [z.re, z.im],
        draws: n_draws,
        frobenius,
        stieltjes_std,
        mean_stieltjes: mean_g,
        deterministic_stieltjes: det_g,
        solver_iterations: iterations,
    })
}

/// How `E[Q - Q_{-1}]` is estimated from each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooEstimator {
    /// `Q - Q_{-1}` for the first column only.
    FirstColumn,
    /// Average of `Q - Q_{-i}` over the columns sharing the first column's
    /// class. These are identically distributed, so the expectation is
    /// unchanged while the variance drops.
    #[default]
    ClassAverage,
}

/// `Q - Q_{-i} = Q x_i x_i^T Q / (n + x_i^T Q x_i)`, averaged over `cols`,
/// evaluated through the eigendecomposition of `K`.
fn mean_rank_one_difference(s: &ResolventSample, z: Complex64, cols: &[usize]) -> Result<CMatrix> {
    let w = s.resolvent_weights(z)?;
    let u = s.eigenvectors();
    let n = s.n() as f64;
    // B = U^T X_J, so x_i^T Q x_i = Σ_k w_k B_ki^2 and Q x_i = U (w ⊙ B_i)
    let b = u.transpose() * s.x().select_columns(cols);
    let pivots = b
        .column_iter()
        .map(|col| {
            let quad: Complex64 = col.iter().zip(&w).map(|(bk, wk)| wk * (bk * bk)).sum();
            let pivot = quad + n;
            if pivot.norm() < PIVOT_TOL * n {
                return Err(Error::DegeneratePivot(pivot.norm() / n));
            }
            Ok(pivot)
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = cols.len() as f64;
    if w.iter().all(|v| v.im == 0.0) && pivots.iter().all(|v| v.im == 0.0) {
        let mut wb = b;
        for (k, mut row) in wb.row_iter_mut().enumerate() {
            row *= w[k].re;
        }
        let y = u * wb;
        let mut scaled = y.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= pivots[j].re * scale;
        }
        return Ok(to_complex(&(y * scaled.transpose())));
    }
    let wb = CMatrix::from_fn(b.nrows(), b.ncols(), |k, j| w[k] * b[(k, j)]);
    let y = to_complex(u) * wb;
    let mut scaled = y.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= pivots[j] * scale;
    }
    Ok(y * scaled.transpose())
}

/// Spectral norm of the Monte Carlo mean of `Q - Q_{-1}` across sizes.
pub fn leave_one_out_rate_check<E>(
    family: E,
    z: Complex64,
    n_list: &[usize],
    n_draws: usize,
    estimator: LooEstimator,
    opts: &VerifyOptions,
) -> Result<ScalingTable>
where
    E: Fn(usize) -> Result<ColumnEnsemble>,
{
    if n_draws == 0 {
        return Err(Error::Config("at least one draw is required".into()));
    }
    let mut rows = Vec::new();
    for &n in n_list {
        let ens = family(n)?;
        let p = ens.p();
        let cols: Vec<usize> = match estimator {
            LooEstimator::FirstColumn => vec![0],
            LooEstimator::ClassAverage => {
                let k0 = ens.assignment()[0];
                (0..ens.n())
                    .filter(|&i| ens.assignment()[i] == k0)
                    .collect()
            }
        };
        let sum = try_fold_blocks(
            opts.exec,
            n_draws,
            || CMatrix::zeros(p, p),
            |acc, d| {
                let s = ResolventSample::new(ens.sample_matrix(d as u64));
                let diff = mean_rank_one_difference(&s, z, &cols).map_err(|e| Error::at(d, e))?;
                Ok::<_, Error>(acc + diff)
            },
            |a, b| a + b,
        )?;
        rows.push(ScalingRow {
            n: ens.n(),
            p,
            value: spectral_norm_c(&(sum / Complex64::new(n_draws as f64, 0.0))),
            noise: None,
        });
    }
    let [lo, hi] = BAND_INVERSE;
    Ok(ScalingTable::new("leave_one_out_mean_spectral", ScalingAxis::N, rows)?.with_band(lo, hi))
}

/// Fraction of fresh draws whose spectrum lies in the event `A_eps` of
/// `stats`.
pub fn event_a_eps_frequency(
    ens: &ColumnEnsemble,
    stats: &SpectrumStats,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::Config("at least one draw is required".into()));
    }
    if stats.mean_eigenvalues.len() != ens.p() {
        return Err(Error::Dimension {
            what: "mean spectrum length",
            expected: ens.p(),
            got: stats.mean_eigenvalues.len(),
        });
    }
    let hits = map_indices(opts.exec, n_draws, |d| {
        let x = ens.sample_matrix(EVENT_DRAW_OFFSET + d as u64);
        stats.in_event(&sym_eigenvalues_desc(&gram_scaled(&x)))
    });
    Ok(hits.iter().filter(|&&h| h).count() as f64 / n_draws as f64)
}
