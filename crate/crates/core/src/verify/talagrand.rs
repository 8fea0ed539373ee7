//! Direct check of the convex concentration inequality for bounded entries:
//! `P(|f(Z) - E f(Z)| >= t) <= 2 exp(-t²/4)` for every convex 1-Lipschitz `f`
//! when `Z` has independent entries in an interval of length one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ensembles::{ColumnEnsemble, Factor};
use crate::{Error, Result};

use super::functional::{sample_functional, ConvexObservable, FunctionalSpec};
use super::stats::ConcentrationReport;
use super::{VerifyOptions, NORM_SLACK};

pub const TALAGRAND_T: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

pub fn talagrand_bound(t: f64) -> f64 {
    2.0 * (-t * t / 4.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalagrandRow {
    pub t: f64,
    pub tail: f64,
    pub bound: f64,
    /// Binomial standard error at the bound, `sqrt(b (1 - b) / N)` with `b`
    /// clipped to `[0, 1]`.
    pub standard_error: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalagrandReport {
    pub report: ConcentrationReport,
    pub rows: Vec<TalagrandRow>,
    pub passed: bool,
}

/// Measures `f` on the whole draw `X` (viewed as a vector of `p n` entries)
/// and compares its tails with the bound.
///
/// Every column must be `x = mu + A w` with `||A|| <= 1` and `w` supported
/// on an interval of length at most one, so that `f(mu + A w)` stays convex
/// and 1-Lipschitz in the independent entries `w`.
pub fn talagrand_direct_check(
    ens: &ColumnEnsemble,
    f: Arc<dyn ConvexObservable>,
    n_draws: usize,
    opts: &VerifyOptions,
) -> Result<TalagrandReport> {
    if f.lipschitz() > 1.0 + NORM_SLACK {
        return Err(Error::Config(format!(
            "{} is declared {}-Lipschitz; the bound needs 1",
            f.name(),
            f.lipschitz()
        )));
    }
    for (k, c) in ens.classes().iter().enumerate() {
        let (lo, hi) = c.base.support();
        let contraction = match &c.factor {
            Factor::Identity => 1.0,
            Factor::Matrix(_) => c.factor_norm(),
        };
        if hi - lo > 1.0 + NORM_SLACK || contraction > 1.0 + NORM_SLACK {
            return Err(Error::Config(format!(
                "class {k}: entries must span at most [0, 1] through a contraction (width {}, ||A|| = {contraction})",
                hi - lo
            )));
        }
    }
    let spec = FunctionalSpec::ConvexLipschitz(f);
    let (samples, _) = sample_functional(ens, &spec, n_draws, None, opts)?;
    let mut report = ConcentrationReport::from_samples(
        spec.info(),
        &samples,
        (ens.p(), ens.n()),
        ens.seed(),
        opts.ordered,
    );
    report.warnings.extend(ens.warnings().iter().cloned());
    let nf = samples.len() as f64;
    let rows: Vec<TalagrandRow> = TALAGRAND_T
        .iter()
        .map(|&t| {
            let hits = samples
                .iter()
                .filter(|&&v| (v - report.mean).abs() >= t)
                .count();
            let tail = hits as f64 / nf;
            let bound = talagrand_bound(t);
            let b = bound.clamp(0.0, 1.0);
            let standard_error = (b * (1.0 - b) / nf).sqrt();
            TalagrandRow {
                t,
                tail,
                bound,
                standard_error,
                ok: tail <= bound + 3.0 * standard_error,
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.ok);
    Ok(TalagrandReport {
        report,
        rows,
        passed,
    })
}
