//! Exact algebraic identities, checked to rounding accuracy.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{BaseLaw, ColumnEnsemble};
use crate::linalg::spectral_norm_c;
use crate::par::try_map_indices;
use crate::resolvent::ResolventSample;
use crate::rng::stream_rng;
use crate::{Error, RMatrix, Result};

use super::VerifyOptions;

/// The permutation sum has `m!` terms.
pub const MAX_ROTA_ORDER: usize = 8;

/// Relative Frobenius deviation between
/// `Σ_{σ ∈ S_m} a_σ(1) ⋯ a_σ(m)` and
/// `(-1)^m Σ_{I ⊂ [m]} (-1)^{|I|} (Σ_{i ∈ I} a_i)^m`.
pub fn rota_identity_check(a_list: &[RMatrix], m: usize) -> Result<f64> {
    if m == 0 || m > MAX_ROTA_ORDER {
        return Err(Error::Config(format!(
            "Rota check needs 1 <= m <= {MAX_ROTA_ORDER}, got {m}"
        )));
    }
    if a_list.len() != m {
        return Err(Error::Dimension {
            what: "number of matrices",
            expected: m,
            got: a_list.len(),
        });
    }
    let d = a_list[0].nrows();
    if let Some(bad) = a_list.iter().find(|a| a.nrows() != d || a.ncols() != d) {
        return Err(Error::Dimension {
            what: "square matrix size",
            expected: d,
            got: bad.ncols(),
        });
    }
    let mut lhs = RMatrix::zeros(d, d);
    let mut used = vec![false; m];
    permutation_sum(a_list, &RMatrix::identity(d, d), &mut used, 0, &mut lhs);

    let mut rhs = RMatrix::zeros(d, d);
    for mask in 0u32..(1 << m) {
        let mut s = RMatrix::zeros(d, d);
        for (i, a) in a_list.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += a;
            }
        }
        let mut power = RMatrix::identity(d, d);
        for _ in 0..m {
            power = &power * &s;
        }
        if (m as u32 + mask.count_ones()).is_multiple_of(2) {
            rhs += power;
        } else {
            rhs -= power;
        }
    }
    let scale = lhs.norm();
    let diff = (&lhs - &rhs).norm();
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// Depth-first enumeration of ordered products without repetition.
fn permutation_sum(
    a: &[RMatrix],
    prefix: &RMatrix,
    used: &mut [bool],
    depth: usize,
    out: &mut RMatrix,
) {
    if depth == a.len() {
        *out += prefix;
        return;
    }
    for i in 0..a.len() {
        if !used[i] {
            used[i] = true;
            permutation_sum(a, &(prefix * &a[i]), used, depth + 1, out);
            used[i] = false;
        }
    }
}

/// `(||Q - Q_{-i}||, ||Q|| ||Q_{-i}|| ||x_i||² / n)`; the first never
/// exceeds the second.
pub fn leave_one_out_bound(s: &ResolventSample, i: usize, z: Complex64) -> Result<(f64, f64)> {
    let q = s.resolvent(z)?;
    let q_minus = s.leave_one_out(i, z)?;
    let lhs = spectral_norm_c(&(&q - &q_minus));
    let x2 = s.x().column(i).norm_squared();
    Ok((
        lhs,
        spectral_norm_c(&q) * spectral_norm_c(&q_minus) * x2 / s.n() as f64,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitySuiteConfig {
    pub p: usize,
    pub n: usize,
    pub draws: usize,
    /// Evaluation points as `[re, im]`.
    pub z: Vec<[f64; 2]>,
    pub rota_orders: Vec<usize>,
    pub rota_dim: usize,
    pub seed: u64,
    pub resolvent_tol: f64,
    pub rota_tol: f64,
}

impl Default for IdentitySuiteConfig {
    fn default() -> Self {
        Self {
            p: 16,
            n: 32,
            draws: 100,
            z: vec![[-1.0, 0.0], [2.0, 0.5]],
            rota_orders: vec![1, 2, 3, 4],
            rota_dim: 3,
            seed: 0,
            resolvent_tol: 1e-10,
            rota_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub draws: usize,
    /// Largest relative residual of `Q x_i = Q_{-i} x_i / (1 - x_i^T Q_{-i} x_i / n)`.
    pub schur_max: f64,
    /// Largest relative residual of `Q = (Re z - K)|Q|² - i Im z |Q|²`.
    pub decomposition_max: f64,
    /// Largest `||(zI - K) Q - I||_F / sqrt(p)`.
    pub inverse_max: f64,
    /// Draws where the per-draw leave-one-out bound failed.
    pub leave_one_out_violations: usize,
    /// `(m, deviation)` per Rota order.
    pub rota: Vec<(usize, f64)>,
    pub resolvent_tol: f64,
    pub rota_tol: f64,
    pub passed: bool,
}

/// Largest Schur, decomposition and inverse residuals of one draw over
/// `zs`, plus the number of leave-one-out bound failures.
fn draw_residuals(ens: &ColumnEnsemble, zs: &[Complex64], d: usize) -> Result<([f64; 3], usize)> {
    let s = ResolventSample::new(ens.sample_matrix(d as u64));
    let col = d % ens.n();
    let mut out = [0.0f64; 3];
    let mut violations = 0usize;
    for &z in zs {
        out[0] = out[0].max(s.schur_check(col, z)?);
        out[1] = out[1].max(s.decomposition_residual(z)?);
        out[2] = out[2].max(s.inverse_residual(z)?);
        let (lhs, rhs) = leave_one_out_bound(&s, col, z)?;
        if lhs > rhs * (1.0 + 1e-10) {
            violations += 1;
        }
    }
    Ok((out, violations))
}

/// Resolvent identities on random draws plus Rota's formula on random
/// square matrices.
pub fn identity_suite(cfg: &IdentitySuiteConfig, opts: &VerifyOptions) -> Result<IdentityReport> {
    if cfg.draws == 0 || cfg.z.is_empty() {
        return Err(Error::Config(
            "identity suite needs draws and evaluation points".into(),
        ));
    }
    let ens = ColumnEnsemble::isotropic(cfg.p, cfg.n, BaseLaw::UniformCentered, cfg.seed)?;
    let zs: Vec<Complex64> = cfg.z.iter().map(|z| Complex64::new(z[0], z[1])).collect();
    let per_draw = try_map_indices(opts.exec, cfg.draws, |d| {
        draw_residuals(&ens, &zs, d).map_err(|e| Error::at(d, e))
    })?;
    let pick = |k: usize| per_draw.iter().map(|r| r.0[k]).fold(0.0, f64::max);
    let (schur_max, decomposition_max, inverse_max) = (pick(0), pick(1), pick(2));
    let leave_one_out_violations = per_draw.iter().map(|r| r.1).sum();

    let mut rota = Vec::new();
    for &m in &cfg.rota_orders {
        let mut rng = stream_rng(cfg.seed, m as u64, u64::MAX);
        let mats: Vec<RMatrix> = (0..m)
            .map(|_| {
                RMatrix::from_fn(cfg.rota_dim, cfg.rota_dim, |_, _| {
                    rng.random_range(-1.0..1.0)
                })
            })
            .collect();
        rota.push((m, rota_identity_check(&mats, m)?));
    }
    let passed = schur_max <= cfg.resolvent_tol
        && decomposition_max <= cfg.resolvent_tol
        && inverse_max <= cfg.resolvent_tol
        && leave_one_out_violations == 0
        && rota.iter().all(|r| r.1 <= cfg.rota_tol);
    Ok(IdentityReport {
        draws: cfg.draws,
        schur_max,
        decomposition_max,
        inverse_max,
        leave_one_out_violations,
        rota,
        resolvent_tol: cfg.resolvent_tol,
        rota_tol: cfg.rota_tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> RMatrix {
        RMatrix::from_element(1, 1, v)
    }

    #[test]
    fn rota_small_cases() {
        assert_eq!(rota_identity_check(&[scalar(3.0)], 1).unwrap(), 0.0);
        // 2 * (1 * 2) = 4 = (1 + 2)^2 - 1 - 4
        assert!(rota_identity_check(&[scalar(1.0), scalar(2.0)], 2).unwrap() < 1e-15);
        assert!(rota_identity_check(&[scalar(1.0)], 2).is_err());
        assert!(rota_identity_check(&vec![scalar(1.0); 9], 9).is_err());
    }

    #[test]
    fn rota_noncommuting() {
        let a = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        // ab + ba = I
        assert!(rota_identity_check(&[a, b], 2).unwrap() < 1e-15);
    }

    #[test]
    fn suite_passes_default_tolerances() {
        let cfg = IdentitySuiteConfig {
            draws: 10,
            ..Default::default()
        };
        let r = identity_suite(&cfg, &VerifyOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.rota.len(), 4);
    }

    proptest! {
        #[test]
        fn rota_holds_for_random_matrices(
            m in 1usize..=5,
            entries in prop::collection::vec(-1.0f64..1.0, 5 * 9),
        ) {
            let mats: Vec<RMatrix> = (0..m)
                .map(|k| RMatrix::from_row_slice(3, 3, &entries[9 * k..9 * k + 9]))
                .collect();
            let dev = rota_identity_check(&mats, m).unwrap();
            // the permutation sum itself can nearly cancel; compare on an
            // absolute scale when it does
            let lhs_scale: f64 = mats.iter().map(|a| a.norm()).product();
            prop_assume!(lhs_scale > 1e-3);
            prop_assert!(dev < 1e-9, "m={} dev={}", m, dev);
        }
    }
}
