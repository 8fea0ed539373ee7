//! Per-draw resolvent evaluation.
//!
//! A [`ResolventSample`] eigendecomposes `K = (1/n) X X^T` once; every
//! evaluation at a new `z` then costs `O(p^2)` (matrices) or `O(p)` (traces).

use num_complex::Complex64;

use crate::linalg::{gram_scaled, reconstruct, reconstruct_c, sym_eigen_desc, to_complex};
use crate::{CMatrix, Error, RMatrix, RVector, Result};

/// Relative distance below which `z` counts as an eigenvalue.
pub const SINGULAR_REL_TOL: f64 = 1e-12;
/// Guard on the Schur-identity denominator.
pub const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub z: Complex64,
    pub dist_to_spectrum: f64,
}

#[derive(Debug, Clone)]
pub struct ResolventSample {
    x: RMatrix,
    k: RMatrix,
    eigenvalues: Vec<f64>,
    eigenvectors: RMatrix,
}

impl ResolventSample {
    pub fn new(x: RMatrix) -> Self {
        let k = gram_scaled(&x);
        let (vals, vecs) = sym_eigen_desc(&k);
        // K is PSD; clip rounding noise below zero
        let eigenvalues = vals.iter().map(|&l| l.max(0.0)).collect();
        Self {
            x,
            k,
            eigenvalues,
            eigenvectors: vecs,
        }
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }
    pub fn n(&self) -> usize {
        self.x.ncols()
    }
    pub fn x(&self) -> &RMatrix {
        &self.x
    }
    /// `(1/n) X X^T`.
    pub fn gram(&self) -> &RMatrix {
        &self.k
    }
    /// Decreasing eigenvalues of `K`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn eigenvectors(&self) -> &RMatrix {
        &self.eigenvectors
    }
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// `||K - U Λ U^T||_F / ||K||_F` (0 for `K = 0`).
    pub fn reconstruction_error(&self) -> f64 {
        let rec = reconstruct(&self.eigenvectors, &self.eigenvalues);
        let norm = self.k.norm();
        if norm == 0.0 {
            rec.norm()
        } else {
            (rec - &self.k).norm() / norm
        }
    }

    pub fn dist_to_spectrum(&self, z: Complex64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| (z - l).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spectral_point(&self, z: Complex64) -> SpectralPoint {
        SpectralPoint {
            z,
            dist_to_spectrum: self.dist_to_spectrum(z),
        }
    }

    fn check_regular(&self, z: Complex64) -> Result<()> {
        let dist = self.dist_to_spectrum(z);
        if dist < SINGULAR_REL_TOL * self.lambda_max().max(1.0) {
            return Err(Error::SingularPoint { z, dist });
        }
        Ok(())
    }

    /// `1/(z - λ_k)` for every eigenvalue.
    pub fn resolvent_weights(&self, z: Complex64) -> Result<Vec<Complex64>> {
        self.check_regular(z)?;
        Ok(self.eigenvalues.iter().map(|&l| (z - l).inv()).collect())
    }

    /// `Q^z = (zI - K)^{-1}`.
    pub fn resolvent(&self, z: Complex64) -> Result<CMatrix> {
        Ok(reconstruct_c(
            &self.eigenvectors,
            &self.resolvent_weights(z)?,
        ))
    }

    /// `(1/p) tr Q^z` (positive-sign convention).
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        let w = self.resolvent_weights(z)?;
        Ok(w.iter().sum::<Complex64>() / self.p() as f64)
    }

    /// Diagonal of `U^T A U`, used to evaluate `tr(A Q^z)` in `O(p)`.
    pub fn projected_diagonal(&self, a: &RMatrix) -> Vec<f64> {
        let au = a * &self.eigenvectors;
        (0..self.p())
            .map(|k| self.eigenvectors.column(k).dot(&au.column(k)))
            .collect()
    }

    /// `tr(A Q^z)` given `diag(U^T A U)`.
    pub fn trace_with(&self, projected: &[f64], z: Complex64) -> Result<Complex64> {
        let w = self.resolvent_weights(z)?;
        Ok(w.iter().zip(projected).map(|(wk, d)| wk * d).sum())
    }

    pub fn trace_a_resolvent(&self, a: &RMatrix, z: Complex64) -> Result<Complex64> {
        self.trace_with(&self.projected_diagonal(a), z)
    }

    /// Squared overlaps `<u, v_k>^2` with the eigenvectors.
    pub fn overlaps(&self, u: &RVector) -> Vec<f64> {
        (self.eigenvectors.transpose() * u)
            .iter()
            .map(|c| c * c)
            .collect()
    }

    /// `|Q^z|^2 = (Im(z)^2 + (Re(z) - K)^2)^{-1}`.
    pub fn abs_resolvent_sq(&self, z: Complex64) -> Result<RMatrix> {
        let w: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&l| z.im * z.im + (z.re - l) * (z.re - l))
            .collect();
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = SINGULAR_REL_TOL * self.lambda_max().max(1.0);
        if min.sqrt() < tol {
            return Err(Error::SingularPoint {
                z,
                dist: min.sqrt(),
            });
        }
        Ok(reconstruct(
            &self.eigenvectors,
            &w.iter().map(|v| 1.0 / v).collect::<Vec<_>>(),
        ))
    }

    /// Relative Frobenius residual of
    /// `Q^z = (Re(z) I - K) |Q^z|^2 - i Im(z) |Q^z|^2`, with `Q^z` from the
    /// eigendecomposition and the right side assembled from `K` directly.
    pub fn decomposition_residual(&self, z: Complex64) -> Result<f64> {
        let q = self.resolvent(z)?;
        let m = self.abs_resolvent_sq(z)?;
        let p = self.p();
        let shifted = RMatrix::identity(p, p) * z.re - &self.k;
        let re = &shifted * &m;
        let im = &m * (-z.im);
        let rhs = CMatrix::from_fn(p, p, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
        Ok(frob_rel(&q, &rhs))
    }

    /// `||(zI - K) Q^z - I||_F / ||I||_F`.
    pub fn inverse_residual(&self, z: Complex64) -> Result<f64> {
        let q = self.resolvent(z)?;
        let p = self.p();
        let a = CMatrix::identity(p, p) * z - to_complex(&self.k);
        Ok(frob_rel(&(a * q), &CMatrix::identity(p, p)))
    }

    /// Copy of `X` with column `i` (0-based) zeroed.
    pub fn without_column(&self, i: usize) -> Result<ResolventSample> {
        if i >= self.n() {
            return Err(Error::Config(format!(
                "column {i} out of range for n = {}",
                self.n()
            )));
        }
        let mut x = self.x.clone();
        x.column_mut(i).fill(0.0);
        Ok(ResolventSample::new(x))
    }

    /// `Q_{-i}^z` through an independent eigendecomposition of `X_{-i}`.
    pub fn leave_one_out(&self, i: usize, z: Complex64) -> Result<CMatrix> {
        self.without_column(i)?.resolvent(z)
    }

    /// `Q^z - Q_{-i}^z = Q x x^T Q / (n + x^T Q x)` by a rank-one update of `Q`.
    pub fn leave_one_out_difference(&self, i: usize, z: Complex64) -> Result<CMatrix> {
        let q = self.resolvent(z)?;
        self.leave_one_out_difference_with(&q, i)
    }

    /// Same as [`Self::leave_one_out_difference`] reusing a computed `Q^z`.
    pub fn leave_one_out_difference_with(&self, q: &CMatrix, i: usize) -> Result<CMatrix> {
        let x = self.x.column(i).map(|v| Complex64::new(v, 0.0));
        let qx = q * &x;
        let denom = Complex64::new(self.n() as f64, 0.0) + (x.transpose() * &qx)[(0, 0)];
        if denom.norm() < PIVOT_TOL * self.n() as f64 {
            return Err(Error::DegeneratePivot(denom.norm() / self.n() as f64));
        }
        Ok(&qx * qx.transpose() / denom)
    }

    /// Relative residual of `Q x_i = Q_{-i} x_i / (1 - x_i^T Q_{-i} x_i / n)`.
    /// Both resolvents come from separate eigendecompositions.
    pub fn schur_check(&self, i: usize, z: Complex64) -> Result<f64> {
        let q = self.resolvent(z)?;
        let q_minus = self.leave_one_out(i, z)?;
        let x = self.x.column(i).map(|v| Complex64::new(v, 0.0));
        let lhs = &q * &x;
        let qmx = &q_minus * &x;
        let pivot = Complex64::new(1.0, 0.0) - (x.transpose() * &qmx)[(0, 0)] / self.n() as f64;
        if pivot.norm() < PIVOT_TOL {
            return Err(Error::DegeneratePivot(pivot.norm()));
        }
        let rhs = qmx / pivot;
        let scale = lhs.norm();
        let diff = (&lhs - &rhs).norm();
        Ok(if scale == 0.0 { diff } else { diff / scale })
    }

    /// `(1/z) Σ_{i=0}^{m} (K/z)^i`, evaluated by Horner's rule on `K`.
    pub fn neumann_partial(&self, z: Complex64, m_terms: usize) -> Result<CMatrix> {
        let lmax = self.lambda_max();
        if z.norm() <= lmax {
            return Err(Error::Divergence {
                modulus: z.norm(),
                lambda_max: lmax,
            });
        }
        let p = self.p();
        let kz = to_complex(&self.k) / z;
        let id = CMatrix::identity(p, p);
        let mut acc = id.clone();
        for _ in 0..m_terms {
            acc = &id + &kz * acc;
        }
        Ok(acc / z)
    }

    /// Geometric bound `(λ_1/|z|)^{m+1} / (|z| - λ_1)` on the spectral-norm
    /// truncation error of [`Self::neumann_partial`].
    pub fn neumann_error_bound(&self, z: Complex64, m_terms: usize) -> f64 {
        let r = z.norm();
        let l = self.lambda_max();
        (l / r).powi(m_terms as i32 + 1) / (r - l)
    }
}

fn frob_rel(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let scale: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if scale == 0.0 {
        diff.sqrt()
    } else {
        (diff / scale).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{BaseLaw, ColumnEnsemble};
    use crate::linalg::spectral_norm_c;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn draw(p: usize, n: usize, seed: u64) -> ResolventSample {
        let ens = ColumnEnsemble::isotropic(p, n, BaseLaw::UniformCentered, seed).unwrap();
        ResolventSample::new(ens.sample_matrix(0))
    }

    #[test]
    fn zero_matrix_resolvent() {
        let s = ResolventSample::new(RMatrix::zeros(3, 4));
        let q = s.resolvent(c(2.0, 0.0)).unwrap();
        assert!((q - CMatrix::identity(3, 3) * c(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(s.stieltjes(c(2.0, 0.0)).unwrap(), c(0.5, 0.0));
        let m = s.abs_resolvent_sq(c(0.0, 1.0)).unwrap();
        assert!((m - RMatrix::identity(3, 3)).norm() < 1e-15);
        let m = s.abs_resolvent_sq(c(3.0, 4.0)).unwrap();
        assert!((m - RMatrix::identity(3, 3) / 25.0).norm() < 1e-15);
    }

    #[test]
    fn scalar_resolvent() {
        let s = ResolventSample::new(RMatrix::from_element(1, 1, 2.0));
        assert_eq!(s.eigenvalues(), &[4.0]);
        let q = s.resolvent(c(5.0, 0.0)).unwrap();
        assert!((q[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn shared_eigenvalue_stieltjes() {
        // K = I: X = sqrt(n) I_p padded
        let s = ResolventSample::new(RMatrix::identity(2, 2) * 2f64.sqrt());
        let g = s.stieltjes(c(1.0, 1.0)).unwrap();
        assert!((g - c(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_point_is_an_error() {
        let s = ResolventSample::new(RMatrix::from_element(1, 1, 2.0));
        assert!(matches!(
            s.resolvent(c(4.0, 0.0)),
            Err(Error::SingularPoint { .. })
        ));
        assert!(s.abs_resolvent_sq(c(4.0, 0.0)).is_err());
        assert!(s.abs_resolvent_sq(c(4.0, 0.1)).is_ok());
    }

    #[test]
    fn norm_equals_inverse_distance() {
        let s = draw(8, 16, 3);
        let z = c(-1.0, 0.0);
        let q = s.resolvent(z).unwrap();
        let oracle = 1.0
            / s.eigenvalues()
                .iter()
                .map(|l| (z - l).norm())
                .fold(f64::INFINITY, f64::min);
        assert!((spectral_norm_c(&q) - oracle).abs() < 1e-12);
        assert!((s.spectral_point(z).dist_to_spectrum - 1.0 / oracle).abs() < 1e-15);
    }

    #[test]
    fn eigendecomposition_accuracy() {
        let s = draw(24, 40, 5);
        assert!(s.reconstruction_error() <= 1e-12);
        assert!(s.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn decomposition_two_ways() {
        let s = draw(10, 20, 8);
        for z in [c(0.1, 0.3), c(-1.0, 2.0), c(2.0, -0.5)] {
            assert!(s.decomposition_residual(z).unwrap() < 1e-10);
        }
    }

    #[test]
    fn lone_column_removed() {
        let s = ResolventSample::new(RMatrix::from_column_slice(2, 1, &[0.3, -0.2]));
        let q = s.leave_one_out(0, c(1.5, 0.0)).unwrap();
        assert!((q - CMatrix::identity(2, 2) / c(1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn column_removal_is_rank_one() {
        let s = draw(6, 9, 2);
        let minus = s.without_column(4).unwrap();
        let diff = s.gram() - minus.gram();
        let sv = diff.singular_values();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[1] < 1e-14 * sorted[0].max(1.0));
    }

    #[test]
    fn resolvent_identity_bound() {
        let s = draw(12, 20, 4);
        let z = c(-0.5, 0.2);
        for i in [0, 7, 19] {
            let q = s.resolvent(z).unwrap();
            let qm = s.leave_one_out(i, z).unwrap();
            let xi = s.x().column(i).norm_squared();
            let bound = spectral_norm_c(&q) * spectral_norm_c(&qm) * xi / s.n() as f64;
            assert!(spectral_norm_c(&(&q - &qm)) <= bound * (1.0 + 1e-12));
            let upd = s.leave_one_out_difference(i, z).unwrap();
            assert!(((&q - &qm) - upd).norm() < 1e-12);
        }
    }

    #[test]
    fn schur_scalar_and_zero() {
        let s = ResolventSample::new(RMatrix::from_element(1, 1, 2.0));
        // Q x = 1 * 2 and Q_-1 x / (1 - x Q_-1 x) = 0.4 / 0.2 = 2
        assert!(s.schur_check(0, c(5.0, 0.0)).unwrap() < 1e-15);
        let z = ResolventSample::new(RMatrix::zeros(2, 3));
        assert_eq!(z.schur_check(1, c(1.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn schur_random() {
        let s = draw(16, 32, 11);
        for i in 0..32 {
            assert!(s.schur_check(i, c(-0.5, 0.0)).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn pivot_at_eigenvalue_errors() {
        // the pivot 1 - x^2/z vanishes exactly when z hits the eigenvalue 4
        let s = ResolventSample::new(RMatrix::from_element(1, 1, 2.0));
        let err = s.schur_check(0, c(4.0, 0.0));
        assert!(err.is_err());
    }

    #[test]
    fn neumann_partial_sums() {
        let zero = ResolventSample::new(RMatrix::zeros(3, 3));
        let q = zero.neumann_partial(c(2.0, 1.0), 5).unwrap();
        assert_eq!(q, CMatrix::identity(3, 3) / c(2.0, 1.0));
        let s = draw(10, 30, 6);
        assert!(matches!(
            s.neumann_partial(c(s.lambda_max() * 0.5, 0.0), 3),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn neumann_bound_quarter_edge() {
        // K with λ_1 = 0.25 exactly: X = diag(0.5, 0.3) with n = 1 ... use n = 2 columns
        let x = RMatrix::from_row_slice(2, 2, &[0.5 * 2f64.sqrt(), 0.0, 0.0, 0.3]);
        let s = ResolventSample::new(x);
        assert!((s.lambda_max() - 0.25).abs() < 1e-15);
        let z = c(1.0, 0.0);
        let exact = s.resolvent(z).unwrap();
        let approx = s.neumann_partial(z, 10).unwrap();
        let err = spectral_norm_c(&(exact - approx));
        let bound = s.neumann_error_bound(z, 10);
        assert!((bound - 0.25f64.powi(11) / 0.75).abs() < 1e-20);
        assert!(err <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn neumann_error_decays_geometrically() {
        let s = draw(8, 16, 1);
        let z = c(1.5 * s.lambda_max() + 0.1, 0.2);
        let exact = s.resolvent(z).unwrap();
        let ratio = s.lambda_max() / z.norm();
        let errs: Vec<f64> = (2..12)
            .map(|m| spectral_norm_c(&(&exact - s.neumann_partial(z, m).unwrap())))
            .collect();
        for (m, e) in (2..12).zip(&errs) {
            assert!(*e <= s.neumann_error_bound(z, m) * (1.0 + 1e-9));
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[1] / w[0] - ratio).abs() < 0.05);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn resolvent_invariants(seed in any::<u64>(), re in -2.0f64..2.0, im in 0.05f64..2.0) {
            let s = draw(6, 10, seed);
            let z = c(re, im);
            prop_assert!(s.inverse_residual(z).unwrap() < 1e-10);
            let q = s.resolvent(z).unwrap();
            let qc = s.resolvent(z.conj()).unwrap();
            prop_assert!((q.map(|v| v.conj()) - qc).norm() < 1e-13);
            // ||Q|| <= 2/eps whenever dist >= eps/2
            let eps = 2.0 * s.dist_to_spectrum(z);
            prop_assert!(spectral_norm_c(&q) <= 2.0 / eps * (1.0 + 1e-12));
            prop_assert!(s.decomposition_residual(z).unwrap() < 1e-10);
            for i in 0..10 {
                prop_assert!(s.schur_check(i, z).unwrap() < 1e-10);
            }
        }
    }
}
