//! Small dense helpers on top of nalgebra.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::{CMatrix, Error, RMatrix, RVector, Result};

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen_desc(m: &RMatrix) -> (RVector, RMatrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = RVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = RMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, decreasing.
pub fn sym_eigenvalues_desc(m: &RMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn frobenius_c(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &RMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0, |a: f64, &b| a.max(b))
}

pub fn spectral_norm_c(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b))
}

pub fn inverse_c(m: CMatrix) -> Result<CMatrix> {
    m.try_inverse().ok_or(Error::Singular)
}

/// `(1/n) X X^T`, symmetrised to kill rounding asymmetry.
pub fn gram_scaled(x: &RMatrix) -> RMatrix {
    let n = x.ncols().max(1) as f64;
    let mut k = x * x.transpose() / n;
    let p = k.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let s = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = s;
            k[(j, i)] = s;
        }
    }
    k
}

/// `U diag(w) U^T` for real `U` and complex weights, as two real products.
pub fn reconstruct_c(u: &RMatrix, w: &[Complex64]) -> CMatrix {
    let re: Vec<f64> = w.iter().map(|v| v.re).collect();
    let a = reconstruct(u, &re);
    if w.iter().all(|v| v.im == 0.0) {
        return a.map(|x| Complex64::new(x, 0.0));
    }
    let im: Vec<f64> = w.iter().map(|v| v.im).collect();
    let b = reconstruct(u, &im);
    a.zip_map(&b, Complex64::new)
}

/// `U diag(w) U^T` for real `U` and real weights.
pub fn reconstruct(u: &RMatrix, w: &[f64]) -> RMatrix {
    let scaled = RMatrix::from_fn(u.nrows(), u.ncols(), |i, k| u[(i, k)] * w[k]);
    let mut out = &scaled * u.transpose();
    let p = out.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let s = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of `y` on `x`. The slope's standard error is zero
/// when only two points are given.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        slope_se: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = RMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rec = reconstruct(&vecs, vals.as_slice());
        assert!((rec - &m).norm() < 1e-13);
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -0.5 * v + 2.0).collect();
        let LineFit {
            slope: s,
            slope_se: se,
            ..
        } = ols_fit(&x, &y).unwrap();
        assert!((s + 0.5).abs() < 1e-14);
        assert!(se < 1e-14);
        assert!(ols_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
