//! Column ensembles `X = (x_1, ..., x_n)` with independent columns
//! `x_i = mu_i + A_i w_i`, where `w_i` has i.i.d. bounded entries.
//!
//! Bounded independent entries are convexly concentrated (Talagrand), and
//! affine images keep that property, so every ensemble built here meets the
//! convex-concentration hypothesis. Columns are grouped into classes that
//! share a [`ColumnModel`]; population covariances are stored per class.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detequiv::CovarianceFamily;
use crate::linalg::{gram_scaled, spectral_norm, sym_eigenvalues_desc};
use crate::par::{map_indices, Execution};
use crate::rng::stream_rng;
use crate::{matrix_io, Error, RMatrix, RVector, Result};

/// Column means above this norm are flagged (bounded-mean assumption).
pub const MEAN_NORM_WARNING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLaw {
    /// Uniform on `[-1/2, 1/2]`.
    UniformCentered,
    /// `±1/2` with equal probability.
    RademacherHalf,
    /// Uniform on `[0, 1]`.
    UniformUnit,
}

impl BaseLaw {
    pub fn mean(self) -> f64 {
        match self {
            BaseLaw::UniformCentered | BaseLaw::RademacherHalf => 0.0,
            BaseLaw::UniformUnit => 0.5,
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            BaseLaw::UniformCentered | BaseLaw::UniformUnit => 1.0 / 12.0,
            BaseLaw::RademacherHalf => 0.25,
        }
    }

    /// Closed support interval; always of length at most one.
    pub fn support(self) -> (f64, f64) {
        match self {
            BaseLaw::UniformCentered | BaseLaw::RademacherHalf => (-0.5, 0.5),
            BaseLaw::UniformUnit => (0.0, 1.0),
        }
    }

    /// Largest absolute value an entry can take.
    pub fn sup_abs(self) -> f64 {
        let (a, b) = self.support();
        a.abs().max(b.abs())
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            BaseLaw::UniformCentered => rng.random::<f64>() - 0.5,
            BaseLaw::RademacherHalf => {
                if rng.random::<bool>() {
                    0.5
                } else {
                    -0.5
                }
            }
            BaseLaw::UniformUnit => rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Identity,
    Matrix(RMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnModel {
    pub mean: RVector,
    pub factor: Factor,
    pub base: BaseLaw,
}

impl ColumnModel {
    pub fn isotropic(p: usize, base: BaseLaw) -> Self {
        Self {
            mean: RVector::zeros(p),
            factor: Factor::Identity,
            base,
        }
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// Inner dimension `d` of `w`.
    pub fn inner_dim(&self) -> usize {
        match &self.factor {
            Factor::Identity => self.mean.len(),
            Factor::Matrix(a) => a.ncols(),
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.mean.len() != p {
            return Err(Error::Dimension {
                what: "column mean length",
                expected: p,
                got: self.mean.len(),
            });
        }
        if let Factor::Matrix(a) = &self.factor {
            if a.nrows() != p {
                return Err(Error::Dimension {
                    what: "factor rows",
                    expected: p,
                    got: a.nrows(),
                });
            }
        }
        Ok(())
    }

    /// `E[x]`, including the base-law mean pushed through the factor.
    pub fn expected_column(&self) -> RVector {
        let m = self.base.mean();
        if m == 0.0 {
            return self.mean.clone();
        }
        match &self.factor {
            Factor::Identity => self.mean.add_scalar(m),
            Factor::Matrix(a) => &self.mean + a * RVector::from_element(a.ncols(), m),
        }
    }

    /// `E[x x^T] = Var(w) A A^T + E[x] E[x]^T`.
    pub fn second_moment(&self) -> RMatrix {
        let p = self.p();
        let var = self.base.variance();
        let cov = match &self.factor {
            Factor::Identity => RMatrix::identity(p, p) * var,
            Factor::Matrix(a) => a * a.transpose() * var,
        };
        let m = self.expected_column();
        let mut s = cov + &m * m.transpose();
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Operator norm of the affine factor.
    pub fn factor_norm(&self) -> f64 {
        match &self.factor {
            Factor::Identity => 1.0,
            Factor::Matrix(a) => spectral_norm(a),
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.factor {
            Factor::Identity => {
                for (o, m) in out.iter_mut().zip(self.mean.iter()) {
                    *o = m + self.base.sample(rng);
                }
            }
            Factor::Matrix(a) => {
                let w: Vec<f64> = (0..a.ncols()).map(|_| self.base.sample(rng)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = self.mean[i];
                    for (k, wk) in w.iter().enumerate() {
                        acc += a[(i, k)] * wk;
                    }
                    *o = acc;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColumnEnsemble {
    p: usize,
    n: usize,
    gamma: f64,
    classes: Vec<ColumnModel>,
    assignment: Vec<usize>,
    seed: u64,
    warnings: Vec<String>,
}

impl ColumnEnsemble {
    pub fn new(
        p: usize,
        n: usize,
        gamma: f64,
        classes: Vec<ColumnModel>,
        assignment: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Config("p and n must be positive".into()));
        }
        if classes.is_empty() {
            return Err(Error::Config(
                "at least one column class is required".into(),
            ));
        }
        if assignment.len() != n {
            return Err(Error::Dimension {
                what: "class assignment length",
                expected: n,
                got: assignment.len(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&k| k >= classes.len()) {
            return Err(Error::Config(format!(
                "assignment refers to missing class {bad}"
            )));
        }
        if !(gamma > 0.0) || (p as f64) > gamma * n as f64 {
            return Err(Error::Config(format!(
                "p = {p} exceeds gamma * n = {gamma} * {n}"
            )));
        }
        for c in &classes {
            c.validate(p)?;
        }
        let warnings = classes
            .iter()
            .enumerate()
            .filter_map(|(k, c)| {
                let norm = c.expected_column().norm();
                (norm > MEAN_NORM_WARNING)
                    .then(|| format!("class {k}: ||E[x]|| = {norm:.3} exceeds {MEAN_NORM_WARNING}"))
            })
            .collect();
        Ok(Self {
            p,
            n,
            gamma,
            classes,
            assignment,
            seed,
            warnings,
        })
    }

    /// All columns share one model.
    pub fn homogeneous(p: usize, n: usize, model: ColumnModel, seed: u64) -> Result<Self> {
        let gamma = (p as f64 / n as f64).max(1.0);
        Self::new(p, n, gamma, vec![model], vec![0; n], seed)
    }

    /// i.i.d. entries from `base` (`A = I`, `mu = 0`).
    pub fn isotropic(p: usize, n: usize, base: BaseLaw, seed: u64) -> Result<Self> {
        Self::homogeneous(p, n, ColumnModel::isotropic(p, base), seed)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn classes(&self) -> &[ColumnModel] {
        &self.classes
    }
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &k in &self.assignment {
            counts[k] += 1;
        }
        counts
    }

    pub fn column_model(&self, i: usize) -> &ColumnModel {
        &self.classes[self.assignment[i]]
    }

    /// Bound on the observable diameter of one column, up to the base-law
    /// constant: `max_k ||A_k||`.
    pub fn concentration_scale(&self) -> f64 {
        self.classes
            .iter()
            .map(ColumnModel::factor_norm)
            .fold(0.0, f64::max)
    }

    /// Largest `|x_ij|` any draw can produce when all means vanish.
    pub fn entry_bound(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| {
                let b = c.base.sup_abs();
                let row = match &c.factor {
                    Factor::Identity => b,
                    Factor::Matrix(a) => a
                        .row_iter()
                        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>() * b)
                        .fold(0.0, f64::max),
                };
                row + c.mean.amax()
            })
            .fold(0.0, f64::max)
    }

    /// Post-composes every column with `x -> phi x + offset`.
    pub fn map_affine(&self, phi: &RMatrix, offset: &RVector) -> Result<Self> {
        if phi.ncols() != self.p {
            return Err(Error::Dimension {
                what: "affine map columns",
                expected: self.p,
                got: phi.ncols(),
            });
        }
        if offset.len() != phi.nrows() {
            return Err(Error::Dimension {
                what: "affine offset length",
                expected: phi.nrows(),
                got: offset.len(),
            });
        }
        let classes = self
            .classes
            .iter()
            .map(|c| ColumnModel {
                mean: phi * &c.mean + offset,
                factor: Factor::Matrix(match &c.factor {
                    Factor::Identity => phi.clone(),
                    Factor::Matrix(a) => phi * a,
                }),
                base: c.base,
            })
            .collect();
        let q = phi.nrows();
        let gamma = self.gamma.max(q as f64 / self.n as f64);
        Self::new(
            q,
            self.n,
            gamma,
            classes,
            self.assignment.clone(),
            self.seed,
        )
    }

    /// Draw number `draw_index`; a pure function of `(seed, draw_index)`.
    pub fn sample_matrix(&self, draw_index: u64) -> RMatrix {
        let mut x = RMatrix::zeros(self.p, self.n);
        let mut col = vec![0.0; self.p];
        for i in 0..self.n {
            let mut rng = stream_rng(self.seed, draw_index, i as u64);
            self.column_model(i).sample_into(&mut rng, &mut col);
            x.column_mut(i).copy_from_slice(&col);
        }
        x
    }

    /// `Σ_k = E[x x^T]` per class, with class sizes.
    pub fn class_covariances(&self) -> Vec<(RMatrix, usize)> {
        self.classes
            .iter()
            .map(ColumnModel::second_moment)
            .zip(self.class_counts())
            .collect()
    }

    /// `Σ_i` for every column. Allocates `n` matrices; prefer
    /// [`Self::class_covariances`] for large `n`.
    pub fn population_covariances(&self) -> Vec<RMatrix> {
        let per_class: Vec<RMatrix> = self
            .classes
            .iter()
            .map(ColumnModel::second_moment)
            .collect();
        self.assignment
            .iter()
            .map(|&k| per_class[k].clone())
            .collect()
    }

    pub fn covariance_family(&self) -> CovarianceFamily {
        CovarianceFamily::from_classes(self.p, self.n, self.class_covariances())
            .expect("ensemble classes are validated at construction")
    }

    /// Monte Carlo summary of the spectrum of `(1/n) X X^T`.
    pub fn spectrum_stats(
        &self,
        n_draws: usize,
        eps: f64,
        exec: Execution,
    ) -> Result<SpectrumStats> {
        if n_draws < 2 {
            return Err(Error::Config(
                "spectrum_stats needs at least two draws".into(),
            ));
        }
        let spectra = map_indices(exec, n_draws, |d| {
            sym_eigenvalues_desc(&gram_scaled(&self.sample_matrix(d as u64)))
        });
        let mut mean = vec![0.0; self.p];
        for s in &spectra {
            for (m, l) in mean.iter_mut().zip(s) {
                *m += l;
            }
        }
        for m in &mut mean {
            *m /= n_draws as f64;
        }
        let mut stats = SpectrumStats {
            mean_eigenvalues: mean,
            nu_hat: 0.0,
            eps,
            a_eps_frequency: 0.0,
        };
        stats.nu_hat = stats.mean_eigenvalues[0];
        let hits = spectra.iter().filter(|s| stats.in_event(s)).count();
        stats.a_eps_frequency = hits as f64 / n_draws as f64;
        Ok(stats)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumStats {
    /// Monte Carlo `E[λ_i]`, decreasing.
    pub mean_eigenvalues: Vec<f64>,
    /// `E[λ_1]`.
    pub nu_hat: f64,
    pub eps: f64,
    /// Fraction of draws with every eigenvalue within `eps/2` of the mean spectrum.
    pub a_eps_frequency: f64,
}

impl SpectrumStats {
    pub fn distance_to_mean_spectrum(&self, x: f64) -> f64 {
        // mean_eigenvalues is sorted decreasingly
        let v = &self.mean_eigenvalues;
        let idx = v.partition_point(|&m| m > x);
        let mut d = f64::INFINITY;
        if idx < v.len() {
            d = d.min((v[idx] - x).abs());
        }
        if idx > 0 {
            d = d.min((v[idx - 1] - x).abs());
        }
        d
    }

    /// Whether a draw's eigenvalues lie in the `eps/2`-fattened mean spectrum.
    pub fn in_event(&self, eigenvalues: &[f64]) -> bool {
        eigenvalues
            .iter()
            .all(|&l| self.distance_to_mean_spectrum(l) <= 0.5 * self.eps)
    }

    /// Merged intervals of the `radius`-fattened mean spectrum.
    pub fn fattened_support(&self, radius: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &m in self.mean_eigenvalues.iter().rev() {
            let (a, b) = (m - radius, m + radius);
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    /// `S̄^eps` at the configured radius.
    pub fn support_eps(&self) -> Vec<(f64, f64)> {
        self.fattened_support(self.eps)
    }
}

// ---------------------------------------------------------------------------
// Structured configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Named(String),
    Inline(Vec<f64>),
    Basis {
        basis: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    Path {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSpec {
    Named(String),
    Scaled { scale: f64 },
    Diagonal { diag: Vec<f64> },
    Inline(Vec<Vec<f64>>),
    Path { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Named("zero".into())
    }
}

impl Default for FactorSpec {
    fn default() -> Self {
        FactorSpec::Named("identity".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    #[serde(default)]
    pub mean: MeanSpec,
    #[serde(default)]
    pub factor: FactorSpec,
    pub base: BaseLaw,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub classes: Vec<ClassConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

impl MeanSpec {
    fn build(&self, p: usize, base_dir: &Path) -> Result<RVector> {
        match self {
            MeanSpec::Named(s) if s == "zero" => Ok(RVector::zeros(p)),
            MeanSpec::Named(s) => Err(Error::Config(format!("unknown mean {s:?}"))),
            MeanSpec::Inline(v) => Ok(RVector::from_vec(v.clone())),
            MeanSpec::Basis { basis, scale } => {
                if *basis >= p {
                    return Err(Error::Config(format!(
                        "basis index {basis} out of range for p = {p}"
                    )));
                }
                let mut v = RVector::zeros(p);
                v[*basis] = *scale;
                Ok(v)
            }
            MeanSpec::Path { path } => {
                let m = matrix_io::read_matrix(&resolve(base_dir, path))?;
                Ok(RVector::from_iterator(
                    m.len(),
                    m.transpose().iter().copied(),
                ))
            }
        }
    }
}

impl FactorSpec {
    fn build(&self, p: usize, base_dir: &Path) -> Result<Factor> {
        match self {
            FactorSpec::Named(s) if s == "identity" => Ok(Factor::Identity),
            FactorSpec::Named(s) if s == "zero" => Ok(Factor::Matrix(RMatrix::zeros(p, p))),
            FactorSpec::Named(s) => Err(Error::Config(format!("unknown factor {s:?}"))),
            FactorSpec::Scaled { scale } => Ok(Factor::Matrix(RMatrix::identity(p, p) * *scale)),
            FactorSpec::Diagonal { diag } => Ok(Factor::Matrix(RMatrix::from_diagonal(
                &RVector::from_vec(diag.clone()),
            ))),
            FactorSpec::Inline(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Config("ragged inline factor".into()));
                }
                Ok(Factor::Matrix(RMatrix::from_fn(r, c, |i, j| rows[i][j])))
            }
            FactorSpec::Path { path } => Ok(Factor::Matrix(matrix_io::read_matrix(&resolve(
                base_dir, path,
            ))?)),
        }
    }
}

impl EnsembleConfig {
    /// Builds the ensemble; relative paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path, default_seed: u64) -> Result<ColumnEnsemble> {
        let mut classes = Vec::with_capacity(self.classes.len());
        let mut assignment = Vec::with_capacity(self.n);
        for (k, c) in self.classes.iter().enumerate() {
            classes.push(ColumnModel {
                mean: c.mean.build(self.p, base_dir)?,
                factor: c.factor.build(self.p, base_dir)?,
                base: c.base,
            });
            assignment.extend(std::iter::repeat_n(k, c.count));
        }
        if assignment.len() != self.n {
            return Err(Error::Config(format!(
                "class counts sum to {}, expected n = {}",
                assignment.len(),
                self.n
            )));
        }
        let gamma = self
            .gamma
            .unwrap_or_else(|| (self.p as f64 / self.n as f64).max(1.0));
        ColumnEnsemble::new(
            self.p,
            self.n,
            gamma,
            classes,
            assignment,
            self.seed.unwrap_or(default_seed),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_ensemble(p: usize, n: usize) -> ColumnEnsemble {
        let model = ColumnModel {
            mean: RVector::zeros(p),
            factor: Factor::Matrix(RMatrix::zeros(p, p)),
            base: BaseLaw::UniformCentered,
        };
        ColumnEnsemble::homogeneous(p, n, model, 1).unwrap()
    }

    #[test]
    fn degenerate_factor_gives_zero_matrix() {
        let x = zero_ensemble(4, 6).sample_matrix(3);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_draws_stay_in_support() {
        let ens = ColumnEnsemble::isotropic(1, 1, BaseLaw::UniformCentered, 9).unwrap();
        for d in 0..2000 {
            let v = ens.sample_matrix(d)[(0, 0)];
            assert!((-0.5..=0.5).contains(&v));
        }
        let ens = ColumnEnsemble::isotropic(3, 3, BaseLaw::RademacherHalf, 9).unwrap();
        assert!(ens.sample_matrix(0).iter().all(|&v| v.abs() == 0.5));
    }

    #[test]
    fn sampling_is_reproducible() {
        let ens = ColumnEnsemble::isotropic(5, 7, BaseLaw::UniformUnit, 123).unwrap();
        let a = ens.sample_matrix(11);
        let b = ens.sample_matrix(11);
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a, ens.sample_matrix(12));
        assert_ne!(a, ens.clone().with_seed(124).sample_matrix(11));
    }

    #[test]
    fn closed_form_covariances() {
        let iso = ColumnEnsemble::isotropic(3, 3, BaseLaw::UniformCentered, 0).unwrap();
        let s = &iso.population_covariances()[0];
        assert!((s - RMatrix::identity(3, 3) / 12.0).norm() < 1e-15);

        let mut e1 = RVector::zeros(3);
        e1[0] = 1.0;
        let det = ColumnModel {
            mean: e1.clone(),
            factor: Factor::Matrix(RMatrix::zeros(3, 3)),
            base: BaseLaw::UniformCentered,
        };
        assert_eq!(det.second_moment(), &e1 * e1.transpose());

        let diag = ColumnModel {
            mean: RVector::zeros(2),
            factor: Factor::Matrix(RMatrix::from_diagonal(&RVector::from_vec(vec![1.0, 2.0]))),
            base: BaseLaw::RademacherHalf,
        };
        let s = diag.second_moment();
        assert!((s - RMatrix::from_diagonal(&RVector::from_vec(vec![0.25, 1.0]))).norm() < 1e-15);
    }

    #[test]
    fn uniform_unit_mean_enters_second_moment() {
        let m = ColumnModel::isotropic(2, BaseLaw::UniformUnit);
        let s = m.second_moment();
        assert!((s[(0, 0)] - (1.0 / 12.0 + 0.25)).abs() < 1e-15);
        assert!((s[(0, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn configuration_errors() {
        let bad_mean = ColumnModel {
            mean: RVector::zeros(2),
            factor: Factor::Identity,
            base: BaseLaw::UniformCentered,
        };
        assert!(matches!(
            ColumnEnsemble::homogeneous(3, 3, bad_mean, 0),
            Err(Error::Dimension { .. })
        ));
        let bad_factor = ColumnModel {
            mean: RVector::zeros(3),
            factor: Factor::Matrix(RMatrix::zeros(2, 2)),
            base: BaseLaw::UniformCentered,
        };
        assert!(ColumnEnsemble::homogeneous(3, 3, bad_factor, 0).is_err());
        let iso = ColumnModel::isotropic(10, BaseLaw::UniformCentered);
        assert!(ColumnEnsemble::new(10, 4, 2.0, vec![iso], vec![0; 4], 0).is_err());
    }

    #[test]
    fn large_mean_warns_not_errors() {
        let mut mean = RVector::zeros(4);
        mean[0] = 50.0;
        let m = ColumnModel {
            mean,
            factor: Factor::Identity,
            base: BaseLaw::UniformCentered,
        };
        let ens = ColumnEnsemble::homogeneous(4, 4, m, 0).unwrap();
        assert_eq!(ens.warnings().len(), 1);
    }

    #[test]
    fn affine_post_composition_scales_metadata() {
        let ens = ColumnEnsemble::isotropic(3, 5, BaseLaw::UniformCentered, 0).unwrap();
        let phi = RMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let mapped = ens
            .map_affine(&phi, &RVector::from_vec(vec![1.0, -1.0]))
            .unwrap();
        assert_eq!(mapped.p(), 2);
        let lam = spectral_norm(&phi);
        assert!(mapped.concentration_scale() <= lam * ens.concentration_scale() + 1e-12);
        // draws commute with the map
        let x = ens.sample_matrix(4);
        let y = mapped.sample_matrix(4);
        let expect = &phi * &x + RMatrix::from_fn(2, 5, |i, _| if i == 0 { 1.0 } else { -1.0 });
        assert!((y - expect).norm() < 1e-12);
    }

    #[test]
    fn zero_ensemble_spectrum() {
        let stats = zero_ensemble(3, 4)
            .spectrum_stats(4, 0.05, Execution::Sequential)
            .unwrap();
        assert_eq!(stats.nu_hat, 0.0);
        assert!(stats.mean_eigenvalues.iter().all(|&l| l == 0.0));
        assert_eq!(stats.a_eps_frequency, 1.0);
        assert_eq!(stats.support_eps(), vec![(-0.05, 0.05)]);
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let json = r#"{"p": 4, "n": 8, "classes": [
            {"base": "uniform_centered", "count": 4},
            {"base": "rademacher_half", "factor": {"scale": 2.0}, "mean": {"basis": 1, "scale": 0.5}, "count": 4}
        ], "seed": 5}"#;
        let cfg: EnsembleConfig = serde_json::from_str(json).unwrap();
        let ens = cfg.build(Path::new("."), 0).unwrap();
        assert_eq!(ens.class_counts(), vec![4, 4]);
        assert_eq!(ens.seed(), 5);
        assert_eq!(ens.classes()[1].mean[1], 0.5);

        let bad = r#"{"p": 4, "n": 8, "classes": [], "bogus": 1}"#;
        assert!(serde_json::from_str::<EnsembleConfig>(bad).is_err());
        let short = r#"{"p": 4, "n": 8, "classes": [{"base": "uniform_unit", "count": 3}]}"#;
        let cfg: EnsembleConfig = serde_json::from_str(short).unwrap();
        assert!(cfg.build(Path::new("."), 0).is_err());
    }
}
