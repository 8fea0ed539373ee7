//! Density recovery from Stieltjes transforms and contour-integral
//! projectors.
//!
//! Orientation: [`contour_trace`] returns `-(1/2πi) ∮ f dz` along the
//! counterclockwise rectangle, so `f(z) = 1/(z - a)` gives `-1` for an
//! enclosed `a`. Projector traces use the opposite sign,
//! `tr(Π_B A) = (1/2πi) ∮ tr(A Q^z) dz` (counterclockwise), which is the
//! same integral taken clockwise; see [`enclosed_trace`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detequiv::{solve_along_grid, solve_fixed_point, CovarianceFamily, SolverOptions};
use crate::resolvent::ResolventSample;
use crate::{Error, RMatrix, RVector, Result};

/// Minimum distance between a contour and the support estimate.
pub const MIN_CLEARANCE: f64 = 0.05;
pub const MIN_NODES_PER_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub eta: f64,
    pub rho: Vec<f64>,
    /// Whether `Im g` kept one sign across the grid.
    pub sign_constant: bool,
}

impl DensityGrid {
    /// Trapezoid integral of `rho` over the grid.
    pub fn mass(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.rho.windows(2))
            .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,rho")?;
        for (x, r) in self.x.iter().zip(&self.rho) {
            writeln!(w, "{x:?},{r:?}")?;
        }
        Ok(())
    }
}

/// Default smoothing: ten grid spacings.
pub fn default_eta(grid_x: &[f64]) -> f64 {
    match grid_x {
        [a, b, ..] => 10.0 * (b - a).abs(),
        _ => 1e-2,
    }
}

pub fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![a],
        _ => (0..points)
            .map(|k| a + (b - a) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// `rho(x_k) = |Im g(x_k + iη)| / π`.
pub fn density_from_stieltjes<G>(mut g: G, grid_x: &[f64], eta: f64) -> Result<DensityGrid>
where
    G: FnMut(Complex64) -> Result<Complex64>,
{
    if !(eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    let mut rho = Vec::with_capacity(grid_x.len());
    let mut signs = (false, false);
    for (k, &x) in grid_x.iter().enumerate() {
        let v = g(Complex64::new(x, eta)).map_err(|e| Error::at(k, e))?;
        if v.im > 0.0 {
            signs.0 = true;
        } else if v.im < 0.0 {
            signs.1 = true;
        }
        rho.push(v.im.abs() / PI);
    }
    Ok(DensityGrid {
        x: grid_x.to_vec(),
        eta,
        rho,
        sign_constant: !(signs.0 && signs.1),
    })
}

/// Richardson extrapolation `2 rho_{η/2}(x) - rho_η(x)` of the smoothed
/// density; the Poisson smoothing bias is linear in `η`.
pub fn density_extrapolated<G>(mut g: G, x: f64, eta: f64) -> Result<f64>
where
    G: FnMut(Complex64) -> Result<Complex64>,
{
    let coarse = g(Complex64::new(x, eta))?.im.abs() / PI;
    let fine = g(Complex64::new(x, 0.5 * eta))?.im.abs() / PI;
    Ok(2.0 * fine - coarse)
}

/// `z -> (1/p) tr Q̃^z` with each solve warm-started from the previous one.
///
/// Near the real axis a cold start can pick the wrong branch and the Picard
/// iteration contracts slowly, so [`Self::descend`] approaches `x + iη`
/// from `x + i` by halving the imaginary part before a sweep.
pub struct DeterministicStieltjes<'a> {
    family: &'a CovarianceFamily,
    opts: SolverOptions,
    warm: Option<Vec<Complex64>>,
    /// Picard iterations spent so far.
    pub iterations: usize,
}

impl<'a> DeterministicStieltjes<'a> {
    pub fn new(family: &'a CovarianceFamily, opts: SolverOptions) -> Self {
        Self {
            family,
            opts,
            warm: None,
            iterations: 0,
        }
    }

    pub fn eval(&mut self, z: Complex64) -> Result<Complex64> {
        let sol = solve_fixed_point(self.family, z, &self.opts, self.warm.as_deref())?;
        self.iterations += sol.iterations;
        let g = sol.stieltjes();
        self.warm = Some(sol.lambda);
        Ok(g)
    }

    pub fn descend(&mut self, x: f64, eta: f64) -> Result<()> {
        let mut y = 1.0f64.max(eta);
        loop {
            self.eval(Complex64::new(x, y))?;
            if y <= eta {
                return Ok(());
            }
            y = (0.5 * y).max(eta);
        }
    }
}

/// Density of the deterministic equivalent on a grid, swept left to right.
pub fn deterministic_density(
    family: &CovarianceFamily,
    grid_x: &[f64],
    eta: f64,
    opts: &SolverOptions,
) -> Result<DensityGrid> {
    let mut g = DeterministicStieltjes::new(family, *opts);
    if let Some(&x0) = grid_x.first() {
        g.descend(x0, eta)?;
    }
    density_from_stieltjes(|z| g.eval(z), grid_x, eta)
}

/// [`density_extrapolated`] for the deterministic equivalent.
pub fn deterministic_density_at(
    family: &CovarianceFamily,
    x: f64,
    eta: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let mut g = DeterministicStieltjes::new(family, *opts);
    g.descend(x, eta)?;
    density_extrapolated(|z| g.eval(z), x, eta)
}

/// Axis-aligned rectangle `[x_min, x_max] x [-y_half, y_half]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_half: f64,
    pub nodes_per_side: usize,
}

impl ContourSpec {
    pub fn new(x_min: f64, x_max: f64, y_half: f64, nodes_per_side: usize) -> Result<Self> {
        let c = Self {
            x_min,
            x_max,
            y_half,
            nodes_per_side,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !(self.y_half > 0.0) {
            return Err(Error::Config(format!("degenerate contour {self:?}")));
        }
        if self.nodes_per_side < MIN_NODES_PER_SIDE {
            return Err(Error::Config(format!(
                "contour needs at least {MIN_NODES_PER_SIDE} nodes per side, got {}",
                self.nodes_per_side
            )));
        }
        Ok(())
    }

    pub fn encloses(&self, x: f64) -> bool {
        x > self.x_min && x < self.x_max
    }

    /// Counterclockwise nodes with weights `w_k` such that
    /// `∮ f dz ≈ Σ_k w_k f(z_k)`.
    ///
    /// Each side is parametrised by `ψ(t) = t - sin(2πt)/(2π)` before a
    /// midpoint rule in `t`. Since `ψ'` vanishes to second order at both ends,
    /// the corners stop limiting the rule to `O(h²)` and analytic integrands
    /// converge geometrically, as on a smooth closed curve.
    pub fn nodes(&self) -> Vec<(Complex64, Complex64)> {
        let (a, b, y) = (self.x_min, self.x_max, self.y_half);
        let corners = [
            Complex64::new(a, -y),
            Complex64::new(b, -y),
            Complex64::new(b, y),
            Complex64::new(a, y),
        ];
        let m = self.nodes_per_side;
        let mut out = Vec::with_capacity(4 * m);
        for s in 0..4 {
            let side = corners[(s + 1) % 4] - corners[s];
            for j in 0..m {
                let t = (j as f64 + 0.5) / m as f64;
                let psi = t - (2.0 * PI * t).sin() / (2.0 * PI);
                let dpsi = 1.0 - (2.0 * PI * t).cos();
                out.push((corners[s] + side * psi, side * (dpsi / m as f64)));
            }
        }
        out
    }

    /// Distance from the rectangle's boundary to real intervals.
    pub fn clearance(&self, support: &[(f64, f64)]) -> f64 {
        support
            .iter()
            .map(|&(lo, hi)| {
                if hi < self.x_min {
                    self.x_min - hi
                } else if lo > self.x_max {
                    lo - self.x_max
                } else if lo > self.x_min && hi < self.x_max {
                    (lo - self.x_min).min(self.x_max - hi).min(self.y_half)
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_clearance(&self, support: &[(f64, f64)], required: f64) -> Result<()> {
        let clearance = self.clearance(support);
        if clearance < required {
            return Err(Error::ContourClearance {
                clearance,
                required,
            });
        }
        Ok(())
    }
}

/// `-(1/2πi) ∮ f(z) dz` along the counterclockwise contour.
pub fn contour_trace<F>(mut f: F, contour: &ContourSpec) -> Result<Complex64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    contour.validate()?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, (z, w)) in contour.nodes().into_iter().enumerate() {
        acc += w * f(z).map_err(|e| Error::at(k, e))?;
    }
    Ok(-acc / Complex64::new(0.0, 2.0 * PI))
}

/// `(1/2πi) ∮ f(z) dz` counterclockwise; equals `tr(Π_B A)` for
/// `f = tr(A Q^z)`.
pub fn enclosed_trace<F>(f: F, contour: &ContourSpec) -> Result<Complex64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    contour_trace(f, contour).map(|v| -v)
}

/// Contour estimate of `tr(Π_B A)` for one draw.
pub fn empirical_projector_trace(
    s: &ResolventSample,
    contour: &ContourSpec,
    a: &RMatrix,
) -> Result<Complex64> {
    let diag = s.projected_diagonal(a);
    enclosed_trace(|z| s.trace_with(&diag, z), contour)
}

/// Contour estimate of `u^T Π_B u`.
pub fn empirical_projector_overlap(
    s: &ResolventSample,
    contour: &ContourSpec,
    u: &RVector,
) -> Result<Complex64> {
    let ov = s.overlaps(u);
    enclosed_trace(|z| s.trace_with(&ov, z), contour)
}

/// Exact `tr(Π_B A)` from the eigendecomposition (sum over enclosed
/// eigenvalues of `v_k^T A v_k`).
pub fn exact_projector_trace(s: &ResolventSample, contour: &ContourSpec, a: &RMatrix) -> f64 {
    let diag = s.projected_diagonal(a);
    s.eigenvalues()
        .iter()
        .zip(&diag)
        .filter(|(l, _)| contour.encloses(**l))
        .map(|(_, d)| d)
        .sum()
}

/// Number of eigenvalues strictly inside the contour.
pub fn enclosed_count(s: &ResolventSample, contour: &ContourSpec) -> usize {
    s.eigenvalues()
        .iter()
        .filter(|l| contour.encloses(**l))
        .count()
}

/// Deterministic estimate `(1/2πi) ∮ tr(A Q̃^z) dz`, solving the fixed
/// point by continuation around the contour.
pub fn projector_estimate(
    family: &CovarianceFamily,
    contour: &ContourSpec,
    a: &RMatrix,
    opts: &SolverOptions,
) -> Result<Complex64> {
    contour.validate()?;
    let nodes = contour.nodes();
    let zs: Vec<Complex64> = nodes.iter().map(|n| n.0).collect();
    let sols = solve_along_grid(family, &zs, opts);
    let mut acc = Complex64::new(0.0, 0.0);
    for ((_, w), sol) in nodes.iter().zip(sols) {
        acc += w * sol?.q_tilde.trace_with(a);
    }
    Ok(acc / Complex64::new(0.0, 2.0 * PI))
}
