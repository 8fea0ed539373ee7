//! Scalar summaries of Monte Carlo samples: moment diameters, tail tables,
//! tail-shape fits and log-log scaling tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::{ols_fit, LineFit};
use crate::par;
use crate::{Error, Result};

use super::functional::FunctionalInfo;

pub const MOMENT_ORDERS: [u32; 4] = [2, 4, 6, 8];
/// Tail thresholds are `k * std / 2` for `k = 1..=TAIL_POINTS`.
pub const TAIL_POINTS: usize = 16;
/// Below this many draws tail estimates are flagged as unreliable.
pub const MIN_TAIL_DRAWS: usize = 1000;
/// Metric values at or below this are treated as exactly zero.
pub const DEGENERATE_FLOOR: f64 = 1e-14;

/// Moment summary of a scalar sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub mean: f64,
    /// Population standard deviation, `sqrt(m_2)`.
    pub std: f64,
    /// `(order, m_r^{1/r} / sqrt(r))` with `m_r` the central absolute moment.
    pub diameters: Vec<(u32, f64)>,
    pub sigma_hat: f64,
}

impl SampleMoments {
    pub fn from_samples(samples: &[f64], ordered: bool) -> Self {
        let n = samples.len();
        if n == 0 || samples.iter().all(|&v| v.to_bits() == samples[0].to_bits()) {
            return Self {
                mean: samples.first().copied().unwrap_or(0.0),
                std: 0.0,
                diameters: MOMENT_ORDERS.iter().map(|&r| (r, 0.0)).collect(),
                sigma_hat: 0.0,
            };
        }
        let nf = n as f64;
        let mean = par::sum(samples, ordered) / nf;
        let centered: Vec<f64> = samples.iter().map(|v| (v - mean).abs()).collect();
        let diameters: Vec<(u32, f64)> = MOMENT_ORDERS
            .iter()
            .map(|&r| {
                let powers: Vec<f64> = centered.iter().map(|c| c.powi(r as i32)).collect();
                let m_r = par::sum(&powers, ordered) / nf;
                (r, m_r.powf(1.0 / r as f64) / (r as f64).sqrt())
            })
            .collect();
        let std = diameters[0].1 * 2f64.sqrt();
        let sigma_hat = diameters.iter().map(|d| d.1).fold(0.0, f64::max);
        Self {
            mean,
            std,
            diameters,
            sigma_hat,
        }
    }
}

/// Sample standard error of the mean (unbiased variance).
pub fn standard_error(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Empirical `P(|Z - mean| >= t)` on the grid `t_k = k * scale / 2`.
pub fn tail_table(samples: &[f64], mean: f64, scale: f64) -> Vec<[f64; 2]> {
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let nf = samples.len().max(1) as f64;
    let mut dev: Vec<f64> = samples.iter().map(|v| (v - mean).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (1..=TAIL_POINTS)
        .map(|k| {
            let t = k as f64 * scale / 2.0;
            let below = dev.partition_point(|&d| d < t);
            [t, (dev.len() - below) as f64 / nf]
        })
        .collect()
}

/// Slopes of `-log P` against `t²` on the central window `t <= 2 std` and
/// against `t` on the far window `t >= 4 std`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TailSlopes {
    pub gaussian: Option<f64>,
    pub exponential: Option<f64>,
}

pub(crate) struct TailFits {
    pub gaussian: Option<LineFit>,
    pub exponential: Option<LineFit>,
}

pub(crate) fn fit_tails(tails: &[[f64; 2]], std: f64) -> TailFits {
    let window = |keep: &dyn Fn(f64) -> bool, square: bool| {
        let (x, y): (Vec<f64>, Vec<f64>) = tails
            .iter()
            .filter(|r| r[1] > 0.0 && keep(r[0]))
            .map(|r| (if square { r[0] * r[0] } else { r[0] }, -r[1].ln()))
            .unzip();
        ols_fit(&x, &y)
    };
    if !(std > 0.0) {
        return TailFits {
            gaussian: None,
            exponential: None,
        };
    }
    TailFits {
        gaussian: window(&|t| t <= 2.0 * std * (1.0 + 1e-12), true),
        exponential: window(&|t| t >= 4.0 * std * (1.0 - 1e-12), false),
    }
}

/// One Monte Carlo concentration measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub functional: FunctionalInfo,
    pub n: usize,
    pub p: usize,
    pub draws: usize,
    pub mean: f64,
    pub std: f64,
    pub sigma_hat: f64,
    pub moments: BTreeMap<String, f64>,
    pub tails: Vec<[f64; 2]>,
    pub slopes: TailSlopes,
    pub seed: u64,
    #[serde(default)]
    pub rejection_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ConcentrationReport {
    pub fn from_samples(
        functional: FunctionalInfo,
        samples: &[f64],
        (p, n): (usize, usize),
        seed: u64,
        ordered: bool,
    ) -> Self {
        let m = SampleMoments::from_samples(samples, ordered);
        let tails = if m.std > 0.0 {
            tail_table(samples, m.mean, m.std)
        } else {
            (1..=TAIL_POINTS).map(|k| [k as f64 / 2.0, 0.0]).collect()
        };
        let fits = fit_tails(&tails, m.std);
        let mut warnings = Vec::new();
        if samples.len() < MIN_TAIL_DRAWS {
            warnings.push(format!(
                "{} draws is below {MIN_TAIL_DRAWS}; tail estimates are coarse",
                samples.len()
            ));
        }
        Self {
            functional,
            n,
            p,
            draws: samples.len(),
            mean: m.mean,
            std: m.std,
            sigma_hat: m.sigma_hat,
            moments: m
                .diameters
                .iter()
                .map(|(r, d)| (r.to_string(), *d))
                .collect(),
            tails,
            slopes: TailSlopes {
                gaussian: fits.gaussian.map(|f| f.slope),
                exponential: fits.exponential.map(|f| f.slope),
            },
            seed,
            rejection_rate: 0.0,
            warnings,
        }
    }

    /// `(E|Z - EZ|^r)^{1/r}` recovered from the stored diameters.
    pub fn raw_moment_root(&self, r: u32) -> Option<f64> {
        self.moments
            .get(&r.to_string())
            .map(|d| d * (r as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub p: usize,
    pub value: f64,
    /// Monte Carlo standard error of `value`, when it can be estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    N,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeStatus {
    Pass,
    Warn,
    Degenerate,
    Unchecked,
}

/// Log-log fit of a metric against `n` or `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub metric: String,
    pub axis: ScalingAxis,
    pub rows: Vec<ScalingRow>,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub degenerate: bool,
    pub band: Option<[f64; 2]>,
    pub status: SlopeStatus,
}

impl ScalingTable {
    pub fn new(
        metric: impl Into<String>,
        axis: ScalingAxis,
        rows: Vec<ScalingRow>,
    ) -> Result<Self> {
        let xs: Vec<f64> = rows
            .iter()
            .map(|r| match axis {
                ScalingAxis::N => r.n as f64,
                ScalingAxis::P => r.p as f64,
            })
            .collect();
        check_geometric(&xs)?;
        let degenerate = rows
            .iter()
            .any(|r| !(r.value > DEGENERATE_FLOOR) || !r.value.is_finite());
        let fit = if degenerate {
            None
        } else {
            let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
            let ly: Vec<f64> = rows.iter().map(|r| r.value.ln()).collect();
            ols_fit(&lx, &ly)
        };
        Ok(Self {
            metric: metric.into(),
            axis,
            rows,
            slope: fit.map(|f| f.slope),
            slope_se: fit.map(|f| f.slope_se),
            degenerate,
            band: None,
            status: if degenerate {
                SlopeStatus::Degenerate
            } else {
                SlopeStatus::Unchecked
            },
        })
    }

    /// Records the expected slope band and whether the fit falls inside it.
    pub fn with_band(mut self, lo: f64, hi: f64) -> Self {
        self.band = Some([lo, hi]);
        self.status = match self.slope {
            _ if self.degenerate => SlopeStatus::Degenerate,
            Some(s) if s >= lo && s <= hi => SlopeStatus::Pass,
            _ => SlopeStatus::Warn,
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.status == SlopeStatus::Pass
    }
}

/// At least three distinct, increasing, geometrically spaced values.
pub fn check_geometric(xs: &[f64]) -> Result<()> {
    if xs.len() < 3 {
        return Err(Error::Config(format!(
            "a scaling table needs at least 3 sizes, got {}",
            xs.len()
        )));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0]) || !(w[0] > 0.0)) {
        return Err(Error::Config(format!(
            "sizes must be positive and increasing: {xs:?}"
        )));
    }
    let ratio = xs[1] / xs[0];
    if xs
        .windows(2)
        .any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 0.05)
    {
        return Err(Error::Config(format!(
            "sizes must be geometrically spaced: {xs:?}"
        )));
    }
    Ok(())
}
