//! Run configuration: one JSON file per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rmeq::detequiv::SolverOptions;
use rmeq::ensembles::{EnsembleConfig, FactorSpec, MeanSpec};
use rmeq::spectral::ContourSpec;
use rmeq::Complex64;

use crate::Failure;

/// A point of the complex plane, written either as a real number or as
/// `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZPoint {
    Real(f64),
    Complex([f64; 2]),
}

impl ZPoint {
    pub fn get(self) -> Complex64 {
        match self {
            ZPoint::Real(x) => Complex64::new(x, 0.0),
            ZPoint::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_grid: Option<Vec<ZPoint>>,
    /// Solve on the quadrature nodes of a contour instead of a list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    /// Defaults to ten grid spacings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorBlock {
    pub contour: ContourSpec,
    /// `"identity"`, or a path to a CSV/binary matrix.
    #[serde(default = "identity", alias = "A")]
    pub a: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub suites: Vec<String>,
    #[serde(default = "default_verify_draws")]
    pub n_draws: usize,
    #[serde(default)]
    pub n_list: Vec<usize>,
}

fn identity() -> String {
    "identity".into()
}

fn default_verify_draws() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    #[serde(default = "default_mc_draws")]
    pub n_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ZPoint>,
}

fn default_mc_draws() -> usize {
    100
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            n_draws: default_mc_draws(),
            z: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector: Option<ProjectorBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn ensemble(&self) -> Result<&EnsembleConfig, Failure> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| Failure::config("the config has no `ensemble` block"))
    }

    pub fn solver(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(s) = &self.solve {
            opts.tol = s.tol.unwrap_or(opts.tol);
            opts.max_iter = s.max_iter.unwrap_or(opts.max_iter);
            opts.damping = s.damping.unwrap_or(opts.damping);
        }
        opts
    }

    /// Applies command-line overrides. The seed wins over any seed in the
    /// ensemble block so that `--seed` alone selects the draws.
    pub fn resolve(&mut self, seed: Option<u64>, out: Option<PathBuf>, base_dir: &Path) {
        if let Some(s) = seed {
            self.seed = s;
            if let Some(e) = &mut self.ensemble {
                e.seed = Some(s);
            }
        } else if let Some(e) = &mut self.ensemble {
            e.seed.get_or_insert(self.seed);
        }
        self.output_dir = Some(match (out, self.output_dir.take()) {
            (Some(o), _) => o,
            (None, Some(d)) if d.is_relative() => base_dir.join(d),
            (None, Some(d)) => d,
            (None, None) => PathBuf::from("."),
        });
    }
}

/// The ensemble with its sizes rescaled to `n` columns, keeping `p/n` and
/// the class proportions. Only size-free means and factors can be resized.
pub fn resized(cfg: &EnsembleConfig, n: usize) -> Result<EnsembleConfig, Failure> {
    let scale = n as f64 / cfg.n as f64;
    let p = ((cfg.p as f64 * scale).round() as usize).max(1);
    let mut out = cfg.clone();
    out.p = p;
    out.n = n;
    let mut assigned = 0;
    let last = cfg.classes.len().saturating_sub(1);
    for (k, class) in out.classes.iter_mut().enumerate() {
        match &class.mean {
            MeanSpec::Named(_) | MeanSpec::Basis { .. } => {}
            _ => {
                return Err(Failure::config(format!(
                    "class {k}: explicit means cannot be resized for a rate scan"
                )))
            }
        }
        match &class.factor {
            FactorSpec::Named(_) | FactorSpec::Scaled { .. } => {}
            _ => {
                return Err(Failure::config(format!(
                    "class {k}: explicit factors cannot be resized for a rate scan"
                )))
            }
        }
        class.count = if k == last {
            n - assigned
        } else {
            ((class.count as f64 * scale).round() as usize).min(n - assigned)
        };
        assigned += class.count;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn ensemble(p: usize, n: usize, counts: &[usize]) -> EnsembleConfig {
        let classes: Vec<Value> = counts
            .iter()
            .map(|c| serde_json::json!({ "base": "uniform_centered", "count": c }))
            .collect();
        serde_json::from_value(serde_json::json!({ "p": p, "n": n, "classes": classes })).unwrap()
    }

    #[test]
    fn z_points_accept_both_forms() {
        let zs: Vec<ZPoint> = serde_json::from_str("[-1.0, [2.0, 0.5]]").unwrap();
        assert_eq!(zs[0].get(), Complex64::new(-1.0, 0.0));
        assert_eq!(zs[1].get(), Complex64::new(2.0, 0.5));
    }

    #[test]
    fn resizing_keeps_ratio_and_proportions() {
        let r = resized(&ensemble(50, 100, &[25, 75]), 400).unwrap();
        assert_eq!((r.p, r.n), (200, 400));
        assert_eq!(r.classes[0].count + r.classes[1].count, 400);
        assert_eq!(r.classes[0].count, 100);
        let mut explicit = ensemble(2, 4, &[4]);
        explicit.classes[0].mean = MeanSpec::Inline(vec![1.0, 0.0]);
        assert!(resized(&explicit, 8).is_err());
    }

    #[test]
    fn seed_override_reaches_the_ensemble() {
        let mut cfg: RunConfig = serde_json::from_value(
            serde_json::json!({ "ensemble": ensemble(2, 4, &[4]), "seed": 5 }),
        )
        .unwrap();
        cfg.resolve(None, None, Path::new("/base"));
        assert_eq!(cfg.ensemble.as_ref().unwrap().seed, Some(5));
        assert_eq!(cfg.output_dir.as_deref(), Some(Path::new(".")));
        cfg.resolve(Some(9), Some("o".into()), Path::new("/base"));
        assert_eq!(cfg.ensemble.as_ref().unwrap().seed, Some(9));
        assert_eq!(cfg.output_dir.as_deref(), Some(Path::new("o")));
    }
}
