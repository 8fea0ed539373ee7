use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rmeq::detequiv::{solve_along_grid, write_solutions_csv};
use rmeq::ensembles::ColumnEnsemble;
use rmeq::matrix_io;
use rmeq::par::{try_map_indices, Execution};
use rmeq::resolvent::ResolventSample;
use rmeq::spectral::{
    default_eta, density_from_stieltjes, deterministic_density, empirical_projector_trace,
    exact_projector_trace, linspace, projector_estimate, MIN_CLEARANCE,
};
use rmeq::{Complex64, Error, RMatrix};

use crate::config::RunConfig;
use crate::Failure;

/// Everything a command needs besides its config.
pub struct Context {
    pub config: RunConfig,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
    pub keep_going: bool,
    pub exec: Execution,
}

impl Context {
    pub fn out_dir(&self) -> &Path {
        self.config
            .output_dir
            .as_deref()
            .expect("output directory is resolved before dispatch")
    }

    /// Creates the output directory and echoes the resolved config into it.
    pub fn prepare(&self) -> Result<(), Failure> {
        fs::create_dir_all(self.out_dir())?;
        self.write_json("resolved_config.json", &self.config)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::write(self.out_dir().join(name), bytes)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| Failure::numeric(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn build_ensemble(&self) -> Result<ColumnEnsemble, Failure> {
        let ens = self
            .config
            .ensemble()?
            .build(&self.base_dir, self.config.seed)?;
        for w in ens.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(ens)
    }

    fn matrix(&self, spec: &str, p: usize) -> Result<RMatrix, Failure> {
        let m = if spec == "identity" {
            RMatrix::identity(p, p)
        } else {
            matrix_io::read_matrix(&self.base_dir.join(spec))?
        };
        if m.shape() != (p, p) {
            return Err(Failure::config(format!(
                "matrix {spec} is {}x{}, expected {p}x{p}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }
}

/// Reports per-point failures; they are fatal unless `--keep-going`.
fn check_points<T>(ctx: &Context, results: &[rmeq::Result<T>]) -> Result<(), Failure> {
    let mut first = None;
    for (i, r) in results.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("point {i}: {e}");
            first.get_or_insert(i);
        }
    }
    match first {
        Some(i) if !ctx.keep_going => Err(Failure::numeric(format!(
            "{} of {} points failed (first at index {i})",
            results.iter().filter(|r| r.is_err()).count(),
            results.len()
        ))),
        _ => Ok(()),
    }
}

pub fn solve(ctx: &Context) -> Result<(), Failure> {
    let block = ctx
        .config
        .solve
        .as_ref()
        .ok_or_else(|| Failure::config("`solve` needs a `solve` block"))?;
    let zs: Vec<Complex64> = match (&block.z_grid, &block.contour) {
        (Some(grid), None) => grid.iter().map(|z| z.get()).collect(),
        (None, Some(contour)) => {
            contour.validate()?;
            contour.nodes().into_iter().map(|n| n.0).collect()
        }
        _ => {
            return Err(Failure::config(
                "`solve` needs exactly one of `z_grid` and `contour`",
            ))
        }
    };
    if zs.is_empty() {
        return Err(Failure::config("`solve.z_grid` is empty"));
    }
    let family = ctx.build_ensemble()?.covariance_family();
    ctx.prepare()?;
    let sols = solve_along_grid(&family, &zs, &ctx.config.solver());
    let mut csv = Vec::new();
    write_solutions_csv(&mut csv, family.n_classes(), &sols)?;
    ctx.write("fixed_point.csv", &csv)?;
    check_points(ctx, &sols)
}

pub fn density(ctx: &Context, mc: bool) -> Result<(), Failure> {
    let block = ctx
        .config
        .density
        .as_ref()
        .ok_or_else(|| Failure::config("`density` needs a `density` block"))?;
    if block.points < 2 || !(block.x_max > block.x_min) {
        return Err(Failure::config(
            "`density` needs x_min < x_max and at least two points",
        ));
    }
    let xs = linspace(block.x_min, block.x_max, block.points);
    let eta = block.eta.unwrap_or_else(|| default_eta(&xs));
    if !(eta > 0.0) {
        return Err(Failure::config(format!("eta must be positive, got {eta}")));
    }
    let draws = ctx.config.mc.n_draws;
    if mc && draws == 0 {
        return Err(Failure::config("`mc.n_draws` must be positive"));
    }
    let ens = ctx.build_ensemble()?;
    ctx.prepare()?;
    let grid = if mc {
        let per_draw = try_map_indices(ctx.exec, draws, |d| {
            let s = ResolventSample::new(ens.sample_matrix(d as u64));
            xs.iter()
                .map(|&x| s.stieltjes(Complex64::new(x, eta)))
                .collect::<rmeq::Result<Vec<_>>>()
                .map_err(|e| Error::at(d, e))
        })?;
        let mut mean = vec![Complex64::new(0.0, 0.0); xs.len()];
        for g in &per_draw {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v;
            }
        }
        let mut k = 0;
        density_from_stieltjes(
            |_| {
                k += 1;
                Ok(mean[k - 1] / draws as f64)
            },
            &xs,
            eta,
        )?
    } else {
        deterministic_density(&ens.covariance_family(), &xs, eta, &ctx.config.solver())?
    };
    if !grid.sign_constant {
        eprintln!("warning: Im g changed sign across the grid");
    }
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    ctx.write("density.csv", &csv)
}

pub fn projector(ctx: &Context, mc: bool, deterministic: bool) -> Result<(), Failure> {
    let block = ctx
        .config
        .projector
        .as_ref()
        .ok_or_else(|| Failure::config("`projector` needs a `projector` block"))?;
    block.contour.validate()?;
    let ens = ctx.build_ensemble()?;
    let a = ctx.matrix(&block.a, ens.p())?;
    let draws = ctx.config.mc.n_draws;
    if draws < 2 {
        return Err(Failure::config("`mc.n_draws` must be at least 2"));
    }
    // the mean spectrum serves as the support estimate
    let stats = ens.spectrum_stats(draws, MIN_CLEARANCE, ctx.exec)?;
    block
        .contour
        .check_clearance(&stats.fattened_support(0.0), MIN_CLEARANCE)?;
    ctx.prepare()?;
    let mut csv = String::from("mode,value_re,value_im,exact\n");
    if deterministic || !mc {
        let v = projector_estimate(
            &ens.covariance_family(),
            &block.contour,
            &a,
            &ctx.config.solver(),
        )?;
        csv.push_str(&format!("deterministic,{:?},{:?},\n", v.re, v.im));
    }
    if mc {
        let per_draw = try_map_indices(ctx.exec, draws, |d| {
            let s = ResolventSample::new(ens.sample_matrix(d as u64));
            let v =
                empirical_projector_trace(&s, &block.contour, &a).map_err(|e| Error::at(d, e))?;
            Ok::<_, Error>((v, exact_projector_trace(&s, &block.contour, &a)))
        })?;
        let nf = draws as f64;
        let v: Complex64 = per_draw.iter().map(|t| t.0).sum::<Complex64>() / nf;
        let exact = per_draw.iter().map(|t| t.1).sum::<f64>() / nf;
        csv.push_str(&format!("monte_carlo,{:?},{:?},{exact:?}\n", v.re, v.im));
    }
    ctx.write("projector.csv", csv.as_bytes())
}

pub fn generate(ctx: &Context, draw: u64, binary: bool) -> Result<(), Failure> {
    let ens = ctx.build_ensemble()?;
    ctx.prepare()?;
    let name = format!("x_draw{draw}.{}", if binary { "bin" } else { "csv" });
    matrix_io::write_matrix(&ctx.out_dir().join(name), &ens.sample_matrix(draw))?;
    Ok(())
}

pub fn stats(ctx: &Context, eps: f64) -> Result<(), Failure> {
    if !(eps > 0.0) {
        return Err(Failure::config(format!("eps must be positive, got {eps}")));
    }
    let ens = ctx.build_ensemble()?;
    ctx.prepare()?;
    let stats = ens.spectrum_stats(ctx.config.mc.n_draws, eps, ctx.exec)?;
    ctx.write_json("spectrum_stats.json", &stats)
}
