//! `verify` suites. Each writes `verify_<suite>.json`; hard invariants
//! decide the exit code while slope bands only report pass or warn.

use std::sync::Arc;

use serde_json::{json, Value};

use rmeq::ensembles::ColumnEnsemble;
use rmeq::verify::{
    entrywise_product_check, hanson_wright_check, identity_suite, leave_one_out_rate_check,
    measure_functional, quadratic_form_check, resolvent_rate_scan, talagrand_direct_check,
    ConvexObservable, DistanceToPoint, FunctionalSpec, IdentitySuiteConfig, LargestSingularValue,
    LooEstimator, Part, VerifyOptions,
};
use rmeq::{Complex64, RMatrix, RVector};

use crate::commands::Context;
use crate::config::resized;
use crate::Failure;

pub const SUITES: [&str; 6] = [
    "rates",
    "tails",
    "identities",
    "talagrand",
    "products",
    "hanson_wright",
];

/// A suite's JSON report and whether its hard invariants held.
pub struct SuiteResult {
    pub report: Value,
    pub hard_pass: bool,
}

pub fn check_names(suites: &[String]) -> Result<(), Failure> {
    if suites.is_empty() {
        return Err(Failure::config("`verify.suites` is empty"));
    }
    match suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
        Some(bad) => Err(Failure::config(format!(
            "unknown suite {bad:?}; known suites: {}",
            SUITES.join(", ")
        ))),
        None => Ok(()),
    }
}

fn z_point(ctx: &Context) -> Complex64 {
    ctx.config
        .mc
        .z
        .map_or(Complex64::new(-1.0, 0.0), |z| z.get())
}

pub fn run(ctx: &Context, name: &str) -> Result<SuiteResult, Failure> {
    let opts = VerifyOptions {
        exec: ctx.exec,
        ..Default::default()
    };
    let n_draws = ctx.config.verify.as_ref().map_or(500, |v| v.n_draws);
    match name {
        "rates" => rates(ctx, n_draws, &opts),
        "tails" => tails(ctx, n_draws, &opts),
        "identities" => {
            let cfg = IdentitySuiteConfig {
                seed: ctx.config.seed,
                ..Default::default()
            };
            let r = identity_suite(&cfg, &opts)?;
            Ok(SuiteResult {
                hard_pass: r.passed,
                report: json!(r),
            })
        }
        "talagrand" => {
            let ens = ctx.build_ensemble()?;
            let observables: [Arc<dyn ConvexObservable>; 2] = [
                Arc::new(DistanceToPoint::new(RMatrix::zeros(ens.p(), ens.n()))),
                Arc::new(LargestSingularValue),
            ];
            let mut reports = Vec::new();
            for f in observables {
                reports.push(talagrand_direct_check(&ens, f, n_draws, &opts)?);
            }
            Ok(SuiteResult {
                hard_pass: reports.iter().all(|r| r.passed),
                report: json!(reports),
            })
        }
        "products" => {
            let ens = ctx.build_ensemble()?;
            let p = ens.p();
            let a = RVector::from_element(p, 1.0 / (p as f64).sqrt());
            let mut entrywise = Vec::new();
            for m in [2, 3] {
                entrywise.push(entrywise_product_check(&ens, &a, m, false, n_draws, &opts)?);
            }
            let centering = quadratic_form_check(
                &ens,
                &(RMatrix::identity(p, p) / (p as f64).sqrt()),
                z_point(ctx),
                n_draws,
                &opts,
            )?;
            Ok(SuiteResult {
                hard_pass: true,
                report: json!({ "entrywise": entrywise, "quadratic_form": centering }),
            })
        }
        "hanson_wright" => {
            let ens = ctx.build_ensemble()?;
            let p = ens.p();
            let r = hanson_wright_check(
                &ens,
                &(RMatrix::identity(p, p) / (p as f64).sqrt()),
                n_draws,
                &opts,
            )?;
            Ok(SuiteResult {
                hard_pass: true,
                report: json!(r),
            })
        }
        other => Err(Failure::config(format!("unknown suite {other:?}"))),
    }
}

fn rates(ctx: &Context, n_draws: usize, opts: &VerifyOptions) -> Result<SuiteResult, Failure> {
    let base = ctx.config.ensemble()?;
    let n_list = match ctx.config.verify.as_ref().map(|v| v.n_list.clone()) {
        Some(l) if !l.is_empty() => l,
        _ => return Err(Failure::config("the rates suite needs `verify.n_list`")),
    };
    // validate every size up front so configuration errors exit 2
    for &n in &n_list {
        resized(base, n)?.build(&ctx.base_dir, ctx.config.seed)?;
    }
    let family = |n: usize| -> rmeq::Result<ColumnEnsemble> {
        resized(base, n)
            .map_err(|f| rmeq::Error::Config(f.message))?
            .build(&ctx.base_dir, ctx.config.seed)
    };
    let z = z_point(ctx);
    let resolvent = resolvent_rate_scan(family, z, &n_list, n_draws, &ctx.config.solver(), opts)?;
    let loo = leave_one_out_rate_check(
        family,
        z,
        &n_list,
        n_draws,
        LooEstimator::ClassAverage,
        opts,
    )?;
    for table in [&resolvent.frobenius, &resolvent.stieltjes_std, &loo] {
        eprintln!(
            "{}: slope {} ({:?})",
            table.metric,
            table.slope.map_or("n/a".into(), |s| format!("{s:+.3}")),
            table.status
        );
    }
    Ok(SuiteResult {
        hard_pass: true,
        report: json!({ "resolvent": resolvent, "leave_one_out": loo }),
    })
}

/// Tails of `Re (1/p) tr Q^z`; the empirical tail must not increase.
fn tails(ctx: &Context, n_draws: usize, opts: &VerifyOptions) -> Result<SuiteResult, Failure> {
    let ens = ctx.build_ensemble()?;
    let spec = FunctionalSpec::Stieltjes {
        z: z_point(ctx),
        part: Part::Re,
    };
    let r = measure_functional(&ens, &spec, n_draws, opts)?;
    let monotone = r.tails.windows(2).all(|w| w[1][1] <= w[0][1]);
    Ok(SuiteResult {
        hard_pass: monotone,
        report: json!({ "report": r, "monotone_tails": monotone }),
    })
}
