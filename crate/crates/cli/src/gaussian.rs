use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ArgGroup;
use serde::Serialize;

use seqread::gaussian::{simulate_first_passage, ErrorTime, FirstPassageOptions, SeriesPolicy};
use seqread::io::{format_sig, Provenance};
use seqread::{GaussianModel, StoppingRule};

use crate::grid::Grid;
use crate::output::{emit, opt_sig, parse_count, usage, UsageError};

#[derive(Debug, clap::Args, Serialize)]
#[command(group(ArgGroup::new("threshold").required(true).args(["lambda_bar", "lambda_grid"])))]
pub struct Args {
    /// Signal-to-noise rate r.
    #[arg(long)]
    r: f64,
    /// Symmetric stopping threshold λ̄.
    #[arg(long)]
    lambda_bar: Option<f64>,
    /// Threshold grid start:stop:step.
    #[arg(long)]
    lambda_grid: Option<Grid>,
    /// Maximum readout time; omitted means no timeout.
    #[arg(long)]
    t_max: Option<f64>,
    /// First-passage simulations per row (needs --t-max).
    #[arg(long, value_parser = parse_count, requires = "t_max")]
    mc_runs: Option<u64>,
    /// Simulation step; defaults to 10⁻³/r.
    #[arg(long, requires = "mc_runs")]
    dt_sim: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let model = GaussianModel::new(args.r).map_err(usage)?;
    let lambdas = match (args.lambda_bar, args.lambda_grid) {
        (Some(l), _) => vec![l],
        (None, Some(g)) => g.values(),
        (None, None) => unreachable!("clap enforces the group"),
    };
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(UsageError::new(format!("lambda_bar {l} must be finite and >= 0")).into());
    }
    if let Some(t) = args.t_max {
        if !(t > 0.0) {
            return Err(UsageError::new(format!("--t-max {t} must be > 0")).into());
        }
    }
    let mut opts_base = args.mc_runs.map(|n| FirstPassageOptions::for_model(&model, n, args.seed));
    if let (Some(o), Some(dt)) = (opts_base.as_mut(), args.dt_sim) {
        if !(dt > 0.0) {
            return Err(UsageError::new("--dt-sim must be > 0").into());
        }
        o.dt_sim = dt;
    }
    if args.mc_runs == Some(0) {
        return Err(UsageError::new("--mc-runs must be >= 1").into());
    }

    let mut csv = Provenance::new(&args, Some(args.seed)).comment_block();
    csv.push_str("lambda_bar,r,t_max,eps,T,t_f,speedup,mc_eps,mc_eps_se,mc_T,mc_T_se,mc_runs\n");
    for &lb in &lambdas {
        let et = match args.t_max {
            Some(t) if lb > 0.0 => model.adaptive_error_time_bounded(lb, t, SeriesPolicy::default())?,
            _ => model.adaptive_error_time_unbounded(lb)?,
        };
        let (t_f, speedup) = fixed_comparison(&model, et);
        let mc = match (opts_base, args.t_max) {
            (Some(o), Some(t)) => Some(simulate_first_passage(&model, &StoppingRule::symmetric(lb, t)?, &o)?),
            _ => None,
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            format_sig(lb),
            format_sig(args.r),
            opt_sig(args.t_max),
            format_sig(et.error),
            format_sig(et.time),
            opt_sig(t_f),
            opt_sig(speedup),
            opt_sig(mc.map(|m| m.error)),
            opt_sig(mc.map(|m| m.error_se)),
            opt_sig(mc.map(|m| m.time)),
            opt_sig(mc.map(|m| m.time_se)),
            mc.map(|m| m.n_runs.to_string()).unwrap_or_default(),
        );
    }
    emit(&csv, args.out.as_deref())
}

/// Fixed readout time with the same error, and its ratio to `T`.
fn fixed_comparison(model: &GaussianModel, et: ErrorTime<f64>) -> (Option<f64>, Option<f64>) {
    if !(et.error > 0.0 && et.error < 0.5) {
        return (None, None);
    }
    let t_f = model.fixed_time_for_error(et.error).ok();
    let speedup = t_f.filter(|_| et.time > 0.0).map(|t| t / et.time);
    (t_f, speedup)
}
