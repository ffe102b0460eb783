use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use seqread::counting::counting_frontier;
use seqread::io::Provenance;
use seqread::montecarlo::{
    pareto_optimize, run_nonadaptive, run_sweep, speedup_at_target, time_to_reach, DecisionMode, Method,
};
use seqread::{FrontierPoint, FrontierTable, Priors, ReadoutRule, SweepConfig};

use crate::config::{ModelSection, RunConfig, SweepSection};
use crate::output::emit;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON run configuration.
    config: PathBuf,
    /// Validate the configuration and print the plan without running.
    #[arg(long)]
    dry_run: bool,
    /// Overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Everything the numbers depend on; hashed into the provenance digest.
#[derive(Serialize)]
struct Effective<'a> {
    model: &'a ModelSection,
    sweep: &'a SweepSection,
    resolved: &'a SweepConfig,
    dn_max: usize,
}

#[derive(Serialize)]
struct Plan<'a> {
    provenance: &'a Provenance,
    sweep: &'a SweepConfig,
    methods: &'a [Method],
    n_bins: usize,
    fixed_times: usize,
    stopping_pairs: usize,
    dn_max: usize,
    tail_mass: f64,
    files: Vec<String>,
}

#[derive(Serialize)]
struct PointSummary {
    eps: f64,
    #[serde(rename = "T")]
    time: f64,
    eps_plus: f64,
    eps_minus: f64,
    #[serde(rename = "T_plus")]
    time_plus: f64,
    #[serde(rename = "T_minus")]
    time_minus: f64,
    rule: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    provenance: &'a Provenance,
    model: &'a ModelSection,
    sweep: &'a SweepConfig,
    prior_plus: f64,
    mode: DecisionMode,
    dn_max: usize,
    minima: BTreeMap<&'static str, PointSummary>,
    target_eps: Option<f64>,
    /// Fixed-time over adaptive readout time at `target_eps`.
    speedup_at_target: Option<f64>,
    /// Counting window over adaptive readout time at `target_eps`.
    speedup_vs_counting: Option<f64>,
    files: Vec<String>,
}

fn summarize(p: &FrontierPoint) -> PointSummary {
    let rule = match p.rule {
        ReadoutRule::FixedTime { t_f } => format!("fixed t_f={t_f}"),
        ReadoutRule::CountThreshold { t_f, nu } => format!("count t_f={t_f} nu={nu}"),
        ReadoutRule::Stopping {
            plus_gap,
            minus_gap,
            t_max,
        } => format!("stop p_plus=1-{plus_gap} p_minus={minus_gap} t_max={t_max}"),
        ReadoutRule::Symmetric { lambda_bar, t_max } => format!("symmetric lambda_bar={lambda_bar} t_max={t_max}"),
    };
    PointSummary {
        eps: p.err_rate,
        time: p.avg_time,
        eps_plus: p.err_plus,
        eps_minus: p.err_minus,
        time_plus: p.time_plus,
        time_minus: p.time_minus,
        rule,
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let sweep = cfg.sweep_config()?;
    let rates = cfg.rates()?;
    let matrices = cfg.matrices()?;
    let dt = rates.dt;
    let effective = Effective {
        model: &cfg.model,
        sweep: &cfg.sweep,
        resolved: &sweep,
        dn_max: matrices.dn_max(),
    };
    let provenance = Provenance::new(&effective, Some(cfg.seed)).with_rates(&rates);
    let dir = args.out_dir.unwrap_or_else(|| cfg.output.dir.clone());
    let prefix = &cfg.output.prefix;
    let file = |name: &str| dir.join(format!("{prefix}_{name}"));
    let mut files: Vec<String> = Vec::new();
    for m in [Method::Counting, Method::Nonadaptive] {
        if cfg.has(m) {
            files.push(format!("{prefix}_{}.csv", m.label()));
        }
    }
    if cfg.has(Method::Adaptive) {
        files.push(format!("{prefix}_adaptive.csv"));
        files.push(format!("{prefix}_adaptive_grid.csv"));
    }
    files.push(format!("{prefix}_summary.json"));

    if args.dry_run {
        let plan = Plan {
            provenance: &provenance,
            sweep: &sweep,
            methods: &cfg.sweep.methods,
            n_bins: sweep.n_bins(dt)?,
            fixed_times: sweep.fixed_bins(dt)?.len(),
            stopping_pairs: sweep.plus_gaps.len() * sweep.minus_gaps.len(),
            dn_max: matrices.dn_max(),
            tail_mass: matrices.tail_mass(),
            files: files.iter().map(|f| dir.join(f).display().to_string()).collect(),
        };
        return emit(&(serde_json::to_string_pretty(&plan)? + "\n"), None);
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let priors = sweep.priors()?;
    let mut tables: Vec<FrontierTable> = Vec::new();
    if cfg.has(Method::Counting) {
        let windows: Vec<f64> = sweep.fixed_bins(dt)?.iter().map(|&k| k as f64 * dt).collect();
        let decision_priors = match sweep.mode {
            DecisionMode::Mle => Priors::equal(),
            DecisionMode::Map => priors,
        };
        log::info!("counting baseline over {} windows", windows.len());
        tables.push(counting_frontier(
            rates,
            &windows,
            decision_priors,
            priors,
            sweep.mode,
            provenance.clone(),
        )?);
    }
    let mut adaptive_grid = None;
    if cfg.has(Method::Adaptive) {
        log::info!("sweep: {} trajectories per state", sweep.n_traj);
        let r = run_sweep(&sweep, &matrices)?;
        if cfg.has(Method::Nonadaptive) {
            tables.push(r.nonadaptive);
        }
        adaptive_grid = Some(r.adaptive);
    } else if cfg.has(Method::Nonadaptive) {
        tables.push(run_nonadaptive(&sweep, &matrices)?);
    }
    if let Some(grid) = &adaptive_grid {
        tables.push(pareto_optimize(grid)?);
    }
    for t in tables.iter_mut().chain(adaptive_grid.iter_mut()) {
        t.provenance = provenance.clone();
    }

    let find = |m: Method| tables.iter().find(|t| t.method == m);
    let counting = find(Method::Counting);
    let nonadaptive = find(Method::Nonadaptive);
    let adaptive = find(Method::Adaptive);
    let target = cfg
        .sweep
        .target_eps
        .or_else(|| counting.and_then(|t| t.min_error()).map(|p| p.err_rate));
    let speedup = match (target, adaptive, nonadaptive) {
        (Some(eps), Some(a), Some(n)) => match speedup_at_target(a, &pareto_optimize(n)?, eps) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        },
        _ => None,
    };
    let vs_counting = match (target, adaptive, counting) {
        (Some(eps), Some(a), Some(c)) => match (time_to_reach(c, eps), time_to_reach(a, eps)) {
            (Some(tc), Some(ta)) if ta > 0.0 => Some(tc / ta),
            _ => None,
        },
        _ => None,
    };

    for t in &tables {
        emit(&t.to_csv(), Some(&file(&format!("{}.csv", t.method.label()))))?;
    }
    if let Some(grid) = &adaptive_grid {
        emit(&grid.to_csv(), Some(&file("adaptive_grid.csv")))?;
    }
    let summary = Summary {
        provenance: &provenance,
        model: &cfg.model,
        sweep: &sweep,
        prior_plus: priors.p_plus(),
        mode: sweep.mode,
        dn_max: matrices.dn_max(),
        minima: tables
            .iter()
            .filter_map(|t| t.min_error().map(|p| (t.method.label(), summarize(p))))
            .collect(),
        target_eps: target,
        speedup_at_target: speedup,
        speedup_vs_counting: vs_counting,
        files: files.clone(),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    emit(&json, Some(&file("summary.json")))?;
    // the grids are in the file; keep the terminal copy short
    let mut brief = serde_json::to_value(&summary)?;
    if let Some(o) = brief.as_object_mut() {
        o.remove("sweep");
        o.remove("model");
    }
    emit(&(serde_json::to_string_pretty(&brief)? + "\n"), None)
}
