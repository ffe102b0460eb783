use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{ArgGroup, ValueEnum};
use serde::Serialize;

use seqread::decay::{simulate_decay, ChannelMode, DecayReadout};
use seqread::io::{format_sig, Provenance};
use seqread::DecayModel;

use crate::grid::Grid;
use crate::output::{emit, opt_sig, parse_count, usage, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    TwoChannel,
}

#[derive(Debug, clap::Args, Serialize)]
#[command(group(ArgGroup::new("time").required(true).args(["tf", "tf_grid"])))]
pub struct Args {
    /// Decay time τ of the bright state.
    #[arg(long)]
    tau: f64,
    /// Readout time t_f (also the adaptive timeout).
    #[arg(long)]
    tf: Option<f64>,
    /// Readout-time grid start:stop:step.
    #[arg(long)]
    tf_grid: Option<Grid>,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    /// Simulated adaptive readouts per row.
    #[arg(long, value_parser = parse_count)]
    mc_runs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let channel = match args.mode {
        Mode::Single => ChannelMode::SingleChannel,
        Mode::TwoChannel => ChannelMode::TwoChannel,
    };
    let model = DecayModel::new(args.tau, channel).map_err(usage)?;
    let times = match (args.tf, args.tf_grid) {
        (Some(t), _) => vec![t],
        (None, Some(g)) => g.values(),
        (None, None) => unreachable!("clap enforces the group"),
    };
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(UsageError::new(format!("readout time {t} must be finite and >= 0")).into());
    }
    if args.mc_runs == Some(0) {
        return Err(UsageError::new("--mc-runs must be >= 1").into());
    }
    let label = match args.mode {
        Mode::Single => "single",
        Mode::TwoChannel => "two-channel",
    };
    let mut csv = Provenance::new(&args, Some(args.seed)).comment_block();
    csv.push_str("tau,mode,t_f,eps,T,speedup,mc_eps,mc_eps_se,mc_T,mc_T_se,mc_runs\n");
    for &t_f in &times {
        let a = model.adaptive(t_f)?;
        let speedup = model.speedup(t_f)?;
        let mc = match args.mc_runs {
            Some(n) => Some(simulate_decay(&model, DecayReadout::Adaptive { t_max: t_f }, n, args.seed)?),
            None => None,
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            format_sig(args.tau),
            label,
            format_sig(t_f),
            format_sig(a.error),
            format_sig(a.time),
            format_sig(speedup),
            opt_sig(mc.map(|m| m.error)),
            opt_sig(mc.map(|m| m.error_se)),
            opt_sig(mc.map(|m| m.time)),
            opt_sig(mc.map(|m| m.time_se)),
            mc.map(|m| m.n_runs.to_string()).unwrap_or_default(),
        );
    }
    emit(&csv, args.out.as_deref())
}
