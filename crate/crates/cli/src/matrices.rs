use std::path::PathBuf;

use clap::Subcommand;
use serde::Serialize;

use seqread::chargemodel::DEFAULT_TAIL_BOUND;
use seqread::{RateSet, UpdateMatrixSet};

use crate::output::{emit, usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    action: Action,
}

#[derive(Debug, Subcommand)]
enum Action {
    /// Build update matrices and write them as a bit-exact JSON cache.
    Dump {
        #[arg(long, default_value_t = 720.0)]
        gamma_plus: f64,
        #[arg(long, default_value_t = 50.0)]
        gamma_minus: f64,
        #[arg(long, default_value_t = 3.6)]
        big_gamma_plus: f64,
        #[arg(long, default_value_t = 0.98)]
        big_gamma_minus: f64,
        /// Bin duration (s).
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Count cutoff; chosen from --tail-bound when omitted.
        #[arg(long)]
        dn_max: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TAIL_BOUND)]
        tail_bound: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a cache and print its rates, cutoff and normalization.
    Load { path: PathBuf },
}

#[derive(Serialize)]
struct Info {
    gamma_plus: f64,
    gamma_minus: f64,
    big_gamma_plus: f64,
    big_gamma_minus: f64,
    dt: f64,
    dn_max: usize,
    tail_mass: f64,
    column_sums: [f64; 2],
    regime_valid: bool,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    match args.action {
        Action::Dump {
            gamma_plus,
            gamma_minus,
            big_gamma_plus,
            big_gamma_minus,
            dt,
            dn_max,
            tail_bound,
            out,
        } => {
            let rates = RateSet::new(gamma_plus, gamma_minus, big_gamma_plus, big_gamma_minus, dt).map_err(usage)?;
            let m = match dn_max {
                Some(n) => UpdateMatrixSet::build_with_bound(rates, n, tail_bound),
                None => UpdateMatrixSet::build_auto(rates, tail_bound),
            }
            .map_err(usage)?;
            m.save(&out)?;
            print_info(&m)
        }
        Action::Load { path } => print_info(&UpdateMatrixSet::load(&path)?),
    }
}

fn print_info(m: &UpdateMatrixSet) -> anyhow::Result<()> {
    let r = m.rates();
    let s = m.sum();
    let info = Info {
        gamma_plus: r.gamma_plus,
        gamma_minus: r.gamma_minus,
        big_gamma_plus: r.big_gamma_plus,
        big_gamma_minus: r.big_gamma_minus,
        dt: r.dt,
        dn_max: m.dn_max(),
        tail_mass: m.tail_mass(),
        column_sums: [s[0][0] + s[1][0], s[0][1] + s[1][1]],
        regime_valid: r.regime_valid(),
    };
    emit(&(serde_json::to_string_pretty(&info)? + "\n"), None)
}
