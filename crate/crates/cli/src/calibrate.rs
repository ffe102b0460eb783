use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use serde::Serialize;

use seqread::calibration::{
    calibrate, ingest_trajectories, labeled_error_curve, model_error_curve, prepared_error_curve,
    preparation_error_fit, CalibrationOptions, CalibrationReport, DataSplit, EtaFit, PreparedErrorCurve,
};
use seqread::chargemodel::DEFAULT_TAIL_BOUND;
use seqread::io::{format_sig, read_labeled_readouts, Provenance};
use seqread::{RateSet, State, UpdateMatrixSet};

use crate::output::{emit, parse_count, usage, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Split(#[serde(serialize_with = "split_str")] DataSplit);

fn split_str<S: serde::Serializer>(s: &DataSplit, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&match s {
        DataSplit::Parity => "parity".to_string(),
        DataSplit::All => "all".to_string(),
        DataSplit::First { n } => format!("first:{n}"),
    })
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "parity" => Ok(Split(DataSplit::Parity)),
            "all" => Ok(Split(DataSplit::All)),
            _ => s
                .strip_prefix("first:")
                .and_then(|n| n.parse().ok())
                .map(|n| Split(DataSplit::First { n }))
                .ok_or_else(|| format!("expected parity, all or first:<n>, got '{s}'")),
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Trajectory file, or directory of `*.counts` files.
    #[serde(skip)]
    data: PathBuf,
    /// Calibration/testing split: parity, all or first:<n>.
    #[arg(long, default_value = "parity")]
    split: Split,
    /// Rebinned bin width (ms) for the histogram and relaxation curves.
    #[arg(long, default_value_t = 10.0)]
    rebin_ms: f64,
    /// Subtrajectory length (s).
    #[arg(long, default_value_t = 1.0)]
    subtraj_s: f64,
    /// Known preparation error; reports the corrected error curve.
    #[arg(long, conflicts_with = "fit_eta")]
    eta: Option<f64>,
    /// Fit the preparation error against a simulated model curve.
    #[arg(long)]
    fit_eta: bool,
    /// Readouts with known initial states for the error curve; otherwise the
    /// testing set is labeled from a preparation window.
    #[arg(long)]
    #[serde(skip)]
    labeled: Option<PathBuf>,
    /// Preparation window (ms) for unlabeled testing data.
    #[arg(long, default_value_t = 25.0)]
    prep_ms: f64,
    /// Readout length (ms) of the error curve.
    #[arg(long, default_value_t = 25.0)]
    readout_ms: f64,
    /// Simulated trajectories per state for the model curve.
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    model_runs: u64,
    /// Count cutoff of the update matrices; chosen automatically when omitted.
    #[arg(long)]
    dn_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for calibration.json and error_curve.csv; the report goes
    /// to stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct Output<'a> {
    provenance: &'a Provenance,
    trajectories: usize,
    total_bins: usize,
    calibration: &'a CalibrationReport,
    preparation: Option<&'a EtaFit>,
}

fn bins(name: &str, ms: f64, dt: f64) -> anyhow::Result<usize> {
    let x = ms * 1e-3 / dt;
    let k = x.round();
    if !(k >= 1.0) || (x - k).abs() > 1e-6 * k {
        return Err(UsageError::new(format!("--{name} {ms} ms is not a positive multiple of the {dt} s bin")).into());
    }
    Ok(k as usize)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.model_runs == 0 {
        return Err(UsageError::new("--model-runs must be >= 1").into());
    }
    let trajs = ingest_trajectories(&args.data)?;
    if trajs.is_empty() {
        return Err(anyhow!("no trajectories found in {}", args.data.display()));
    }
    let dt = trajs[0].dt;
    let options = CalibrationOptions {
        split: args.split.0,
        rebin: bins("rebin-ms", args.rebin_ms, dt)?,
        subtraj_bins: bins("subtraj-s", args.subtraj_s * 1e3, dt)?,
    };
    if options.subtraj_bins % options.rebin != 0 {
        return Err(UsageError::new("--subtraj-s must be a multiple of --rebin-ms").into());
    }
    let total_bins = trajs.iter().map(|t| t.len()).sum();
    log::info!("{} trajectories, {total_bins} bins of {dt} s", trajs.len());
    let report = calibrate(&trajs, options)?;

    let preparation = if args.fit_eta || args.eta.is_some() {
        let rates = RateSet::new(
            report.gamma_plus,
            report.gamma_minus,
            report.big_gamma_plus,
            report.big_gamma_minus,
            dt,
        )?;
        let m = match args.dn_max {
            Some(n) => UpdateMatrixSet::build_with_bound(rates, n, DEFAULT_TAIL_BOUND).map_err(usage)?,
            None => UpdateMatrixSet::build_auto(rates, DEFAULT_TAIL_BOUND)?,
        };
        let read_bins = bins("readout-ms", args.readout_ms, dt)?;
        let curve = measured_curve(&args, &trajs, &m, read_bins, dt)?;
        let model = model_error_curve(&m, curve.times.len(), args.model_runs, args.seed)?;
        let fit = preparation_error_fit(&curve, &model, args.eta).map_err(usage)?;
        log::info!("preparation error {:.4} ({} plus, {} minus)", fit.eta, curve.n_plus, curve.n_minus);
        Some(fit)
    } else {
        None
    };

    let digest_input = (&args, trajs.len(), total_bins, dt);
    let provenance = Provenance::new(&digest_input, Some(args.seed));
    let out = Output {
        provenance: &provenance,
        trajectories: trajs.len(),
        total_bins,
        calibration: &report,
        preparation: preparation.as_ref(),
    };
    let json = serde_json::to_string_pretty(&out)? + "\n";
    match &args.out_dir {
        None => emit(&json, None),
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            emit(&json, Some(&dir.join("calibration.json")))?;
            if let Some(fit) = &preparation {
                emit(&curve_csv(&provenance, fit), Some(&dir.join("error_curve.csv")))?;
            }
            Ok(())
        }
    }
}

fn measured_curve(
    args: &Args,
    trajs: &[seqread::Trajectory],
    m: &UpdateMatrixSet,
    read_bins: usize,
    dt: f64,
) -> anyhow::Result<PreparedErrorCurve> {
    if let Some(path) = &args.labeled {
        let data = read_labeled_readouts(path)?;
        if data.dt != dt {
            return Err(anyhow!(
                "{}: bin {} s differs from the calibration data ({dt} s)",
                path.display(),
                data.dt
            ));
        }
        let read = data.readouts.iter().map(|(_, c)| c.len()).min().unwrap_or(0).min(read_bins);
        if read == 0 {
            return Err(anyhow!("{}: no readouts", path.display()));
        }
        let labeled: Vec<(State, &[u32])> = data.readouts.iter().map(|(s, c)| (*s, &c[..read])).collect();
        return Ok(labeled_error_curve(&labeled, m, dt)?);
    }
    let (_, test) = args.split.0.apply(trajs);
    if test.is_empty() {
        return Err(UsageError::new("no testing trajectories for the error curve; change --split or pass --labeled").into());
    }
    let test: Vec<seqread::Trajectory> = test.into_iter().cloned().collect();
    Ok(prepared_error_curve(&test, m, bins("prep-ms", args.prep_ms, dt)?, read_bins)?)
}

fn curve_csv(provenance: &Provenance, fit: &EtaFit) -> String {
    let mut s = provenance.comment_block();
    let _ = writeln!(s, "# eta={} fitted={}", format_sig(fit.eta), fit.fitted);
    s.push_str("t,measured,model,corrected\n");
    for i in 0..fit.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            format_sig(fit.times[i]),
            format_sig(fit.measured[i]),
            format_sig(fit.model[i]),
            format_sig(fit.corrected[i])
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_parsing() {
        assert_eq!("parity".parse::<Split>().unwrap().0, DataSplit::Parity);
        assert_eq!("first:60".parse::<Split>().unwrap().0, DataSplit::First { n: 60 });
        assert!("first:x".parse::<Split>().is_err());
        assert!("half".parse::<Split>().is_err());
    }

    #[test]
    fn bin_conversion() {
        assert_eq!(bins("rebin-ms", 10.0, 1e-4).unwrap(), 100);
        assert!(bins("rebin-ms", 0.05, 1e-4).is_err());
        assert!(bins("rebin-ms", 10.05, 1e-4).is_err());
    }
}
