//! File formats: count trajectories, provenance headers, number formatting
//! and configuration digests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chargemodel::{RateSet, Trajectory};
use crate::decision::State;
use crate::montecarlo::SweepConfig;
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Extension picked up by [`read_trajectories`] when given a directory.
pub const TRAJECTORY_EXT: &str = "counts";

/// Formats `x` with 12 significant digits in scientific notation.
pub fn format_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// What produced an output file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    /// `γ₊, γ₋, Γ₊, Γ₋, δt` when the output depends on charge-model rates.
    pub rates: Option<[f64; 5]>,
}

impl Provenance {
    pub fn new<T: Serialize>(config: &T, seed: Option<u64>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config_digest: config_digest(config),
            seed,
            rates: None,
        }
    }

    pub fn with_rates(mut self, rates: &RateSet<f64>) -> Self {
        self.rates = Some(rate_array(rates));
        self
    }

    pub fn for_sweep(config: &SweepConfig, rates: &RateSet<f64>) -> Self {
        // the digest covers the rates as well, since results depend on them
        let digest = config_digest(&(config, rate_array(rates)));
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config_digest: digest,
            seed: Some(config.master_seed),
            rates: Some(rate_array(rates)),
        }
    }

    /// `# key=value` lines for CSV headers.
    pub fn comment_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool_version={}", self.tool_version);
        let _ = writeln!(s, "# config_digest={}", self.config_digest);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed={seed}");
        }
        if let Some(r) = self.rates {
            let _ = writeln!(
                s,
                "# rates gamma_plus={} gamma_minus={} big_gamma_plus={} big_gamma_minus={} dt={}",
                r[0], r[1], r[2], r[3], r[4]
            );
        }
        s
    }
}

fn rate_array(r: &RateSet<f64>) -> [f64; 5] {
    [r.gamma_plus, r.gamma_minus, r.big_gamma_plus, r.big_gamma_minus, r.dt]
}

/// Parses one trajectory file: a `# dt_seconds=<value>` header followed by
/// one nonnegative integer count per line. Blank lines are skipped.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Option<Trajectory>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Ok(None);
    };
    let dt = header
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|h| h.strip_prefix("dt_seconds="))
        .ok_or_else(|| err(hline + 1, "expected header '# dt_seconds=<value>'".into()))?
        .trim()
        .parse::<f64>()
        .map_err(|e| err(hline + 1, format!("bad dt_seconds: {e}")))?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(err(hline + 1, format!("dt_seconds must be > 0, got {dt}")));
    }
    let mut counts = Vec::new();
    for (i, l) in lines {
        let l = l.trim();
        let c = l.parse::<i64>().map_err(|e| err(i + 1, format!("'{l}' is not an integer count: {e}")))?;
        if c < 0 {
            return Err(err(i + 1, format!("negative count {c}")));
        }
        let c = u32::try_from(c).map_err(|_| err(i + 1, format!("count {c} too large")))?;
        counts.push(c);
    }
    Ok(Some(Trajectory { counts, dt }))
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.counts.len() * 2 + 32);
    let _ = writeln!(s, "# dt_seconds={}", traj.dt);
    for c in &traj.counts {
        let _ = writeln!(s, "{c}");
    }
    s
}

pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_trajectory(traj)).map_err(|e| Error::io(path, e))
}

/// Reads a trajectory file, or every `*.counts` file of a directory in
/// name order. All trajectories must share one bin duration. Empty files
/// are skipped with a warning.
pub fn read_trajectories(source: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let source = source.as_ref();
    let files: Vec<PathBuf> = if source.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(source)
            .map_err(|e| Error::io(source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == TRAJECTORY_EXT))
            .collect();
        v.sort();
        v
    } else {
        vec![source.to_path_buf()]
    };
    let mut out: Vec<(Trajectory, PathBuf)> = Vec::with_capacity(files.len());
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        match parse_trajectory(&text, &f)? {
            None => log::warn!("{}: empty file, skipped", f.display()),
            Some(t) => {
                if let Some((first, first_path)) = out.first() {
                    if first.dt != t.dt {
                        return Err(Error::MixedBinDuration {
                            first: first.dt,
                            first_path: first_path.display().to_string(),
                            other: t.dt,
                            other_path: f.display().to_string(),
                        });
                    }
                }
                out.push((t, f));
            }
        }
    }
    Ok(out.into_iter().map(|(t, _)| t).collect())
}

/// Readouts with a known initial state, all of one bin duration.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledReadouts {
    pub dt: f64,
    pub readouts: Vec<(State, Vec<u32>)>,
}

/// Parses a labeled-readout file: a `# dt_seconds=<value>` header, then one
/// readout per line as `plus` or `minus` followed by comma-separated counts.
pub fn parse_labeled_readouts(text: &str, path: &Path) -> Result<LabeledReadouts> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let dt = header
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|h| h.strip_prefix("dt_seconds="))
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|dt| *dt > 0.0 && dt.is_finite())
        .ok_or_else(|| err(hline + 1, "expected header '# dt_seconds=<value>'".into()))?;
    let mut readouts = Vec::new();
    for (i, l) in lines {
        let mut fields = l.trim().split(',');
        let state = match fields.next().map(str::trim) {
            Some("plus") => State::Plus,
            Some("minus") => State::Minus,
            other => return Err(err(i + 1, format!("expected 'plus' or 'minus', got {other:?}"))),
        };
        let counts = fields
            .map(|f| f.trim().parse::<u32>().map_err(|e| err(i + 1, format!("bad count '{f}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        readouts.push((state, counts));
    }
    Ok(LabeledReadouts { dt, readouts })
}

pub fn format_labeled_readouts(data: &LabeledReadouts) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# dt_seconds={}", data.dt);
    for (state, counts) in &data.readouts {
        s.push_str(state.label());
        for c in counts {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

pub fn read_labeled_readouts(path: impl AsRef<Path>) -> Result<LabeledReadouts> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled_readouts(&text, path)
}

pub fn write_labeled_readouts(data: &LabeledReadouts, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_labeled_readouts(data)).map_err(|e| Error::io(path, e))
}
