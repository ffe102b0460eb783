//! JSON run configuration for `frontier`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqread::chargemodel::DEFAULT_TAIL_BOUND;
use seqread::montecarlo::{log_spaced, DecisionMode, Method};
use seqread::{Priors, RateSet, SweepConfig, UpdateMatrixSet};

use crate::output::{usage, UsageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub big_gamma_plus: f64,
    pub big_gamma_minus: f64,
    /// Bin duration (s).
    pub dt: f64,
    /// Count cutoff; chosen from `tail_bound` when omitted.
    #[serde(default)]
    pub dn_max: Option<usize>,
    #[serde(default)]
    pub tail_bound: Option<f64>,
    /// Cached matrices to use instead of building them; their rates must
    /// match the ones above.
    #[serde(default)]
    pub matrices: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Trajectories per initial state.
    pub n_traj: u64,
    pub t_max: f64,
    /// Fixed readout times; every bin up to `t_max` when empty.
    #[serde(default)]
    pub fixed_times: Vec<f64>,
    #[serde(default)]
    pub plus_gaps: Option<Vec<f64>>,
    #[serde(default)]
    pub minus_gaps: Option<Vec<f64>>,
    /// Points of the default log-spaced gap grids.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_prior")]
    pub prior_plus: f64,
    #[serde(default = "default_mode")]
    pub mode: DecisionMode,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Error rate at which speedups are measured; the counting floor when
    /// omitted.
    #[serde(default)]
    pub target_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: default_prefix(),
        }
    }
}

fn default_grid_points() -> usize {
    SweepConfig::DEFAULT_GRID_POINTS
}
fn default_prior() -> f64 {
    0.5
}
fn default_mode() -> DecisionMode {
    DecisionMode::Mle
}
fn default_methods() -> Vec<Method> {
    vec![Method::Counting, Method::Nonadaptive, Method::Adaptive]
}
fn default_dir() -> PathBuf {
    PathBuf::from(".")
}
fn default_prefix() -> String {
    "frontier".into()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError::new(format!("{}: {e}", path.display())).into())
    }

    pub fn rates(&self) -> anyhow::Result<RateSet> {
        let m = &self.model;
        RateSet::new(m.gamma_plus, m.gamma_minus, m.big_gamma_plus, m.big_gamma_minus, m.dt).map_err(usage)
    }

    pub fn priors(&self) -> anyhow::Result<Priors> {
        Priors::new(self.sweep.prior_plus).map_err(usage)
    }

    /// The sweep in library form, validated against the bin duration.
    pub fn sweep_config(&self) -> anyhow::Result<SweepConfig> {
        let s = &self.sweep;
        let mut c = SweepConfig::new(s.n_traj, s.t_max, self.priors()?, s.mode, self.seed);
        let grid = log_spaced(SweepConfig::DEFAULT_MIN_GAP, SweepConfig::DEFAULT_MAX_GAP, s.grid_points);
        c.fixed_times = s.fixed_times.clone();
        c.plus_gaps = s.plus_gaps.clone().unwrap_or_else(|| grid.clone());
        c.minus_gaps = s.minus_gaps.clone().unwrap_or(grid);
        c.validate(self.model.dt).map_err(usage)?;
        if s.methods.is_empty() {
            return Err(UsageError::new("sweep.methods must not be empty").into());
        }
        if let Some(t) = s.target_eps {
            if !(t > 0.0 && t < 0.5) {
                return Err(UsageError::new(format!("sweep.target_eps {t} outside (0, 0.5)")).into());
            }
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(UsageError::new("output.prefix must be a plain file-name prefix").into());
        }
        Ok(c)
    }

    pub fn has(&self, m: Method) -> bool {
        self.sweep.methods.contains(&m)
    }

    pub fn matrices(&self) -> anyhow::Result<UpdateMatrixSet> {
        let rates = self.rates()?;
        if let Some(path) = &self.model.matrices {
            let m = UpdateMatrixSet::load(path)?;
            if *m.rates() != rates {
                return Err(UsageError::new(format!(
                    "cached matrices in {} were built for other rates",
                    path.display()
                ))
                .into());
            }
            return Ok(m);
        }
        let bound = self.model.tail_bound.unwrap_or(DEFAULT_TAIL_BOUND);
        let m = match self.model.dn_max {
            Some(n) => UpdateMatrixSet::build_with_bound(rates, n, bound),
            None => UpdateMatrixSet::build_auto(rates, bound),
        };
        m.map_err(usage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"gamma_plus": 720, "gamma_minus": 50, "big_gamma_plus": 3.6,
                  "big_gamma_minus": 0.98, "dt": 1e-4, "dn_max": 5},
        "sweep": {"n_traj": 10, "t_max": 0.025},
        "seed": 3
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c: RunConfig = serde_json::from_str(BASE).unwrap();
        assert_eq!(c.sweep.mode, DecisionMode::Mle);
        assert_eq!(c.sweep.methods.len(), 3);
        let s = c.sweep_config().unwrap();
        assert_eq!(s.plus_gaps.len(), 50);
        assert_eq!(s.master_seed, 3);
        assert_eq!(c.matrices().unwrap().dn_max(), 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BASE.replace("\"seed\": 3", "\"seed\": 3, \"extra\": 1");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
        let bad = BASE.replace("\"t_max\": 0.025", "\"t_max\": 0.025, \"tmax\": 1");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
        let bad = BASE.replace("\"t_max\": 0.025", "\"t_max\": 0.025, \"methods\": [\"magic\"]");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let c: RunConfig = serde_json::from_str(&BASE.replace("0.025", "0.02505")).unwrap();
        let e = c.sweep_config().unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
        let c: RunConfig = serde_json::from_str(&BASE.replace("\"dn_max\": 5", "\"dn_max\": 1")).unwrap();
        assert!(c.matrices().unwrap_err().downcast_ref::<UsageError>().is_some());
    }
}
