//! Monte Carlo evaluation of fixed-time and adaptive readouts of the charge
//! model.
//!
//! Trajectories are drawn bin by bin from the same measurement matrices that
//! define the likelihood, one independent random stream per trajectory. Each
//! trajectory is generated once and its `λ` path is scored against every
//! fixed readout time and every pair of stopping probabilities. Tallies are
//! integers (error counts, stopping bins), so reductions are exact and the
//! output does not depend on the number of worker threads.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chargemodel::{mat_vec, StateVector, Trajectory, UpdateMatrixSet};
use crate::decision::{decide, log_odds, threshold_from_priors, FrontierPoint, Priors, ReadoutRule, State};
use crate::io::{format_sig, Provenance};
use crate::linalg::Mat2;
use crate::rng::{self, Domain};
use crate::{Error, Result};

/// Trajectories per parallel work item. Fixed so that the partition of work
/// never depends on the thread count.
const CHUNK: u64 = 1024;

/// Monte Carlo estimate of error rate and average time with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub error: f64,
    pub error_se: f64,
    pub time: f64,
    pub time_se: f64,
    pub err_plus: f64,
    pub err_minus: f64,
    pub time_plus: f64,
    pub time_minus: f64,
    pub n_runs: u64,
}

/// Which threshold the decision is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionMode {
    /// Thresholds computed as if the priors were equal (`λ_th = 0`).
    Mle,
    /// Thresholds computed from the true priors.
    Map,
}

impl DecisionMode {
    pub fn label(self) -> &'static str {
        match self {
            DecisionMode::Mle => "mle",
            DecisionMode::Map => "map",
        }
    }

    pub fn threshold(self, priors: Priors) -> Result<f64> {
        match self {
            DecisionMode::Mle => Ok(0.0),
            DecisionMode::Map => threshold_from_priors(priors),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Counting,
    Nonadaptive,
    Adaptive,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Counting => "counting",
            Method::Nonadaptive => "nonadaptive",
            Method::Adaptive => "adaptive",
        }
    }
}

/// `n` values log-spaced between `lo` and `hi` inclusive, largest first.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![hi],
        _ => {
            let (a, b) = (hi.ln(), lo.ln());
            let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
            v[0] = hi;
            v[n - 1] = lo;
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Trajectories generated for each initial state.
    pub n_traj: u64,
    /// Maximum readout time `t_M` (s).
    pub t_max: f64,
    /// Fixed readout times (s); empty means every bin up to `t_max`.
    #[serde(default)]
    pub fixed_times: Vec<f64>,
    /// Distances `1 − p₊` of the upper stopping probability from 1.
    pub plus_gaps: Vec<f64>,
    /// Lower stopping probabilities `p₋`.
    pub minus_gaps: Vec<f64>,
    /// True prior `P(+)`, used to weight conditional results.
    pub prior_plus: f64,
    pub mode: DecisionMode,
    pub master_seed: u64,
}

impl SweepConfig {
    pub const DEFAULT_GRID_POINTS: usize = 50;
    pub const DEFAULT_MIN_GAP: f64 = 1e-14;
    pub const DEFAULT_MAX_GAP: f64 = 0.1;

    /// Default grids: every bin as a fixed time and 50 log-spaced stopping
    /// gaps in `[10⁻¹⁴, 0.1]` on each side.
    pub fn new(n_traj: u64, t_max: f64, priors: Priors, mode: DecisionMode, master_seed: u64) -> Self {
        let gaps = log_spaced(Self::DEFAULT_MIN_GAP, Self::DEFAULT_MAX_GAP, Self::DEFAULT_GRID_POINTS);
        Self {
            n_traj,
            t_max,
            fixed_times: Vec::new(),
            plus_gaps: gaps.clone(),
            minus_gaps: gaps,
            prior_plus: priors.p_plus(),
            mode,
            master_seed,
        }
    }

    pub fn priors(&self) -> Result<Priors> {
        Priors::new(self.prior_plus)
    }

    /// Number of bins `N = t_max / δt`.
    pub fn n_bins(&self, dt: f64) -> Result<usize> {
        to_bins("t_max", self.t_max, dt)
    }

    /// Fixed readout times converted to bin counts.
    pub fn fixed_bins(&self, dt: f64) -> Result<Vec<usize>> {
        let n = self.n_bins(dt)?;
        if self.fixed_times.is_empty() {
            return Ok((1..=n).collect());
        }
        self.fixed_times
            .iter()
            .map(|&t| {
                let k = to_bins("fixed_times", t, dt)?;
                if k > n {
                    return Err(Error::invalid("fixed_times", format!("{t} exceeds t_max = {}", self.t_max)));
                }
                Ok(k)
            })
            .collect()
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj", "must be >= 1"));
        }
        self.priors()?;
        self.fixed_bins(dt)?;
        for (name, gaps) in [("plus_gaps", &self.plus_gaps), ("minus_gaps", &self.minus_gaps)] {
            if gaps.is_empty() {
                return Err(Error::invalid(name, "must not be empty"));
            }
            if let Some(g) = gaps.iter().find(|&&g| !(g > 0.0 && g < 0.5)) {
                return Err(Error::invalid(name, format!("{g} outside (0, 0.5)")));
            }
        }
        Ok(())
    }
}

fn to_bins(name: &'static str, t: f64, dt: f64) -> Result<usize> {
    let x = t / dt;
    let k = x.round();
    if !(k >= 1.0) || (x - k).abs() > 1e-6 * k.max(1.0) {
        return Err(Error::invalid(name, format!("{t} s is not a positive multiple of the bin {dt} s")));
    }
    Ok(k as usize)
}

/// Error-rate versus average-time points for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierTable {
    pub method: Method,
    pub mode: DecisionMode,
    pub prior_plus: f64,
    /// Trajectories per state (0 for analytic tables).
    pub n_traj: u64,
    pub points: Vec<FrontierPoint>,
    pub provenance: Provenance,
}

impl FrontierTable {
    pub fn min_error(&self) -> Option<&FrontierPoint> {
        self.points.iter().min_by(|a, b| a.err_rate.total_cmp(&b.err_rate))
    }

    fn sort_by_time(&mut self) {
        self.points.sort_by(|a, b| a.avg_time.total_cmp(&b.avg_time).then(a.err_rate.total_cmp(&b.err_rate)));
    }

    /// CSV with `#`-prefixed provenance lines.
    pub fn to_csv(&self) -> String {
        let mut s = self.provenance.comment_block();
        s.push_str("method,prior_plus,mode,p_plus,p_minus,t_f,T,eps,eps_plus,eps_minus,T_plus,T_minus,n_traj,seed\n");
        let seed = self.provenance.seed.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            let (pp, pm, tf) = match p.rule {
                ReadoutRule::FixedTime { t_f } | ReadoutRule::CountThreshold { t_f, .. } => {
                    (String::new(), String::new(), format_sig(t_f))
                }
                ReadoutRule::Stopping {
                    plus_gap, minus_gap, ..
                } => (format_sig(1.0 - plus_gap), format_sig(minus_gap), String::new()),
                ReadoutRule::Symmetric { .. } => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.method.label(),
                format_sig(self.prior_plus),
                self.mode.label(),
                pp,
                pm,
                tf,
                format_sig(p.avg_time),
                format_sig(p.err_rate),
                format_sig(p.err_plus),
                format_sig(p.err_minus),
                format_sig(p.time_plus),
                format_sig(p.time_minus),
                self.n_traj,
                seed
            );
        }
        s
    }
}

/// Both tables of one sweep, computed from the same trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub nonadaptive: FrontierTable,
    pub adaptive: FrontierTable,
}

/// Draws one trajectory of `n_bins` bins starting from `initial`: each
/// count is sampled from `P_k(δn) = Tr[M(δn)ρ_k]` renormalized over the
/// stored counts, then `ρ` is conditioned on it.
pub fn generate_trajectory<R: Rng>(
    matrices: &UpdateMatrixSet,
    initial: &StateVector,
    n_bins: usize,
    rng: &mut R,
) -> Trajectory {
    let kernel = Kernel::new(matrices);
    let mut rho = initial.normalized().as_array();
    let mut probs = vec![0.0; kernel.m.len()];
    let counts = (0..n_bins)
        .map(|_| {
            let (n, p) = kernel.sample(rho, &mut probs, rng);
            let r = mat_vec(&kernel.m[n], rho);
            rho = [r[0] / p, r[1] / p];
            n as u32
        })
        .collect();
    Trajectory {
        counts,
        dt: matrices.rates().dt,
    }
}

#[inline]
fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    // rounding at the top end: last count with positive probability
    p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
}

/// Precomputed per-count data for the generator's inner loop.
struct Kernel {
    m: Vec<Mat2<f64>>,
    /// Column sums of each `M(δn)`, so `Tr[M v] = c·v`.
    c: Vec<[f64; 2]>,
}

impl Kernel {
    fn new(matrices: &UpdateMatrixSet) -> Self {
        let m = matrices.matrices().to_vec();
        let c = m.iter().map(|m| [m[0][0] + m[1][0], m[0][1] + m[1][1]]).collect();
        Self { m, c }
    }

    /// Samples a count for state `rho`; returns it with its probability.
    #[inline]
    fn sample<R: Rng>(&self, rho: [f64; 2], probs: &mut [f64], rng: &mut R) -> (usize, f64) {
        let mut total = 0.0;
        for (p, c) in probs.iter_mut().zip(&self.c) {
            *p = c[0] * rho[0] + c[1] * rho[1];
            total += *p;
        }
        let n = sample_index(probs, rng.random::<f64>() * total);
        (n, probs[n])
    }

    /// Fills `lambda[k]` with `λ` after `k + 1` bins of a trajectory started
    /// in `state`.
    ///
    /// The sampling state is the normalized likelihood vector of the true
    /// hypothesis; the other hypothesis is tracked alongside, and `λ` grows
    /// by the log ratio of the two one-bin traces.
    fn lambda_path<R: Rng>(&self, state: State, rng: &mut R, lambda: &mut [f64], probs: &mut [f64]) {
        let (mut rho, mut other) = match state {
            State::Plus => ([1.0, 0.0], [0.0, 1.0]),
            State::Minus => ([0.0, 1.0], [1.0, 0.0]),
        };
        let sign = if state == State::Plus { 1.0 } else { -1.0 };
        let mut l = 0.0f64;
        for out in lambda.iter_mut() {
            let (n, p) = self.sample(rho, probs, rng);
            let m = &self.m[n];
            let r = mat_vec(m, rho);
            rho = [r[0] / p, r[1] / p];
            let o = mat_vec(m, other);
            let s = o[0] + o[1];
            if s > 0.0 {
                other = [o[0] / s, o[1] / s];
                l += sign * (p / s).ln();
            } else {
                // the other hypothesis cannot produce this trajectory
                l = sign * f64::INFINITY;
                other = [0.0, 0.0];
            }
            *out = l;
        }
    }
}

/// Integer tallies for one initial state.
#[derive(Debug, Clone)]
struct Tally {
    n: u64,
    fixed_err: Vec<u64>,
    adaptive_err: Vec<u64>,
    adaptive_bins: Vec<u64>,
}

impl Tally {
    fn new(n_fixed: usize, n_pairs: usize) -> Self {
        Self {
            n: 0,
            fixed_err: vec![0; n_fixed],
            adaptive_err: vec![0; n_pairs],
            adaptive_bins: vec![0; n_pairs],
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.n += o.n;
        for (a, b) in self.fixed_err.iter_mut().zip(&o.fixed_err) {
            *a += b;
        }
        for (a, b) in self.adaptive_err.iter_mut().zip(&o.adaptive_err) {
            *a += b;
        }
        for (a, b) in self.adaptive_bins.iter_mut().zip(&o.adaptive_bins) {
            *a += b;
        }
    }
}

/// Threshold grids in the order the first-passage scan needs them.
struct Thresholds {
    lambda_th: f64,
    /// Upper thresholds ascending, with the index into `plus_gaps`.
    upper: Vec<(f64, usize)>,
    /// Lower thresholds descending, with the index into `minus_gaps`.
    lower: Vec<(f64, usize)>,
    n_minus: usize,
}

impl Thresholds {
    fn new(config: &SweepConfig, lambda_th: f64) -> Self {
        let mut upper: Vec<(f64, usize)> = config
            .plus_gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| (lambda_th + log_odds(1.0 - g, g), i))
            .collect();
        upper.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut lower: Vec<(f64, usize)> = config
            .minus_gaps
            .iter()
            .enumerate()
            .map(|(j, &g)| (lambda_th + log_odds(g, 1.0 - g), j))
            .collect();
        lower.sort_by(|a, b| b.0.total_cmp(&a.0));
        Self {
            lambda_th,
            upper,
            lower,
            n_minus: config.minus_gaps.len(),
        }
    }
}

/// Scratch buffers reused across the trajectories of a chunk.
struct Scratch {
    lambda: Vec<f64>,
    probs: Vec<f64>,
    first_up: Vec<usize>,
    first_low: Vec<usize>,
}

fn score_trajectory(
    state: State,
    lambda: &[f64],
    fixed: &[usize],
    th: Option<&Thresholds>,
    lambda_th: f64,
    scratch_up: &mut [usize],
    scratch_low: &mut [usize],
    tally: &mut Tally,
) {
    let n = lambda.len();
    tally.n += 1;
    for (e, &k) in tally.fixed_err.iter_mut().zip(fixed) {
        *e += (decide(lambda[k - 1].into(), lambda_th) != state) as u64;
    }
    let Some(th) = th else { return };
    // first bin (1-based) at which each threshold is reached; n + 1 = never
    let never = n + 1;
    scratch_up.fill(never);
    scratch_low.fill(never);
    let (mut iu, mut il) = (0, 0);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (k, &l) in lambda.iter().enumerate() {
        if l > hi {
            hi = l;
            while iu < th.upper.len() && hi >= th.upper[iu].0 {
                scratch_up[th.upper[iu].1] = k + 1;
                iu += 1;
            }
        }
        if l < lo {
            lo = l;
            while il < th.lower.len() && lo <= th.lower[il].0 {
                scratch_low[th.lower[il].1] = k + 1;
                il += 1;
            }
        }
    }
    let timeout_state = decide(lambda[n - 1].into(), th.lambda_th);
    for (i, &tu) in scratch_up.iter().enumerate() {
        let row = i * th.n_minus;
        for (j, &tl) in scratch_low.iter().enumerate() {
            let (bins, chosen) = if tu < tl {
                (tu, State::Plus)
            } else if tl < tu {
                (tl, State::Minus)
            } else {
                (n, timeout_state)
            };
            tally.adaptive_err[row + j] += (chosen != state) as u64;
            tally.adaptive_bins[row + j] += bins as u64;
        }
    }
}

fn simulate_state(
    config: &SweepConfig,
    kernel: &Kernel,
    state: State,
    n_bins: usize,
    fixed: &[usize],
    th: Option<&Thresholds>,
    lambda_th: f64,
) -> Tally {
    let domain = match state {
        State::Plus => Domain::ChargePlus,
        State::Minus => Domain::ChargeMinus,
    };
    let n_pairs = th.map_or(0, |t| t.upper.len() * t.n_minus);
    let n_chunks = config.n_traj.div_ceil(CHUNK);
    let parts: Vec<Tally> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = Tally::new(fixed.len(), n_pairs);
            let mut s = Scratch {
                lambda: vec![0.0; n_bins],
                probs: vec![0.0; kernel.m.len()],
                first_up: vec![0; th.map_or(0, |t| t.upper.len())],
                first_low: vec![0; th.map_or(0, |t| t.lower.len())],
            };
            for i in c * CHUNK..((c + 1) * CHUNK).min(config.n_traj) {
                let mut rng = rng::stream(config.master_seed, domain, i);
                kernel.lambda_path(state, &mut rng, &mut s.lambda, &mut s.probs);
                score_trajectory(
                    state,
                    &s.lambda,
                    fixed,
                    th,
                    lambda_th,
                    &mut s.first_up,
                    &mut s.first_low,
                    &mut tally,
                );
            }
            tally
        })
        .collect();
    let mut total = Tally::new(fixed.len(), n_pairs);
    for p in &parts {
        total.merge(p);
    }
    total
}

fn run(config: &SweepConfig, matrices: &UpdateMatrixSet, adaptive: bool) -> Result<SweepResult> {
    let dt = matrices.rates().dt;
    config.validate(dt)?;
    let priors = config.priors()?;
    let lambda_th = config.mode.threshold(priors)?;
    let n_bins = config.n_bins(dt)?;
    let fixed = config.fixed_bins(dt)?;
    let kernel = Kernel::new(matrices);
    let th = adaptive.then(|| Thresholds::new(config, lambda_th));
    log::info!(
        "simulating {} trajectories per state, {} bins each",
        config.n_traj,
        n_bins
    );
    let plus = simulate_state(config, &kernel, State::Plus, n_bins, &fixed, th.as_ref(), lambda_th);
    let minus = simulate_state(config, &kernel, State::Minus, n_bins, &fixed, th.as_ref(), lambda_th);
    let n = config.n_traj as f64;
    let provenance = Provenance::for_sweep(config, matrices.rates());
    let table = |method, points| FrontierTable {
        method,
        mode: config.mode,
        prior_plus: config.prior_plus,
        n_traj: config.n_traj,
        points,
        provenance: provenance.clone(),
    };

    let fixed_points = fixed
        .iter()
        .enumerate()
        .map(|(f, &k)| {
            let t = k as f64 * dt;
            FrontierPoint::from_conditional(
                priors,
                plus.fixed_err[f] as f64 / n,
                minus.fixed_err[f] as f64 / n,
                t,
                t,
                ReadoutRule::FixedTime { t_f: t },
            )
        })
        .collect();
    let mut nonadaptive = table(Method::Nonadaptive, fixed_points);
    nonadaptive.sort_by_time();

    let mut adaptive_points = Vec::new();
    if adaptive {
        let nm = config.minus_gaps.len();
        for (i, &pg) in config.plus_gaps.iter().enumerate() {
            for (j, &mg) in config.minus_gaps.iter().enumerate() {
                let idx = i * nm + j;
                adaptive_points.push(FrontierPoint::from_conditional(
                    priors,
                    plus.adaptive_err[idx] as f64 / n,
                    minus.adaptive_err[idx] as f64 / n,
                    plus.adaptive_bins[idx] as f64 * dt / n,
                    minus.adaptive_bins[idx] as f64 * dt / n,
                    ReadoutRule::Stopping {
                        plus_gap: pg,
                        minus_gap: mg,
                        t_max: config.t_max,
                    },
                ));
            }
        }
    }
    let mut adaptive = table(Method::Adaptive, adaptive_points);
    adaptive.sort_by_time();
    Ok(SweepResult { nonadaptive, adaptive })
}

/// Fixed-time and adaptive tables from a single set of trajectories.
pub fn run_sweep(config: &SweepConfig, matrices: &UpdateMatrixSet) -> Result<SweepResult> {
    run(config, matrices, true)
}

/// Decides on `λ_{t_f}` for every fixed readout time in the grid.
pub fn run_nonadaptive(config: &SweepConfig, matrices: &UpdateMatrixSet) -> Result<FrontierTable> {
    Ok(run(config, matrices, false)?.nonadaptive)
}

/// Stops at the first crossing of `p₊` or `p₋`, or at `t_M`, for every
/// pair of stopping probabilities in the grid.
pub fn run_adaptive(config: &SweepConfig, matrices: &UpdateMatrixSet) -> Result<FrontierTable> {
    Ok(run(config, matrices, true)?.adaptive)
}

/// Number of uniform average-time bins used by [`pareto_optimize`].
pub const PARETO_BINS: usize = 200;

/// Lower envelope: the best point in each of [`PARETO_BINS`] uniform time
/// bins, then only points that improve on every faster point.
///
/// Points are ranked under the priors the readout was calibrated with:
/// equal priors in MLE mode, the true priors in MAP mode. The retained
/// points keep their true-prior `(T, ε)`, so an MLE envelope need not be
/// monotone when the true priors are unequal.
pub fn pareto_optimize(table: &FrontierTable) -> Result<FrontierTable> {
    if table.points.is_empty() {
        return Err(Error::Empty("frontier table"));
    }
    let sel = match table.mode {
        DecisionMode::Mle => Priors::equal(),
        DecisionMode::Map => Priors::new(table.prior_plus)?,
    };
    let ranked: Vec<(f64, f64, &FrontierPoint)> = table
        .points
        .iter()
        .map(|p| {
            let t = sel.p_plus() * p.time_plus + sel.p_minus() * p.time_minus;
            let e = sel.p_plus() * p.err_plus + sel.p_minus() * p.err_minus;
            (t, e, p)
        })
        .collect();
    let t_lo = ranked.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let t_hi = ranked.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (t_hi - t_lo) / PARETO_BINS as f64;
    let mut best: Vec<Option<(f64, f64, &FrontierPoint)>> = vec![None; PARETO_BINS];
    for &(t, e, p) in &ranked {
        let b = if width > 0.0 {
            (((t - t_lo) / width) as usize).min(PARETO_BINS - 1)
        } else {
            0
        };
        match best[b] {
            Some((qt, qe, _)) if qe < e || (qe == e && qt <= t) => {}
            _ => best[b] = Some((t, e, p)),
        }
    }
    let mut points = Vec::new();
    let mut floor = f64::INFINITY;
    for (_, e, p) in best.into_iter().flatten() {
        if e < floor {
            floor = e;
            points.push(p.clone());
        }
    }
    Ok(FrontierTable {
        points,
        ..table.clone()
    })
}

/// Time at which a curve, ordered by time, first reaches `eps_target`,
/// interpolated linearly in `(ln ε, t)`.
pub fn time_to_reach(table: &FrontierTable, eps_target: f64) -> Option<f64> {
    let mut pts: Vec<&FrontierPoint> = table.points.iter().collect();
    pts.sort_by(|a, b| a.avg_time.total_cmp(&b.avg_time));
    let i = pts.iter().position(|p| p.err_rate <= eps_target)?;
    if i == 0 {
        return Some(pts[0].avg_time);
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let frac = if b.err_rate > 0.0 {
        (eps_target.ln() - a.err_rate.ln()) / (b.err_rate.ln() - a.err_rate.ln())
    } else {
        (eps_target - a.err_rate) / (b.err_rate - a.err_rate)
    };
    Some(a.avg_time + frac * (b.avg_time - a.avg_time))
}

/// `t_f / T` at a matched error rate.
pub fn speedup_at_target(adaptive: &FrontierTable, nonadaptive: &FrontierTable, eps_target: f64) -> Result<f64> {
    let unreachable = |curve: &FrontierTable| Error::TargetUnreachable {
        target: eps_target,
        curve: curve.method.label(),
    };
    let t_adaptive = time_to_reach(adaptive, eps_target).ok_or_else(|| unreachable(adaptive))?;
    let t_fixed = time_to_reach(nonadaptive, eps_target).ok_or_else(|| unreachable(nonadaptive))?;
    Ok(t_fixed / t_adaptive)
}
