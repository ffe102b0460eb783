//! Gaussian latching readout.
//!
//! Each state produces a signal with mean `±1` and white noise of strength
//! `1/r`, so the log-likelihood ratio `λ_t` is a drift-diffusion process with
//! drift `±2r` and variance rate `4r`. The analytic results below give the
//! error rate `ε` and average readout time `T` of the fixed-time rule and of
//! the symmetric adaptive rule (thresholds `±λ̄`, timeout `t_M`).
//! [`simulate_first_passage`] integrates the same process directly and is
//! used as an independent check of the formulas.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decision::{decide, LogLikelihood, Priors, State, StopReason, StoppingRule};
use crate::montecarlo::McEstimate;
use crate::rng::{self, Domain};
use crate::special::erfc;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel<T = f64> {
    snr_rate: T,
}

/// One term of the finite-horizon correction series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSeriesTerm<T = f64> {
    pub m: usize,
    pub a_m: T,
    pub b_m: T,
    pub alpha_m: T,
}

/// Error rate and average readout time of a rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTime<T = f64> {
    pub error: T,
    pub time: T,
}

/// Truncation policy for the finite-horizon series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPolicy {
    /// Stop once the next term is below `rel_tol` times the partial sum.
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self {
            rel_tol: 1e-15,
            max_terms: 100_000,
        }
    }
}

impl<T: Real> GaussianSeriesTerm<T> {
    pub fn new(lambda_bar: T, m: usize) -> Self {
        let pi = T::PI();
        let half = T::lit(0.5);
        let k = T::from_usize_lossy(m) + half;
        let lb2 = lambda_bar * lambda_bar;
        let denom = T::lit(4.0) * pi * pi * k * k + lb2;
        let sign = if m % 2 == 0 { T::one() } else { -T::one() };
        Self {
            m,
            a_m: T::lit(2.0) * lambda_bar / denom,
            b_m: -T::lit(16.0) * pi * lb2 * (lambda_bar * half).cosh() * sign * k / (denom * denom),
            alpha_m: half + T::lit(2.0) * pi * pi * k * k / lb2,
        }
    }
}

impl<T: Real> GaussianModel<T> {
    pub fn new(snr_rate: T) -> Result<Self> {
        if !(snr_rate > T::zero()) || !snr_rate.is_finite() {
            return Err(Error::invalid("snr_rate", format!("{snr_rate} must be > 0")));
        }
        Ok(Self { snr_rate })
    }

    pub fn snr_rate(&self) -> T {
        self.snr_rate
    }

    /// `ε = ½ erfc(√(r t_f / 2))`.
    pub fn nonadaptive_error(&self, t_f: T) -> Result<T> {
        if !(t_f >= T::zero()) {
            return Err(Error::invalid("t_f", format!("{t_f} must be >= 0")));
        }
        Ok(T::lit(0.5) * erfc((self.snr_rate * t_f * T::lit(0.5)).sqrt()))
    }

    /// `ε = 1/(1+e^{λ̄})`, `T = (λ̄/2r) tanh(λ̄/2)`; exact when `r t_M ≫ min(1, λ̄²)`.
    pub fn adaptive_error_time_unbounded(&self, lambda_bar: T) -> Result<ErrorTime<T>> {
        if !(lambda_bar >= T::zero()) {
            return Err(Error::invalid("lambda_bar", format!("{lambda_bar} must be >= 0")));
        }
        let half = T::lit(0.5);
        // 1/(1+e^x) = e^{-x}/(1+e^{-x}) avoids overflow for large λ̄
        let e = (-lambda_bar).exp();
        Ok(ErrorTime {
            error: e / (T::one() + e),
            time: lambda_bar / (T::lit(2.0) * self.snr_rate) * (lambda_bar * half).tanh(),
        })
    }

    /// Exact finite-horizon result: the unbounded value plus the eigenmode
    /// series `Σ A_m e^{−α_m r t_M}` (error) and `Σ B_m e^{−α_m r t_M} / r` (time).
    pub fn adaptive_error_time_bounded(
        &self,
        lambda_bar: T,
        t_max: T,
        policy: SeriesPolicy,
    ) -> Result<ErrorTime<T>> {
        if !(lambda_bar > T::zero()) {
            return Err(Error::invalid("lambda_bar", format!("{lambda_bar} must be > 0")));
        }
        if !(t_max > T::zero()) {
            return Err(Error::invalid("t_max", format!("{t_max} must be > 0")));
        }
        let inf = self.adaptive_error_time_unbounded(lambda_bar)?;
        let rt = self.snr_rate * t_max;
        let tol = T::lit(policy.rel_tol);
        let mut err = inf.error;
        let mut rtime = self.snr_rate * inf.time;
        for m in 0..policy.max_terms {
            let term = GaussianSeriesTerm::new(lambda_bar, m);
            let decay = (-term.alpha_m * rt).exp();
            let da = term.a_m * decay;
            let db = term.b_m * decay;
            err += da;
            rtime += db;
            // next-term magnitudes bound the remainder: A_m and |B_m| e^{-α_m r t_M}
            // are eventually decreasing in m
            let next = GaussianSeriesTerm::new(lambda_bar, m + 1);
            let next_decay = (-next.alpha_m * rt).exp();
            let na = (next.a_m * next_decay).abs();
            let nb = (next.b_m * next_decay).abs();
            let a_done = na <= tol * err.abs() || na == T::zero();
            let b_done = nb <= tol * rtime.abs() || nb == T::zero();
            if a_done && b_done && next.alpha_m * rt > T::one() {
                return Ok(ErrorTime {
                    error: err,
                    time: rtime / self.snr_rate,
                });
            }
        }
        Err(Error::SeriesBudgetExceeded {
            terms: policy.max_terms,
        })
    }

    /// Fixed readout time reaching error rate `eps` (inverse of
    /// [`Self::nonadaptive_error`]).
    pub fn fixed_time_for_error(&self, eps: T) -> Result<T> {
        let half = T::lit(0.5);
        if !(eps > T::zero() && eps <= half) {
            return Err(Error::invalid("eps", format!("{eps} must lie in (0, 1/2]")));
        }
        // erfc(x) = 2 eps, erfc decreasing; bisection on x ∈ [0, 40]
        let target = T::lit(2.0) * eps;
        let (mut lo, mut hi) = (T::zero(), T::lit(40.0));
        for _ in 0..200 {
            let mid = half * (lo + hi);
            if erfc(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        let x = half * (lo + hi);
        Ok(T::lit(2.0) * x * x / self.snr_rate)
    }

    /// Average adaptive readout time reaching error rate `eps` in the
    /// unbounded-horizon limit.
    pub fn adaptive_time_for_error(&self, eps: T) -> Result<T> {
        if !(eps > T::zero() && eps <= T::lit(0.5)) {
            return Err(Error::invalid("eps", format!("{eps} must lie in (0, 1/2]")));
        }
        let lambda_bar = (T::one() - eps).ln() - eps.ln();
        Ok(self.adaptive_error_time_unbounded(lambda_bar)?.time)
    }

    /// `t_f(ε) / T(ε)` from the fixed-time and unbounded adaptive formulas.
    pub fn speedup_at_error(&self, eps: T) -> Result<T> {
        Ok(self.fixed_time_for_error(eps)? / self.adaptive_time_for_error(eps)?)
    }
}

/// `r± = (γ₊ − γ₋)² / 4γ±`.
pub fn asymmetric_snr<T: Real>(gamma_plus: T, gamma_minus: T) -> Result<(T, T)> {
    if !(gamma_plus > T::zero()) || !(gamma_minus > T::zero()) {
        return Err(Error::invalid(
            "detection rates",
            format!("need gamma_plus, gamma_minus > 0, got {gamma_plus}, {gamma_minus}"),
        ));
    }
    let d = gamma_plus - gamma_minus;
    let four = T::lit(4.0);
    Ok((d * d / (four * gamma_plus), d * d / (four * gamma_minus)))
}

/// How threshold crossings are detected between integration steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMonitor {
    /// Check the thresholds at the grid points only (bias `O(√dt)`).
    Discrete,
    /// Additionally test for an excursion inside each step using the exact
    /// Brownian-bridge crossing probability; unbiased up to the `O(dt)`
    /// resolution of the stopping time.
    BridgeCorrected,
}

/// A drift-diffusion process for `λ_t` with state-dependent drift `±drift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDiffusion {
    pub drift: f64,
    pub variance_rate: f64,
}

impl From<GaussianModel<f64>> for DriftDiffusion {
    fn from(model: GaussianModel<f64>) -> Self {
        Self {
            drift: 2.0 * model.snr_rate,
            variance_rate: 4.0 * model.snr_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassageOptions {
    pub n_runs: u64,
    pub seed: u64,
    pub dt_sim: f64,
    pub priors: Priors,
    pub monitor: BoundaryMonitor,
}

impl FirstPassageOptions {
    /// Defaults for a model: step `10⁻³/r`, equal priors, bridge-corrected monitor.
    pub fn for_model(model: &GaussianModel<f64>, n_runs: u64, seed: u64) -> Self {
        Self {
            n_runs,
            seed,
            dt_sim: 1e-3 / model.snr_rate(),
            priors: Priors::equal(),
            monitor: BoundaryMonitor::BridgeCorrected,
        }
    }
}

/// Simulates the adaptive rule on the Gaussian model's `λ_t`.
pub fn simulate_first_passage(
    model: &GaussianModel<f64>,
    rule: &StoppingRule<f64>,
    opts: &FirstPassageOptions,
) -> Result<McEstimate> {
    simulate_drift_diffusion((*model).into(), rule, opts)
}

/// Simulates `rule` once and reads off, from the same paths, the outcome
/// under each horizon in `horizons` (each a multiple of `dt_sim`, at most the
/// rule's own). The estimates share paths and are therefore correlated.
pub fn simulate_first_passage_horizons(
    model: &GaussianModel<f64>,
    rule: &StoppingRule<f64>,
    horizons: &[f64],
    opts: &FirstPassageOptions,
) -> Result<Vec<McEstimate>> {
    if opts.n_runs == 0 {
        return Err(Error::invalid("n_runs", "must be > 0"));
    }
    if !(opts.dt_sim > 0.0) {
        return Err(Error::invalid("dt_sim", "must be > 0"));
    }
    let mut marks = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let k = (h / opts.dt_sim).round();
        if !(k >= 1.0) || (k * opts.dt_sim - h).abs() > 1e-9 * h || h > rule.t_max() {
            return Err(Error::invalid("horizons", format!("{h} is not a multiple of dt_sim within t_max")));
        }
        marks.push(k as u64);
    }
    let mut order: Vec<usize> = (0..marks.len()).collect();
    order.sort_by_key(|&j| marks[j]);
    let sorted: Vec<u64> = order.iter().map(|&j| marks[j]).collect();
    let process = DriftDiffusion::from(*model);
    let split = StateSplit::new(opts.n_runs, opts.priors);
    let tallies = run_chunks_multi(opts.n_runs, horizons.len(), |i, t| {
        let state = split.state_of(i);
        let mut rng = rng::stream(opts.seed, Domain::Gaussian, i);
        let drift = match state {
            State::Plus => process.drift,
            State::Minus => -process.drift,
        };
        let mut reached = vec![None; sorted.len()];
        let (lambda, time) = integrate_one(&mut rng, drift, process.variance_rate, rule, opts, &sorted, |j, x| {
            reached[j] = Some(x)
        });
        for (j, &orig) in order.iter().enumerate() {
            // a path that never reached the mark stopped before it
            let (l, tm) = match reached[j] {
                Some(x) => (x, horizons[orig]),
                None => (lambda, time),
            };
            let chosen = decide(LogLikelihood::Finite(l), 0.0);
            t[orig].add(state, chosen != state, tm);
        }
    });
    Ok(tallies.iter().map(|t| t.estimate(opts.priors)).collect())
}

/// Simulates a fixed-time readout of the Gaussian model (`λ_{t_f}` drawn exactly).
pub fn simulate_fixed_time(
    model: &GaussianModel<f64>,
    t_f: f64,
    n_runs: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs", "must be > 0"));
    }
    let process = DriftDiffusion::from(*model);
    let sd = (process.variance_rate * t_f).sqrt();
    let mean = process.drift * t_f;
    let priors = Priors::equal();
    let split = StateSplit::new(n_runs, priors);
    let tallies = run_chunks(n_runs, |i| {
        let state = split.state_of(i);
        let mut rng = rng::stream(seed, Domain::Gaussian, i);
        let z: f64 = rng.sample(StandardNormal);
        let lambda = match state {
            State::Plus => mean + sd * z,
            State::Minus => -mean + sd * z,
        };
        (state, decide(LogLikelihood::Finite(lambda), 0.0) != state, t_f)
    });
    Ok(tallies.estimate(priors))
}

/// Simulates a drift-diffusion `λ_t` under the stopping rule.
pub fn simulate_drift_diffusion(
    process: DriftDiffusion,
    rule: &StoppingRule<f64>,
    opts: &FirstPassageOptions,
) -> Result<McEstimate> {
    if opts.n_runs == 0 {
        return Err(Error::invalid("n_runs", "must be > 0"));
    }
    if !(opts.dt_sim > 0.0) {
        return Err(Error::invalid("dt_sim", "must be > 0"));
    }
    let split = StateSplit::new(opts.n_runs, opts.priors);
    let lambda_th = 0.0;
    let tallies = run_chunks(opts.n_runs, |i| {
        let state = split.state_of(i);
        let mut rng = rng::stream(opts.seed, Domain::Gaussian, i);
        let drift = match state {
            State::Plus => process.drift,
            State::Minus => -process.drift,
        };
        let (lambda, time) = integrate_one(&mut rng, drift, process.variance_rate, rule, opts, &[], |_, _| {});
        let chosen = decide(LogLikelihood::Finite(lambda), lambda_th);
        (state, chosen != state, time)
    });
    Ok(tallies.estimate(opts.priors))
}

/// Integrates one path to its stop. `marks` are ascending step indices at
/// which the running value is handed to `at_mark` if the path is still going.
fn integrate_one<R: Rng>(
    rng: &mut R,
    drift: f64,
    variance_rate: f64,
    rule: &StoppingRule<f64>,
    opts: &FirstPassageOptions,
    marks: &[u64],
    mut at_mark: impl FnMut(usize, f64),
) -> (f64, f64) {
    let (up, down, t_max) = (rule.lambda_plus(), rule.lambda_minus(), rule.t_max());
    let mut x = 0.0;
    let mut t = 0.0;
    if let Some(reason) = rule.check(LogLikelihood::Finite(x), t) {
        return (stopped_value(reason, x, up, down), t);
    }
    let dt = opts.dt_sim;
    let sd_full = (variance_rate * dt).sqrt();
    let mut step = 0u64;
    let mut next_mark = 0;
    loop {
        let remaining = t_max - t;
        let (h, sd) = if remaining < dt {
            (remaining, (variance_rate * remaining).sqrt())
        } else {
            (dt, sd_full)
        };
        let z: f64 = rng.sample(StandardNormal);
        let prev = x;
        x += drift * h + sd * z;
        step += 1;
        let t_next = if remaining < dt { t_max } else { step as f64 * dt };
        if x >= up {
            let t_stop = match opts.monitor {
                BoundaryMonitor::Discrete => t_next,
                BoundaryMonitor::BridgeCorrected => t + 0.5 * h,
            };
            return (up, t_stop);
        }
        if x <= down {
            let t_stop = match opts.monitor {
                BoundaryMonitor::Discrete => t_next,
                BoundaryMonitor::BridgeCorrected => t + 0.5 * h,
            };
            return (down, t_stop);
        }
        if opts.monitor == BoundaryMonitor::BridgeCorrected {
            let var_h = variance_rate * h;
            // P(bridge from a to b crosses c) = exp(-2 (c-a)(c-b) / (σ² h))
            let gu = (up - prev) * (up - x);
            let gd = (prev - down) * (x - down);
            if gu < 20.0 * var_h {
                let p = (-2.0 * gu / var_h).exp();
                if rng.random::<f64>() < p {
                    return (up, t + 0.5 * h);
                }
            }
            if gd < 20.0 * var_h {
                let p = (-2.0 * gd / var_h).exp();
                if rng.random::<f64>() < p {
                    return (down, t + 0.5 * h);
                }
            }
        }
        t = t_next;
        if t >= t_max {
            return (x, t_max);
        }
        if let Some(&m) = marks.get(next_mark) {
            if step == m {
                at_mark(next_mark, x);
                next_mark += 1;
            }
        }
    }
}

fn stopped_value(reason: StopReason, x: f64, up: f64, down: f64) -> f64 {
    match reason {
        StopReason::UpperThreshold => up.max(x),
        StopReason::LowerThreshold => down.min(x),
        StopReason::Timeout => x,
    }
}

/// Deterministic allocation of run indices to states.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StateSplit {
    n_plus: u64,
}

impl StateSplit {
    pub(crate) fn new(n_runs: u64, priors: Priors) -> Self {
        Self {
            n_plus: (n_runs as f64 * priors.p_plus()).round() as u64,
        }
    }

    pub(crate) fn state_of(&self, index: u64) -> State {
        if index < self.n_plus {
            State::Plus
        } else {
            State::Minus
        }
    }
}

/// Per-state running sums of errors and stop times.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Tallies {
    n: [u64; 2],
    errors: [u64; 2],
    time_sum: [f64; 2],
    time_sq_sum: [f64; 2],
}

impl Tallies {
    fn add(&mut self, state: State, error: bool, time: f64) {
        let k = state_index(state);
        self.n[k] += 1;
        self.errors[k] += error as u64;
        self.time_sum[k] += time;
        self.time_sq_sum[k] += time * time;
    }

    fn merge(mut self, other: &Tallies) -> Self {
        for k in 0..2 {
            self.n[k] += other.n[k];
            self.errors[k] += other.errors[k];
            self.time_sum[k] += other.time_sum[k];
            self.time_sq_sum[k] += other.time_sq_sum[k];
        }
        self
    }

    pub(crate) fn estimate(&self, priors: Priors) -> McEstimate {
        let mut err = [0.0; 2];
        let mut err_var = [0.0; 2];
        let mut time = [0.0; 2];
        let mut time_var = [0.0; 2];
        for k in 0..2 {
            let n = self.n[k] as f64;
            if self.n[k] == 0 {
                continue;
            }
            let e = self.errors[k] as f64 / n;
            err[k] = e;
            err_var[k] = e * (1.0 - e) / n;
            let m = self.time_sum[k] / n;
            time[k] = m;
            let s2 = if self.n[k] > 1 {
                ((self.time_sq_sum[k] - n * m * m) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            time_var[k] = s2 / n;
        }
        let w = [priors.p_plus(), priors.p_minus()];
        let weighted = |v: &[f64; 2]| w[0] * v[0] + w[1] * v[1];
        let weighted_var = |v: &[f64; 2]| w[0] * w[0] * v[0] + w[1] * w[1] * v[1];
        McEstimate {
            error: weighted(&err),
            error_se: weighted_var(&err_var).sqrt(),
            time: weighted(&time),
            time_se: weighted_var(&time_var).sqrt(),
            err_plus: err[0],
            err_minus: err[1],
            time_plus: time[0],
            time_minus: time[1],
            n_runs: self.n[0] + self.n[1],
        }
    }
}

fn state_index(state: State) -> usize {
    match state {
        State::Plus => 0,
        State::Minus => 1,
    }
}

pub(crate) const CHUNK: u64 = 4096;

/// Runs `f` over `0..n_runs` in fixed chunks; chunk sums are merged in index
/// order so the result does not depend on the worker count.
pub(crate) fn run_chunks<F>(n_runs: u64, f: F) -> Tallies
where
    F: Fn(u64) -> (State, bool, f64) + Sync,
{
    run_chunks_multi(n_runs, 1, |i, t| {
        let (state, error, time) = f(i);
        t[0].add(state, error, time);
    })
    .remove(0)
}

/// As [`run_chunks`], with `f` adding one outcome to each of `k` tallies.
pub(crate) fn run_chunks_multi<F>(n_runs: u64, k: usize, f: F) -> Vec<Tallies>
where
    F: Fn(u64, &mut [Tallies]) + Sync,
{
    let n_chunks = n_runs.div_ceil(CHUNK);
    let parts: Vec<Vec<Tallies>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = vec![Tallies::default(); k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_runs) {
                f(i, &mut t);
            }
            t
        })
        .collect();
    parts.iter().fold(vec![Tallies::default(); k], |acc, t| {
        acc.iter().zip(t).map(|(a, b)| a.merge(b)).collect()
    })
}
