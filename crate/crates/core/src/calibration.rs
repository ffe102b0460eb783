//! Rate extraction from raw count trajectories.
//!
//! The pipeline: rebin subtrajectories and fit the count histogram with a
//! two-component Poisson mixture to get `γ±`; threshold the first rebinned
//! bin of each subtrajectory to label its initial state; average the later
//! bins per label and fit both relaxation curves with a shared exponential
//! to get `Γ = Γ₊ + Γ₋` and the stationary level `B`, from which `Γ±`
//! follow. A separate helper corrects measured error rates for imperfect
//! state preparation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::chargemodel::{LikelihoodTracker, StateVector, Trajectory, UpdateMatrixSet};
use crate::decision::{decide, Priors, State};
use crate::{Error, Result};

pub fn ingest_trajectories(source: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    crate::io::read_trajectories(source)
}

/// Sums consecutive groups of `factor` bins; a partial trailing group is
/// dropped.
pub fn rebin(counts: &[u32], factor: usize) -> Vec<u32> {
    counts.chunks_exact(factor).map(|c| c.iter().sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountHistogram {
    /// Duration of one histogram bin (s).
    pub bin_width: f64,
    /// `frequencies[n]` bins contained `n` counts.
    pub frequencies: Vec<u64>,
    pub total_bins: u64,
}

impl CountHistogram {
    pub fn from_counts(counts: impl IntoIterator<Item = u32>, bin_width: f64) -> Self {
        let mut frequencies: Vec<u64> = Vec::new();
        let mut total_bins = 0;
        for c in counts {
            let c = c as usize;
            if c >= frequencies.len() {
                frequencies.resize(c + 1, 0);
            }
            frequencies[c] += 1;
            total_bins += 1;
        }
        Self {
            bin_width,
            frequencies,
            total_bins,
        }
    }

    /// Histogram of all bins after splitting each trajectory into
    /// subtrajectories of `subtraj_bins` raw bins and rebinning by `rebin`.
    pub fn from_trajectories(trajs: &[Trajectory], subtraj_bins: usize, factor: usize) -> Result<Self> {
        check_division(subtraj_bins, factor)?;
        let dt = trajs.first().map_or(0.0, |t| t.dt);
        let counts = trajs
            .iter()
            .flat_map(|t| t.counts.chunks_exact(subtraj_bins))
            .flat_map(|s| rebin(s, factor));
        Ok(Self::from_counts(counts, dt * factor as f64))
    }

    fn distinct(&self) -> usize {
        self.frequencies.iter().filter(|&&f| f > 0).count()
    }

    fn mean(&self) -> f64 {
        let s: f64 = self.frequencies.iter().enumerate().map(|(n, &f)| n as f64 * f as f64).sum();
        s / self.total_bins as f64
    }

    /// Mean count of the lowest (`upper = false`) or highest quarter of bins.
    fn quartile_mean(&self, upper: bool) -> f64 {
        let quota = (self.total_bins as f64 / 4.0).max(1.0);
        let mut left = quota;
        let mut sum = 0.0;
        let iter: Box<dyn Iterator<Item = (usize, &u64)>> = if upper {
            Box::new(self.frequencies.iter().enumerate().rev())
        } else {
            Box::new(self.frequencies.iter().enumerate())
        };
        for (n, &f) in iter {
            let take = (f as f64).min(left);
            sum += take * n as f64;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        sum / quota
    }
}

fn check_division(subtraj_bins: usize, factor: usize) -> Result<()> {
    if factor == 0 || subtraj_bins == 0 || subtraj_bins % factor != 0 {
        return Err(Error::invalid(
            "rebin",
            format!("rebin factor {factor} must divide the subtrajectory length {subtraj_bins}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureFit {
    /// Rates (Hz) of the two components, `gamma_plus > gamma_minus`.
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Component means per histogram bin.
    pub mean_plus: f64,
    pub mean_minus: f64,
    pub weight_plus: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when the fit collapsed onto a single component.
    pub converged: bool,
}

pub const EM_MAX_ITERATIONS: usize = 10_000;

/// Two-component Poisson mixture by expectation-maximization, started from
/// the means of the lower and upper quartiles.
pub fn fit_poisson_mixture(hist: &CountHistogram) -> Result<MixtureFit> {
    if hist.distinct() < 2 {
        return Err(Error::invalid("histogram", "needs at least two distinct counts"));
    }
    let lo = hist.quartile_mean(false);
    let hi = hist.quartile_mean(true);
    let mean = hist.mean();
    let mut m = [hi.max(mean * 1.01 + 1e-3), lo.min(mean * 0.99).max(1e-6)];
    let mut w = 0.5;
    let loglik = |m: [f64; 2], w: f64| -> f64 {
        hist.frequencies
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0)
            .map(|(n, &f)| f as f64 * mixture_density(n as u64, m, w).ln())
            .sum()
    };
    let mut ll = loglik(m, w);
    for it in 1..=EM_MAX_ITERATIONS {
        let (mut s_w, mut s0, mut s1, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for (n, &f) in hist.frequencies.iter().enumerate() {
            if f == 0 {
                continue;
            }
            let (a, b) = component_logs(n as u64, m, w);
            // responsibility of the upper component, computed stably
            let r = 1.0 / (1.0 + (b - a).exp());
            let f = f as f64;
            s_w += f * r;
            s0 += f * r * n as f64;
            n0 += f * (1.0 - r);
            s1 += f * (1.0 - r) * n as f64;
        }
        let total = hist.total_bins as f64;
        let new_w = s_w / total;
        let new_m = [
            if s_w > 0.0 { s0 / s_w } else { m[0] },
            if n0 > 0.0 { s1 / n0 } else { m[1] },
        ];
        let step = (new_m[0] - m[0]).abs() + (new_m[1] - m[1]).abs() + (new_w - w).abs();
        m = new_m;
        w = new_w;
        let new_ll = loglik(m, w);
        let dll = (new_ll - ll).abs();
        ll = new_ll;
        if step < 1e-12 * (1.0 + m[0]) || dll < 1e-13 * ll.abs().max(1.0) && step < 1e-9 * (1.0 + m[0]) {
            return Ok(finish(hist, m, w, ll, it, true));
        }
    }
    let fit = finish(hist, m, w, ll, EM_MAX_ITERATIONS, false);
    if degenerate(&fit) {
        return Ok(fit);
    }
    Err(Error::NonConvergence {
        what: "poisson mixture",
        iterations: EM_MAX_ITERATIONS,
        detail: format!("last iterate {fit:?}"),
    })
}

fn component_logs(n: u64, m: [f64; 2], w: f64) -> (f64, f64) {
    let lf = crate::special::ln_factorial(n);
    let lp = |mu: f64| if mu > 0.0 { n as f64 * mu.ln() - mu - lf } else if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    (w.ln() + lp(m[0]), (1.0 - w).ln() + lp(m[1]))
}

fn mixture_density(n: u64, m: [f64; 2], w: f64) -> f64 {
    let (a, b) = component_logs(n, m, w);
    a.exp() + b.exp()
}

fn degenerate(fit: &MixtureFit) -> bool {
    fit.weight_plus < 1e-3
        || fit.weight_plus > 1.0 - 1e-3
        || (fit.mean_plus - fit.mean_minus).abs() < 1e-3 * fit.mean_plus.max(1e-12)
}

fn finish(hist: &CountHistogram, m: [f64; 2], w: f64, ll: f64, iterations: usize, converged: bool) -> MixtureFit {
    let (m, w) = if m[0] >= m[1] { (m, w) } else { ([m[1], m[0]], 1.0 - w) };
    let mut fit = MixtureFit {
        gamma_plus: m[0] / hist.bin_width,
        gamma_minus: m[1] / hist.bin_width,
        mean_plus: m[0],
        mean_minus: m[1],
        weight_plus: w,
        log_likelihood: ll,
        iterations,
        converged,
    };
    if degenerate(&fit) {
        log::warn!("poisson mixture collapsed to one component: {fit:?}");
        fit.converged = false;
    }
    fit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonThreshold {
    /// Crossing point `ν` of the two Poisson mass functions.
    pub nu: f64,
    /// Integer rule: choose `|+⟩` for counts above this value.
    pub rule: u32,
}

/// `ν = (γ₊ − γ₋)·δt / ln(γ₊/γ₋)`, with the integer rule `δn > ⌊ν⌋`.
pub fn poisson_threshold(gamma_plus: f64, gamma_minus: f64, bin_width: f64) -> Result<PoissonThreshold> {
    if !(gamma_minus > 0.0) || !(gamma_plus > gamma_minus) {
        return Err(Error::invalid(
            "rates",
            format!("need gamma_plus > gamma_minus > 0, got {gamma_plus}, {gamma_minus}"),
        ));
    }
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin_width", format!("{bin_width} must be > 0")));
    }
    let nu = (gamma_plus - gamma_minus) * bin_width / (gamma_plus / gamma_minus).ln();
    Ok(PoissonThreshold {
        nu,
        rule: nu.floor() as u32,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationCurve {
    /// Mean rebinned count at each lag.
    pub mean: Vec<f64>,
    /// Standard error of each mean.
    pub sem: Vec<f64>,
    pub members: usize,
}

/// Postselected average count curves `ϱ±(t)` at lags `t = k·bin_width`,
/// `k = 1, 2, …`; the classification bin itself is excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationCurves {
    pub bin_width: f64,
    pub times: Vec<f64>,
    pub plus: RelaxationCurve,
    pub minus: RelaxationCurve,
}

/// Splits trajectories into subtrajectories of `subtraj_bins` raw bins,
/// rebins by `factor`, labels each by whether its first rebinned count
/// exceeds `rule`, and averages the later rebinned counts per label.
pub fn postselect_and_average(
    trajs: &[Trajectory],
    rule: u32,
    subtraj_bins: usize,
    factor: usize,
) -> Result<RelaxationCurves> {
    check_division(subtraj_bins, factor)?;
    let lags = subtraj_bins / factor - 1;
    let dt = trajs.first().map_or(0.0, |t| t.dt);
    let mut sum = [vec![0.0f64; lags], vec![0.0f64; lags]];
    let mut sq = [vec![0.0f64; lags], vec![0.0f64; lags]];
    let mut members = [0usize; 2];
    for t in trajs {
        for sub in t.counts.chunks_exact(subtraj_bins) {
            let r = rebin(sub, factor);
            let k = if r[0] > rule { 0 } else { 1 };
            members[k] += 1;
            for (lag, &c) in r[1..].iter().enumerate() {
                let c = c as f64;
                sum[k][lag] += c;
                sq[k][lag] += c * c;
            }
        }
    }
    let curve = |k: usize, name: &'static str| -> Result<RelaxationCurve> {
        let n = members[k];
        if n == 0 {
            return Err(Error::EmptyClass(name));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum[k].iter().map(|s| s / nf).collect();
        let sem = sq[k]
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if n > 1 {
                    (((q - nf * m * m) / (nf - 1.0)).max(0.0) / nf).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(RelaxationCurve { mean, sem, members: n })
    };
    let bin_width = dt * factor as f64;
    Ok(RelaxationCurves {
        bin_width,
        times: (1..=lags).map(|k| k as f64 * bin_width).collect(),
        plus: curve(0, "plus")?,
        minus: curve(1, "minus")?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationFit {
    pub big_gamma_plus: f64,
    pub big_gamma_minus: f64,
    pub amplitude_plus: f64,
    pub amplitude_minus: f64,
    /// Stationary mean count per rebinned bin.
    pub steady_state: f64,
    /// `Γ = Γ₊ + Γ₋`.
    pub total_rate: f64,
    /// Covariance of `(A₊, A₋, Γ, B)`.
    pub covariance: [[f64; 4]; 4],
    pub big_gamma_plus_se: f64,
    pub big_gamma_minus_se: f64,
    /// Weighted sum of squared residuals.
    pub chi_squared: f64,
    pub degrees_of_freedom: usize,
    pub iterations: usize,
}

/// Simultaneous fit of `ϱ±(t) = A± e^{−Γt} + B` by damped Gauss-Newton
/// (Levenberg–Marquardt), weighted by the per-lag standard errors when all
/// are positive. `Γ±` are then recovered from `Γ`, `B` and the detection
/// rates `γ±`.
pub fn fit_relaxation(curves: &RelaxationCurves, gamma_plus: f64, gamma_minus: f64) -> Result<RelaxationFit> {
    let n = curves.times.len();
    if n < 10 || curves.plus.mean.len() != n || curves.minus.mean.len() != n {
        return Err(Error::invalid("curves", format!("need >= 10 lags on both curves, got {n}")));
    }
    if !(gamma_plus > gamma_minus) {
        return Err(Error::invalid("rates", "need gamma_plus > gamma_minus"));
    }
    let t = &curves.times;
    let data = [&curves.plus.mean, &curves.minus.mean];
    let sems = [&curves.plus.sem, &curves.minus.sem];
    let weighted = sems.iter().all(|s| s.iter().all(|&x| x > 0.0 && x.is_finite()));
    let w = |k: usize, i: usize| if weighted { 1.0 / (sems[k][i] * sems[k][i]) } else { 1.0 };

    // initial guess: late-time level, then log-linear fits of |ϱ − B₀|
    let tail = (n / 4).max(1);
    let b0 = (data[0][n - tail..].iter().sum::<f64>() + data[1][n - tail..].iter().sum::<f64>()) / (2 * tail) as f64;
    let scale = data.iter().flat_map(|d| d.iter()).fold(0.0f64, |a, &x| a.max(x.abs())).max(1e-300);
    let early = data.iter().map(|d| (d[0] - b0).abs()).fold(0.0, f64::max);
    if early <= 1e-9 * scale {
        return Err(Error::Unidentifiable("relaxation curves are flat; the switching rate cannot be identified".into()));
    }
    let mut slopes = Vec::new();
    for d in data {
        let dev0 = (d[0] - b0).abs();
        let pts: Vec<(f64, f64)> = (0..n)
            .take_while(|&i| (d[i] - b0).abs() > 0.2 * dev0 && (d[i] - b0).signum() == (d[0] - b0).signum())
            .map(|i| (t[i], (d[i] - b0).abs().ln()))
            .collect();
        if pts.len() >= 2 {
            slopes.push(linear_slope(&pts));
        }
    }
    let mut rate = -slopes.iter().sum::<f64>() / slopes.len().max(1) as f64;
    if !(rate > 0.0 && rate.is_finite()) {
        rate = 1.0 / t[n / 4];
    }
    let amp = |d: &Vec<f64>| (d[0] - b0) * (rate * t[0]).exp();
    let mut p = Vector4::new(amp(data[0]), amp(data[1]), rate, b0);

    let model = |p: &Vector4<f64>, k: usize, ti: f64| p[k] * (-p[2] * ti).exp() + p[3];
    let cost = |p: &Vector4<f64>| -> f64 {
        let mut c = 0.0;
        for k in 0..2 {
            for i in 0..n {
                let r = model(p, k, t[i]) - data[k][i];
                c += w(k, i) * r * r;
            }
        }
        c
    };
    let normal = |p: &Vector4<f64>| -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for k in 0..2 {
            for i in 0..n {
                let e = (-p[2] * t[i]).exp();
                let mut j = Vector4::zeros();
                j[k] = e;
                j[2] = -p[k] * t[i] * e;
                j[3] = 1.0;
                let r = model(p, k, t[i]) - data[k][i];
                jtj += w(k, i) * j * j.transpose();
                jtr += w(k, i) * r * j;
            }
        }
        (jtj, jtr)
    };

    let mut c = cost(&p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=500 {
        iterations = it;
        let (jtj, jtr) = normal(&p);
        let mut damped = jtj;
        for d in 0..4 {
            damped[(d, d)] += mu * jtj[(d, d)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            mu *= 10.0;
            continue;
        };
        let mut trial = p + step;
        if trial[2] <= 0.0 {
            trial[2] = 0.5 * p[2];
        }
        let tc = cost(&trial);
        if tc <= c {
            let rel = (0..4).map(|d| step[d].abs() / (p[d].abs() + 1e-12)).fold(0.0, f64::max);
            p = trial;
            let dc = c - tc;
            c = tc;
            mu = (mu * 0.3).max(1e-12);
            if rel < 1e-13 || dc <= 1e-15 * c.max(1e-300) && rel < 1e-8 {
                converged = true;
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                // no further decrease possible at working precision
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "relaxation fit",
            iterations,
            detail: format!("parameters {:?}, weighted residual {c}", p.as_slice()),
        });
    }
    let total_rate = p[2];
    let b = p[3];
    let (gp, gm) = (gamma_plus * curves.bin_width, gamma_minus * curves.bin_width);
    let big_gamma_minus = total_rate * (b - gm) / (gp - gm);
    let big_gamma_plus = total_rate * (gp - b) / (gp - gm);
    if !(total_rate > 0.0) || !(big_gamma_plus > 0.0) || !(big_gamma_minus > 0.0) {
        return Err(Error::Unidentifiable(format!(
            "fitted Γ = {total_rate}, B = {b} give nonpositive switching rates ({big_gamma_plus}, {big_gamma_minus})"
        )));
    }
    let dof = (2 * n).saturating_sub(4);
    let (jtj, _) = normal(&p);
    let scale = if weighted { 1.0 } else { c / dof.max(1) as f64 };
    let cov = jtj.try_inverse().map(|m| m * scale).unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    // Γ₋ = Γ(B − g₋)/(g₊ − g₋), Γ₊ = Γ − Γ₋; gradients in (Γ, B)
    let d = gp - gm;
    let grad_minus = [(b - gm) / d, total_rate / d];
    let grad_plus = [(gp - b) / d, -total_rate / d];
    let var = |g: [f64; 2]| {
        g[0] * g[0] * cov[(2, 2)] + 2.0 * g[0] * g[1] * cov[(2, 3)] + g[1] * g[1] * cov[(3, 3)]
    };
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(RelaxationFit {
        big_gamma_plus,
        big_gamma_minus,
        amplitude_plus: p[0],
        amplitude_minus: p[1],
        steady_state: b,
        total_rate,
        covariance,
        big_gamma_plus_se: var(grad_plus).max(0.0).sqrt(),
        big_gamma_minus_se: var(grad_minus).max(0.0).sqrt(),
        chi_squared: c,
        degrees_of_freedom: dof,
        iterations,
    })
}

fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Stationary distribution of the switching process, `P(+) = Γ₋/(Γ₊ + Γ₋)`.
pub fn stationary_priors(big_gamma_plus: f64, big_gamma_minus: f64) -> Result<Priors> {
    if !(big_gamma_plus >= 0.0 && big_gamma_minus >= 0.0) || big_gamma_plus + big_gamma_minus <= 0.0 {
        return Err(Error::invalid(
            "switching rates",
            format!("need nonnegative rates with positive sum, got {big_gamma_plus}, {big_gamma_minus}"),
        ));
    }
    Priors::new(big_gamma_minus / (big_gamma_plus + big_gamma_minus))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eta) {
        return Err(Error::invalid("eta", format!("{eta} must lie in [0, 0.5)")));
    }
    Ok(())
}

/// True error rate from a measured one, `ε = (ε̃ − η)/(1 − 2η)`.
pub fn correct_preparation_error(measured: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(measured >= eta - 1e-15 && measured <= 1.0 - eta + 1e-15) {
        return Err(Error::invalid(
            "measured error rate",
            format!("{measured} outside [{eta}, {}]", 1.0 - eta),
        ));
    }
    Ok((measured - eta) / (1.0 - 2.0 * eta))
}

/// Measured error rate implied by a true one, `ε̃ = η(1 − ε) + (1 − η)ε`.
pub fn apply_preparation_error(eps: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(eta + (1.0 - 2.0 * eta) * eps)
}

/// Least-squares `η` matching a measured curve to a model curve point by
/// point, with `η` the only parameter.
pub fn fit_preparation_error(measured: &[f64], model: &[f64]) -> Result<f64> {
    if measured.len() != model.len() || measured.is_empty() {
        return Err(Error::invalid("curves", "measured and model curves need equal nonzero length"));
    }
    // ε̃ − ε = η(1 − 2ε): linear in η
    let (mut num, mut den) = (0.0, 0.0);
    for (&m, &e) in measured.iter().zip(model) {
        let x = 1.0 - 2.0 * e;
        num += x * (m - e);
        den += x * x;
    }
    if den <= 0.0 {
        return Err(Error::Unidentifiable("model curve is at 1/2 everywhere".into()));
    }
    let eta = num / den;
    check_eta(eta)?;
    Ok(eta)
}

/// Fixed-time error curve of labeled readouts: labels come from the first
/// `prep_bins` bins of each subtrajectory (posterior from a fully mixed
/// start), and the following `read_bins` bins are read out with the
/// equal-prior likelihood rule at every readout length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreparedErrorCurve {
    pub times: Vec<f64>,
    pub err_plus: Vec<f64>,
    pub err_minus: Vec<f64>,
    /// `(ε̃₊ + ε̃₋)/2`.
    pub error: Vec<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
}

pub fn prepared_error_curve(
    trajs: &[Trajectory],
    matrices: &UpdateMatrixSet,
    prep_bins: usize,
    read_bins: usize,
) -> Result<PreparedErrorCurve> {
    let mut labeled = Vec::new();
    for t in trajs {
        for sub in t.counts.chunks_exact(prep_bins + read_bins) {
            let mut v = StateVector::mixed();
            for (bin, &c) in sub[..prep_bins].iter().enumerate() {
                v = match crate::chargemodel::posterior_propagate(&v, c, matrices) {
                    Ok((next, _)) => next,
                    Err(Error::CountExceedsCutoff { count, dn_max, .. }) => {
                        return Err(Error::CountExceedsCutoff { bin, count, dn_max })
                    }
                    Err(e) => return Err(e),
                };
            }
            if v.rho_plus == 0.5 {
                continue;
            }
            let label = if v.rho_plus > 0.5 { State::Plus } else { State::Minus };
            labeled.push((label, &sub[prep_bins..]));
        }
    }
    labeled_error_curve(&labeled, matrices, matrices.rates().dt)
}

/// Fixed-time error curve for readout segments with given labels.
pub fn labeled_error_curve(
    labeled: &[(State, &[u32])],
    matrices: &UpdateMatrixSet,
    dt: f64,
) -> Result<PreparedErrorCurve> {
    let read_bins = labeled.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
    let mut wrong = [vec![0u64; read_bins], vec![0u64; read_bins]];
    let mut members = [0usize; 2];
    for (label, seg) in labeled {
        let k = (*label == State::Minus) as usize;
        members[k] += 1;
        let mut tr = LikelihoodTracker::new();
        for (i, &c) in seg[..read_bins].iter().enumerate() {
            let l = tr.push(c, matrices)?;
            wrong[k][i] += (decide(l, 0.0) != *label) as u64;
        }
    }
    if members[0] == 0 {
        return Err(Error::EmptyClass("plus"));
    }
    if members[1] == 0 {
        return Err(Error::EmptyClass("minus"));
    }
    let rate = |k: usize| -> Vec<f64> { wrong[k].iter().map(|&w| w as f64 / members[k] as f64).collect() };
    let (ep, em) = (rate(0), rate(1));
    Ok(PreparedErrorCurve {
        times: (1..=read_bins).map(|k| k as f64 * dt).collect(),
        error: ep.iter().zip(&em).map(|(a, b)| 0.5 * (a + b)).collect(),
        err_plus: ep,
        err_minus: em,
        n_plus: members[0],
        n_minus: members[1],
    })
}

/// Fixed-time error `(ε₊ + ε₋)/2` of the equal-prior likelihood rule at
/// every bin up to `read_bins`, from `n_traj` simulated trajectories per
/// state.
pub fn model_error_curve(matrices: &UpdateMatrixSet, read_bins: usize, n_traj: u64, seed: u64) -> Result<Vec<f64>> {
    use crate::montecarlo::{run_nonadaptive, DecisionMode, SweepConfig};
    let t_max = read_bins as f64 * matrices.rates().dt;
    let config = SweepConfig::new(n_traj, t_max, Priors::equal(), DecisionMode::Mle, seed);
    let mut points = run_nonadaptive(&config, matrices)?.points;
    points.sort_by(|a, b| a.avg_time.total_cmp(&b.avg_time));
    Ok(points.iter().map(|p| 0.5 * (p.err_plus + p.err_minus)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaFit {
    pub eta: f64,
    /// `false` when `η` was given rather than fitted.
    pub fitted: bool,
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    pub model: Vec<f64>,
    /// `(ε̃ − η)/(1 − 2η)`; may dip below zero where the measured curve does.
    pub corrected: Vec<f64>,
    pub rms_residual: f64,
}

/// Fits `η` to a measured curve against a model curve, or applies a given
/// `η`, and returns the corrected measured curve.
pub fn preparation_error_fit(measured: &PreparedErrorCurve, model: &[f64], eta: Option<f64>) -> Result<EtaFit> {
    let n = measured.error.len().min(model.len());
    if n == 0 {
        return Err(Error::Empty("error curve"));
    }
    let (m, e) = (&measured.error[..n], &model[..n]);
    let (eta, fitted) = match eta {
        Some(x) => {
            check_eta(x)?;
            (x, false)
        }
        None => (fit_preparation_error(m, e)?, true),
    };
    let corrected: Vec<f64> = m.iter().map(|&x| (x - eta) / (1.0 - 2.0 * eta)).collect();
    let rms = (m
        .iter()
        .zip(e)
        .map(|(&x, &y)| (x - eta - (1.0 - 2.0 * eta) * y).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(EtaFit {
        eta,
        fitted,
        times: measured.times[..n].to_vec(),
        measured: m.to_vec(),
        model: e.to_vec(),
        corrected,
        rms_residual: rms,
    })
}

/// How trajectories are divided between calibration and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSplit {
    /// Even indices calibrate, odd indices test.
    Parity,
    /// The first `n` trajectories calibrate, the rest test.
    First { n: usize },
    /// Every trajectory calibrates; nothing is held out.
    All,
}

impl DataSplit {
    pub fn apply<'a>(&self, trajs: &'a [Trajectory]) -> (Vec<&'a Trajectory>, Vec<&'a Trajectory>) {
        let mut cal = Vec::new();
        let mut test = Vec::new();
        for (i, t) in trajs.iter().enumerate() {
            let is_cal = match *self {
                DataSplit::Parity => i % 2 == 0,
                DataSplit::First { n } => i < n,
                DataSplit::All => true,
            };
            if is_cal {
                cal.push(t);
            } else {
                test.push(t);
            }
        }
        (cal, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationOptions {
    pub split: DataSplit,
    /// Rebinned bin width in raw bins.
    pub rebin: usize,
    /// Subtrajectory length in raw bins.
    pub subtraj_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub dt: f64,
    pub options: CalibrationOptions,
    pub n_calibration: usize,
    pub n_testing: usize,
    pub histogram: CountHistogram,
    pub mixture: MixtureFit,
    pub threshold: PoissonThreshold,
    pub class_sizes: [usize; 2],
    pub relaxation: RelaxationFit,
    pub prior_plus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub big_gamma_plus: f64,
    pub big_gamma_minus: f64,
    /// Detection dominates switching.
    pub regime_valid: bool,
}

/// Runs the whole extraction on the calibration part of `trajs`.
pub fn calibrate(trajs: &[Trajectory], options: CalibrationOptions) -> Result<CalibrationReport> {
    let (cal, test) = options.split.apply(trajs);
    if cal.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    let cal: Vec<Trajectory> = cal.into_iter().cloned().collect();
    let dt = cal[0].dt;
    let histogram = CountHistogram::from_trajectories(&cal, options.subtraj_bins, options.rebin)?;
    let mixture = fit_poisson_mixture(&histogram)?;
    if !mixture.converged {
        return Err(Error::Unidentifiable(format!(
            "count histogram does not separate into two components: {mixture:?}"
        )));
    }
    let threshold = poisson_threshold(mixture.gamma_plus, mixture.gamma_minus, histogram.bin_width)?;
    let curves = postselect_and_average(&cal, threshold.rule, options.subtraj_bins, options.rebin)?;
    let relaxation = fit_relaxation(&curves, mixture.gamma_plus, mixture.gamma_minus)?;
    let priors = stationary_priors(relaxation.big_gamma_plus, relaxation.big_gamma_minus)?;
    let rates = crate::chargemodel::RateSet::new(
        mixture.gamma_plus,
        mixture.gamma_minus,
        relaxation.big_gamma_plus,
        relaxation.big_gamma_minus,
        dt,
    )?;
    Ok(CalibrationReport {
        dt,
        options,
        n_calibration: cal.len(),
        n_testing: test.len(),
        histogram,
        mixture,
        threshold,
        class_sizes: [curves.plus.members, curves.minus.members],
        prior_plus: priors.p_plus(),
        gamma_plus: rates.gamma_plus,
        gamma_minus: rates.gamma_minus,
        big_gamma_plus: rates.big_gamma_plus,
        big_gamma_minus: rates.big_gamma_minus,
        regime_valid: rates.regime_valid(),
        relaxation,
    })
}

/// Count of each value in `counts`, for diagnostics.
pub fn count_table(counts: &[u32]) -> BTreeMap<u32, u64> {
    let mut m = BTreeMap::new();
    for &c in counts {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}
