//! Photon-counting baseline: the total count over `[0, t_f]` is compared to
//! a threshold `ν`, choosing `|+⟩` for `n > ν`.
//!
//! Count distributions account for any number of switching events during
//! the window. Paths with an even number of switches end in the initial
//! state and paths with an odd number end in the other one; each class
//! reduces to a one-dimensional integral over the time `t` spent in the
//! initial state.

use crate::chargemodel::RateSet;
use crate::decision::{FrontierPoint, Priors, ReadoutRule, State};
use crate::io::Provenance;
use crate::montecarlo::{DecisionMode, FrontierTable, Method};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::special::{bessel_i0_of_two_sqrt, bessel_i1_ratio_of_two_sqrt, poisson_cdf, poisson_pmf, poisson_sf};
use crate::{Error, Result};

/// Quadrature tolerance used for count probabilities and error rates.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDistributionParams {
    /// `δt` is ignored.
    pub rates: RateSet<f64>,
    pub t_f: f64,
}

impl CountDistributionParams {
    pub fn new(rates: RateSet<f64>, t_f: f64) -> Result<Self> {
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(Error::invalid("t_f", format!("{t_f} must be > 0")));
        }
        Ok(Self { rates, t_f })
    }

    /// `(γ_initial, γ_other, Γ_out of initial, Γ_back)`.
    fn oriented(&self, state: State) -> (f64, f64, f64, f64) {
        let r = &self.rates;
        match state {
            State::Plus => (r.gamma_plus, r.gamma_minus, r.big_gamma_plus, r.big_gamma_minus),
            State::Minus => (r.gamma_minus, r.gamma_plus, r.big_gamma_minus, r.big_gamma_plus),
        }
    }

    /// `μ_t = γ_initial·t + γ_other·(t_f − t)`.
    pub fn mu(&self, state: State, t: f64) -> f64 {
        let (g0, g1, _, _) = self.oriented(state);
        g0 * t + g1 * (self.t_f - t)
    }

    /// `E[g(μ)]` over the switching history. `g` maps the Poisson mean of
    /// the window to the quantity of interest (a mass, or a tail sum).
    fn expect<G: Fn(f64) -> f64>(&self, state: State, g: G) -> Result<f64> {
        let (g0, g1, k_out, k_back) = self.oriented(state);
        let tf = self.t_f;
        let k2 = k_out * k_back;
        let no_switch = g(g0 * tf) * (-k_out * tf).exp();
        if k_out == 0.0 {
            return Ok(no_switch);
        }
        let integrand = |t: f64| {
            let s = tf - t;
            let y = k2 * t * s;
            // x I₁(2x)/(t_f − t) = Γ₊Γ₋ t · I₁(2x)/x, finite at both ends
            let even = k2 * t * bessel_i1_ratio_of_two_sqrt(y);
            let odd = k_out * bessel_i0_of_two_sqrt(y);
            g(g0 * t + g1 * s) * (even + odd) * (-k_out * t - k_back * s).exp()
        };
        let opts = QuadratureOptions {
            abs_tol: QUAD_TOL,
            rel_tol: QUAD_TOL,
            max_intervals: 4000,
        };
        Ok(no_switch + integrate(integrand, 0.0, tf, opts)?)
    }
}

/// `P(n | ±)` for the total count in the window.
pub fn count_pmf(params: &CountDistributionParams, n: u64, state: State) -> Result<f64> {
    Ok(params.expect(state, |mu| poisson_pmf(n, mu))?.clamp(0.0, 1.0))
}

/// Conditional errors `(ε⁽⁺⁾, ε⁽⁻⁾)` of the rule "choose `|+⟩` iff `n > ν`".
pub fn count_error_rates(params: &CountDistributionParams, nu: u64) -> Result<(f64, f64)> {
    let e_plus = params.expect(State::Plus, |mu| poisson_cdf(nu, mu))?;
    let e_minus = params.expect(State::Minus, |mu| poisson_sf(nu, mu))?;
    Ok((e_plus.clamp(0.0, 1.0), e_minus.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub nu: u64,
    pub error: f64,
    pub err_plus: f64,
    pub err_minus: f64,
}

/// Scans `ν = 0, 1, 2, …` and stops at the first local minimum of
/// `P(+)ε⁽⁺⁾ + P(−)ε⁽⁻⁾`, provided the next two thresholds do not improve
/// on it; otherwise the scan continues.
pub fn optimize_threshold(params: &CountDistributionParams, priors: Priors) -> Result<ThresholdChoice> {
    let eval = |nu: u64| -> Result<ThresholdChoice> {
        let (err_plus, err_minus) = count_error_rates(params, nu)?;
        Ok(ThresholdChoice {
            nu,
            error: priors.p_plus() * err_plus + priors.p_minus() * err_minus,
            err_plus,
            err_minus,
        })
    };
    let r = &params.rates;
    let mu_hi = r.gamma_plus.max(r.gamma_minus) * params.t_f;
    let nu_cap = (mu_hi + 12.0 * mu_hi.sqrt() + 30.0).ceil() as u64;
    let mut cache: Vec<ThresholdChoice> = Vec::new();
    let at = |nu: u64, cache: &mut Vec<ThresholdChoice>| -> Result<ThresholdChoice> {
        while cache.len() as u64 <= nu {
            cache.push(eval(cache.len() as u64)?);
        }
        Ok(cache[nu as usize])
    };
    let mut best = at(0, &mut cache)?;
    let mut nu = 0;
    while nu < nu_cap {
        let cur = at(nu, &mut cache)?;
        let next = at(nu + 1, &mut cache)?;
        if next.error >= cur.error {
            let a = at(nu + 2, &mut cache)?;
            let b = at(nu + 3, &mut cache)?;
            if a.error >= cur.error && b.error >= cur.error {
                return Ok(cur);
            }
        }
        if cur.error < best.error {
            best = cur;
        }
        nu += 1;
    }
    Ok(best)
}

/// Counting frontier over a set of window lengths. The threshold is chosen
/// under `decision_priors`; errors are weighted with `true_priors`.
pub fn counting_frontier(
    rates: RateSet<f64>,
    windows: &[f64],
    decision_priors: Priors,
    true_priors: Priors,
    mode: DecisionMode,
    provenance: Provenance,
) -> Result<FrontierTable> {
    let points = windows
        .iter()
        .map(|&t_f| {
            let params = CountDistributionParams::new(rates, t_f)?;
            let best = optimize_threshold(&params, decision_priors)?;
            Ok(FrontierPoint::from_conditional(
                true_priors,
                best.err_plus,
                best.err_minus,
                t_f,
                t_f,
                ReadoutRule::CountThreshold {
                    t_f,
                    nu: best.nu as u32,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontierTable {
        method: Method::Counting,
        mode,
        prior_plus: true_priors.p_plus(),
        n_traj: 0,
        points,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(t_f: f64) -> CountDistributionParams {
        CountDistributionParams::new(RateSet::nv_charge(), t_f).unwrap()
    }

    #[test]
    fn no_switching_is_poisson() {
        let rates = RateSet::new(720.0, 50.0, 0.0, 0.0, 1e-4).unwrap();
        let p = CountDistributionParams::new(rates, 0.01).unwrap();
        for n in 0..20 {
            assert!((count_pmf(&p, n, State::Plus).unwrap() - poisson_pmf(n, 7.2)).abs() < 1e-15);
            assert!((count_pmf(&p, n, State::Minus).unwrap() - poisson_pmf(n, 0.5)).abs() < 1e-15);
        }
        let (ep, em) = count_error_rates(&p, 2).unwrap();
        assert!((ep - poisson_cdf(2, 7.2)).abs() < 1e-15);
        assert!((em - poisson_sf(2, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn normalization_at_10ms() {
        let p = params(0.01);
        for s in [State::Plus, State::Minus] {
            let total: f64 = (0..60).map(|n| count_pmf(&p, n, s).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-8, "{s:?}: {total}");
        }
    }

    #[test]
    fn huge_threshold_always_chooses_minus() {
        let (ep, em) = count_error_rates(&params(0.01), 500).unwrap();
        assert!((ep - 1.0).abs() < 1e-12);
        assert!(em < 1e-12);
    }

    #[test]
    fn optimum_near_two_poisson_crossover() {
        let rates = RateSet::new(720.0, 50.0, 0.0, 0.0, 1e-4).unwrap();
        for t_f in [0.002, 0.005, 0.01, 0.02] {
            let p = CountDistributionParams::new(rates, t_f).unwrap();
            let best = optimize_threshold(&p, Priors::equal()).unwrap();
            let cross = (720.0 - 50.0) * t_f / (720.0f64 / 50.0).ln();
            assert!((best.nu as f64 - cross).abs() <= 1.0, "t_f={t_f}: {} vs {cross}", best.nu);
        }
    }

    #[test]
    fn threshold_scan_is_optimal_among_neighbours() {
        let p = params(0.01);
        let best = optimize_threshold(&p, Priors::equal()).unwrap();
        for nu in 0..15 {
            let (a, b) = count_error_rates(&p, nu).unwrap();
            assert!(0.5 * (a + b) >= best.error - 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pmf_nonnegative_and_normalized(
            gp in 50.0f64..2000.0, gm in 0.0f64..100.0,
            kp in 0.0f64..1.0, km in 0.0f64..1.0, t_f in 1e-4f64..3e-2,
        ) {
            // Γ±·t_f up to 3
            let rates = RateSet::new(gp, gm, kp * 3.0 / t_f, km * 3.0 / t_f, 1e-4).unwrap();
            let p = CountDistributionParams::new(rates, t_f).unwrap();
            let nmax = (gp * t_f + 12.0 * (gp * t_f).sqrt() + 20.0) as u64;
            for s in [State::Plus, State::Minus] {
                let mut total = 0.0;
                for n in 0..=nmax {
                    let v = count_pmf(&p, n, s).unwrap();
                    prop_assert!(v >= 0.0);
                    total += v;
                }
                prop_assert!((total - 1.0).abs() < 1e-8, "{}", total);
            }
        }

        #[test]
        fn errors_monotone_in_threshold(t_f in 1e-3f64..2.5e-2) {
            let p = params(t_f);
            let mut prev = count_error_rates(&p, 0).unwrap();
            for nu in 1..12 {
                let cur = count_error_rates(&p, nu).unwrap();
                prop_assert!(cur.0 >= prev.0 - 1e-13);
                prop_assert!(cur.1 <= prev.1 + 1e-13);
                prev = cur;
            }
        }
    }
}
