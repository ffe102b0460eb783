//! Prior, threshold and posterior arithmetic shared by all readout models.
//!
//! Log-likelihood ratios are natural logarithms of `P(data | +) / P(data | −)`.
//! A detected event that can only come from `|+⟩` (or only from `|−⟩`) is
//! carried as a [`LogLikelihood::CertainPlus`] / [`LogLikelihood::CertainMinus`]
//! sentinel so no infinity ever enters downstream arithmetic.

use std::fmt;

use crate::{Error, Real, Result};

/// The two hypotheses being discriminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Plus,
    Minus,
}

impl State {
    pub fn flipped(self) -> Self {
        match self {
            State::Plus => State::Minus,
            State::Minus => State::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            State::Plus => "plus",
            State::Minus => "minus",
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Prior probabilities of the two states. Only `P(+)` is stored so that
/// `P(+) + P(−) = 1` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors<T = f64> {
    p_plus: T,
}

impl<T: Real> Priors<T> {
    pub fn new(p_plus: T) -> Result<Self> {
        if !(p_plus >= T::zero() && p_plus <= T::one()) {
            return Err(Error::invalid(
                "p_plus",
                format!("{p_plus} is not a probability"),
            ));
        }
        Ok(Self { p_plus })
    }

    pub fn equal() -> Self {
        Self {
            p_plus: T::lit(0.5),
        }
    }

    #[inline]
    pub fn p_plus(&self) -> T {
        self.p_plus
    }

    #[inline]
    pub fn p_minus(&self) -> T {
        T::one() - self.p_plus
    }

    pub fn of(&self, state: State) -> T {
        match state {
            State::Plus => self.p_plus(),
            State::Minus => self.p_minus(),
        }
    }
}

impl<T: Real> Default for Priors<T> {
    fn default() -> Self {
        Self::equal()
    }
}

/// A log-likelihood ratio, possibly certain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihood<T = f64> {
    Finite(T),
    /// The data can only have come from `|+⟩` (λ = +∞).
    CertainPlus,
    /// The data can only have come from `|−⟩` (λ = −∞).
    CertainMinus,
}

impl<T: Real> LogLikelihood<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            LogLikelihood::Finite(x) => Some(x),
            _ => None,
        }
    }
}

impl<T> From<T> for LogLikelihood<T> {
    fn from(x: T) -> Self {
        LogLikelihood::Finite(x)
    }
}

/// Running log-likelihood ratio together with the elapsed readout time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihoodState<T = f64> {
    pub lambda: LogLikelihood<T>,
    pub time: T,
}

/// Optimal decision threshold `λ_th = ln[P(−)/P(+)]`.
pub fn threshold_from_priors<T: Real>(priors: Priors<T>) -> Result<T> {
    let p = priors.p_plus();
    if p <= T::zero() || p >= T::one() {
        return Err(Error::DegeneratePrior(p.as_f64()));
    }
    if p == T::lit(0.5) {
        return Ok(T::zero());
    }
    Ok(priors.p_minus().ln() - p.ln())
}

/// Numerically stable logistic function `1 / (1 + e^{−x})`.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Log-odds of a probability given through its distance from 0 (`p`) and
/// from 1 (`q = 1 − p`). Passing both avoids rounding `1 − p` near 1.
#[inline]
pub fn log_odds<T: Real>(p: T, q: T) -> T {
    p.ln() - q.ln()
}

/// Posterior probability of `|+⟩`, `p_t = e^{λ−λ_th} / (1 + e^{λ−λ_th})`.
pub fn posterior_probability<T: Real>(lambda: LogLikelihood<T>, lambda_th: T) -> T {
    match lambda {
        LogLikelihood::Finite(l) => logistic(l - lambda_th),
        LogLikelihood::CertainPlus => T::one(),
        LogLikelihood::CertainMinus => T::zero(),
    }
}

/// Chooses `|+⟩` iff `λ > λ_th`; an exact tie decides `|−⟩`.
pub fn decide<T: Real>(lambda: LogLikelihood<T>, lambda_th: T) -> State {
    match lambda {
        LogLikelihood::Finite(l) if l > lambda_th => State::Plus,
        LogLikelihood::Finite(_) => State::Minus,
        LogLikelihood::CertainPlus => State::Plus,
        LogLikelihood::CertainMinus => State::Minus,
    }
}

/// Stopping thresholds `λ₋ < λ₊` and the maximum readout time `t_M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule<T = f64> {
    lambda_plus: T,
    lambda_minus: T,
    t_max: T,
}

impl<T: Real> StoppingRule<T> {
    pub fn new(lambda_plus: T, lambda_minus: T, t_max: T) -> Result<Self> {
        if !(lambda_minus < lambda_plus) {
            return Err(Error::invalid(
                "stopping thresholds",
                format!("need lambda_minus < lambda_plus, got {lambda_minus} >= {lambda_plus}"),
            ));
        }
        if !(t_max > T::zero()) {
            return Err(Error::invalid("t_max", format!("{t_max} must be > 0")));
        }
        Ok(Self {
            lambda_plus,
            lambda_minus,
            t_max,
        })
    }

    /// `λ₊ = −λ₋ = λ̄`.
    pub fn symmetric(lambda_bar: T, t_max: T) -> Result<Self> {
        Self::new(lambda_bar, -lambda_bar, t_max)
    }

    /// Thresholds from stopping probabilities, each given as its distance
    /// from the nearer boundary: `p₊ = 1 − plus_gap`, `p₋ = minus_gap`.
    pub fn from_stopping_gaps(plus_gap: T, minus_gap: T, lambda_th: T, t_max: T) -> Result<Self> {
        let unit = T::zero()..T::one();
        if !(unit.contains(&plus_gap) && plus_gap > T::zero())
            || !(unit.contains(&minus_gap) && minus_gap > T::zero())
        {
            return Err(Error::invalid(
                "stopping probabilities",
                "gaps must lie in (0, 1)",
            ));
        }
        let upper = lambda_th + log_odds(T::one() - plus_gap, plus_gap);
        let lower = lambda_th + log_odds(minus_gap, T::one() - minus_gap);
        Self::new(upper, lower, t_max)
    }

    #[inline]
    pub fn lambda_plus(&self) -> T {
        self.lambda_plus
    }

    #[inline]
    pub fn lambda_minus(&self) -> T {
        self.lambda_minus
    }

    #[inline]
    pub fn t_max(&self) -> T {
        self.t_max
    }

    /// Returns the reason to stop at `(λ, t)`, if any. Thresholds take
    /// precedence over the timeout.
    pub fn check(&self, lambda: LogLikelihood<T>, time: T) -> Option<StopReason> {
        match lambda {
            LogLikelihood::CertainPlus => Some(StopReason::UpperThreshold),
            LogLikelihood::CertainMinus => Some(StopReason::LowerThreshold),
            LogLikelihood::Finite(l) if l >= self.lambda_plus => Some(StopReason::UpperThreshold),
            LogLikelihood::Finite(l) if l <= self.lambda_minus => Some(StopReason::LowerThreshold),
            _ if time >= self.t_max => Some(StopReason::Timeout),
            _ => None,
        }
    }

    /// Builds the decision for a readout that stopped at `(λ, t)`.
    pub fn conclude(
        &self,
        lambda: LogLikelihood<T>,
        time: T,
        lambda_th: T,
        reason: StopReason,
    ) -> Decision<T> {
        Decision {
            chosen_state: decide(lambda, lambda_th),
            stop_time: time.min(self.t_max),
            stop_reason: reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    UpperThreshold,
    LowerThreshold,
    Timeout,
}

/// Outcome of a single readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T = f64> {
    pub chosen_state: State,
    pub stop_time: T,
    pub stop_reason: StopReason,
}

/// What produced a [`FrontierPoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReadoutRule<T = f64> {
    /// Fixed readout time `t_f` deciding on `λ_{t_f}`.
    FixedTime { t_f: T },
    /// Photon counting over `t_f` with threshold `ν` (choose `|+⟩` for `n > ν`).
    CountThreshold { t_f: T, nu: u32 },
    /// Adaptive rule with stopping probabilities `p₊ = 1 − plus_gap`,
    /// `p₋ = minus_gap` and timeout `t_max`.
    Stopping { plus_gap: T, minus_gap: T, t_max: T },
    /// Symmetric log-likelihood thresholds `±λ̄` with timeout `t_max`.
    Symmetric { lambda_bar: T, t_max: T },
}

/// One `(T, ε)` pair with its conditional components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint<T = f64> {
    pub avg_time: T,
    pub err_rate: T,
    pub err_plus: T,
    pub err_minus: T,
    pub time_plus: T,
    pub time_minus: T,
    pub rule: ReadoutRule<T>,
}

impl<T: Real> FrontierPoint<T> {
    /// Combines conditional error rates and times with the true priors.
    pub fn from_conditional(
        priors: Priors<T>,
        err_plus: T,
        err_minus: T,
        time_plus: T,
        time_minus: T,
        rule: ReadoutRule<T>,
    ) -> Self {
        let (pp, pm) = (priors.p_plus(), priors.p_minus());
        Self {
            avg_time: pp * time_plus + pm * time_minus,
            err_rate: pp * err_plus + pm * err_minus,
            err_plus,
            err_minus,
            time_plus,
            time_minus,
            rule,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_from_priors(Priors::new(0.5).unwrap()).unwrap(), 0.0);
        let t = threshold_from_priors(Priors::new(0.25).unwrap()).unwrap();
        assert_relative_eq!(t, 3f64.ln(), max_relative = 1e-15);
        // round trip through the posterior at zero evidence recovers the prior
        assert_relative_eq!(
            posterior_probability(LogLikelihood::Finite(0.0), t),
            0.25,
            max_relative = 1e-14
        );
        let t = threshold_from_priors(Priors::new(0.75).unwrap()).unwrap();
        assert_relative_eq!(t, -(3f64.ln()), max_relative = 1e-15);
    }

    #[test]
    fn degenerate_priors_rejected() {
        for p in [0.0, 1.0] {
            let err = threshold_from_priors(Priors::new(p).unwrap()).unwrap_err();
            assert!(matches!(err, Error::DegeneratePrior(_)));
        }
        assert!(Priors::new(1.5).is_err());
        assert!(Priors::new(f64::NAN).is_err());
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(posterior_probability(LogLikelihood::Finite(0.7), 0.7), 0.5);
        let p = posterior_probability(LogLikelihood::Finite(0.7 + 99f64.ln()), 0.7);
        assert_relative_eq!(p, 0.99, max_relative = 1e-14);
        assert_relative_eq!(log_odds(p, 1.0 - p), 99f64.ln(), max_relative = 1e-12);
        assert_eq!(posterior_probability::<f64>(LogLikelihood::CertainPlus, 3.0), 1.0);
        assert_eq!(posterior_probability::<f64>(LogLikelihood::CertainMinus, 3.0), 0.0);
    }

    #[test]
    fn posterior_stays_inside_unit_interval_far_from_threshold() {
        let p = posterior_probability(LogLikelihood::Finite(-800.0f64), 0.0);
        assert!(p >= 0.0 && p.is_finite());
        let p = posterior_probability(LogLikelihood::Finite(800.0), 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn decide_examples() {
        assert_eq!(decide(LogLikelihood::Finite(1.0), 0.0), State::Plus);
        assert_eq!(decide(LogLikelihood::Finite(-0.1), 0.0), State::Minus);
        assert_eq!(decide(LogLikelihood::Finite(0.3), 0.3), State::Minus);
        assert_eq!(decide::<f64>(LogLikelihood::CertainPlus, 1e9), State::Plus);
    }

    #[test]
    fn generic_over_f32() {
        let t = threshold_from_priors(Priors::<f32>::new(0.25).unwrap()).unwrap();
        assert!((t - 3f32.ln()).abs() < 1e-6);
        assert_eq!(decide(LogLikelihood::Finite(1.0f32), 0.0), State::Plus);
    }

    #[test]
    fn stopping_rule_validation_and_check() {
        assert!(StoppingRule::new(1.0, 1.0, 1.0).is_err());
        assert!(StoppingRule::new(1.0, -1.0, 0.0).is_err());
        let rule = StoppingRule::symmetric(2.0, 10.0).unwrap();
        assert_eq!(rule.check(LogLikelihood::Finite(2.0), 0.1), Some(StopReason::UpperThreshold));
        assert_eq!(rule.check(LogLikelihood::Finite(-2.5), 0.1), Some(StopReason::LowerThreshold));
        assert_eq!(rule.check(LogLikelihood::Finite(0.0), 10.0), Some(StopReason::Timeout));
        assert_eq!(rule.check(LogLikelihood::Finite(0.0), 1.0), None);
        let d = rule.conclude(LogLikelihood::Finite(0.0), 12.0, 0.0, StopReason::Timeout);
        assert!(d.stop_time <= rule.t_max());
        assert_eq!(d.chosen_state, State::Minus);
    }

    #[test]
    fn stopping_gaps_map_to_log_odds() {
        let rule = StoppingRule::from_stopping_gaps(0.01, 0.01, 0.0, 1.0).unwrap();
        assert_relative_eq!(rule.lambda_plus(), 99f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(rule.lambda_minus(), -(99f64.ln()), max_relative = 1e-12);
        // gaps far below machine epsilon relative to 1 stay finite and distinct
        let rule = StoppingRule::from_stopping_gaps(1e-15, 1e-15, 0.0, 1.0).unwrap();
        assert_relative_eq!(rule.lambda_plus(), 1e15f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn frontier_point_is_convex_combination() {
        let pr = Priors::new(0.25f64).unwrap();
        let p = FrontierPoint::from_conditional(pr, 0.04, 0.01, 2.0, 6.0, ReadoutRule::FixedTime { t_f: 1.0 });
        assert!((p.err_rate - (0.25 * 0.04 + 0.75 * 0.01)).abs() < 1e-15);
        assert!((p.avg_time - 5.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn decide_matches_posterior(l in -50.0f64..50.0, th in -10.0f64..10.0) {
            prop_assume!(l != th);
            let plus = decide(LogLikelihood::Finite(l), th) == State::Plus;
            prop_assert_eq!(plus, posterior_probability(LogLikelihood::Finite(l), th) > 0.5);
        }

        #[test]
        fn prior_antisymmetry(p in 0.001f64..0.999) {
            let a = threshold_from_priors(Priors::new(p).unwrap()).unwrap();
            let b = threshold_from_priors(Priors::new(1.0 - p).unwrap()).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn posterior_strictly_increasing(l in -30.0f64..30.0, d in 0.01f64..5.0, th in -5.0f64..5.0) {
            let lo = posterior_probability(LogLikelihood::Finite(l), th);
            let hi = posterior_probability(LogLikelihood::Finite(l + d), th);
            prop_assert!(hi > lo);
        }
    }
}
