//! State-dependent decay readouts.
//!
//! In the single-channel scheme `|+⟩` decays at rate `1/τ` and the emitted
//! event is detected with certainty while `|−⟩` never produces an event. In
//! the two-channel scheme both states decay at rate `1/τ` into distinguishable
//! channels. Detection is perfect and dark counts are absent in both.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::decision::{Decision, LogLikelihood, Priors, State, StopReason};
use crate::gaussian::{run_chunks, ErrorTime, StateSplit};
use crate::montecarlo::McEstimate;
use crate::rng::{self, Domain};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// Only `|+⟩` decays; absence of an event points to `|−⟩`.
    SingleChannel,
    /// Both states decay through channels that identify them.
    TwoChannel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel<T = f64> {
    tau: T,
    mode: ChannelMode,
}

/// Fixed readout time or adaptive readout with timeout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayReadout<T = f64> {
    Fixed { t_f: T },
    Adaptive { t_max: T },
}

impl<T: Real> DecayModel<T> {
    pub fn new(tau: T, mode: ChannelMode) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::invalid("tau", format!("{tau} must be > 0")));
        }
        Ok(Self { tau, mode })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    /// `ε = ½ e^{−t_f/τ}` for either channel mode.
    pub fn nonadaptive_error(&self, t_f: T) -> Result<T> {
        if !(t_f >= T::zero()) {
            return Err(Error::invalid("t_f", format!("{t_f} must be >= 0")));
        }
        Ok(T::lit(0.5) * (-t_f / self.tau).exp())
    }

    /// Error rate and average time of the adaptive rule with timeout `t_max`
    /// (equal priors).
    pub fn adaptive(&self, t_max: T) -> Result<ErrorTime<T>> {
        let error = self.nonadaptive_error(t_max)?;
        // τ(1 − e^{−t/τ}) via exp_m1 keeps precision for small t/τ
        let plus_time = -self.tau * (-t_max / self.tau).exp_m1();
        let time = match self.mode {
            ChannelMode::SingleChannel => T::lit(0.5) * (plus_time + t_max),
            ChannelMode::TwoChannel => plus_time,
        };
        Ok(ErrorTime { error, time })
    }

    /// `t_f / T` at matched error rate.
    pub fn speedup(&self, t_f: T) -> Result<T> {
        let t = self.adaptive(t_f)?.time;
        if t == T::zero() {
            return Ok(T::one());
        }
        Ok(t_f / t)
    }

    /// `λ_t` after waiting `t` without an event, or the certain sentinel for
    /// a detected event from `channel`.
    pub fn log_likelihood(&self, t: T, event: Option<State>) -> LogLikelihood<T> {
        match (self.mode, event) {
            (ChannelMode::SingleChannel, None) => LogLikelihood::Finite(-t / self.tau),
            (ChannelMode::TwoChannel, None) => LogLikelihood::Finite(T::zero()),
            (_, Some(State::Plus)) => LogLikelihood::CertainPlus,
            (ChannelMode::TwoChannel, Some(State::Minus)) => LogLikelihood::CertainMinus,
            // |−⟩ has no decay channel in single-channel mode
            (ChannelMode::SingleChannel, Some(State::Minus)) => LogLikelihood::CertainPlus,
        }
    }
}

impl DecayModel<f64> {
    /// Simulates one readout of a system prepared in `state`.
    pub fn readout_once<R: Rng>(&self, readout: DecayReadout, state: State, rng: &mut R) -> Decision {
        let exp = Exp::new(1.0 / self.tau).expect("tau > 0");
        let decays = match self.mode {
            ChannelMode::SingleChannel => state == State::Plus,
            ChannelMode::TwoChannel => true,
        };
        let event_time = if decays { Some(exp.sample(rng)) } else { None };
        let horizon = match readout {
            DecayReadout::Fixed { t_f } => t_f,
            DecayReadout::Adaptive { t_max } => t_max,
        };
        let seen = event_time.filter(|&s| s <= horizon);
        let stop_time = match (readout, seen) {
            (DecayReadout::Adaptive { .. }, Some(s)) => s,
            _ => horizon,
        };
        let (chosen_state, stop_reason) = match (self.mode, seen) {
            (_, Some(_)) => (
                state,
                if state == State::Plus {
                    StopReason::UpperThreshold
                } else {
                    StopReason::LowerThreshold
                },
            ),
            (ChannelMode::SingleChannel, None) => (State::Minus, StopReason::Timeout),
            (ChannelMode::TwoChannel, None) => {
                let coin = if rng.random::<bool>() { State::Plus } else { State::Minus };
                (coin, StopReason::Timeout)
            }
        };
        Decision {
            chosen_state,
            stop_time,
            stop_reason,
        }
    }
}

/// Monte Carlo estimate of `(ε, T)` with equal priors.
pub fn simulate_decay(
    model: &DecayModel<f64>,
    readout: DecayReadout,
    n_runs: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs", "must be > 0"));
    }
    let horizon = match readout {
        DecayReadout::Fixed { t_f } => t_f,
        DecayReadout::Adaptive { t_max } => t_max,
    };
    if !(horizon >= 0.0) {
        return Err(Error::invalid("readout time", format!("{horizon} must be >= 0")));
    }
    let priors = Priors::equal();
    let split = StateSplit::new(n_runs, priors);
    let tallies = run_chunks(n_runs, |i| {
        let state = split.state_of(i);
        let mut rng = rng::stream(seed, Domain::Decay, i);
        let d = model.readout_once(readout, state, &mut rng);
        (state, d.chosen_state != state, d.stop_time)
    });
    Ok(tallies.estimate(priors))
}
