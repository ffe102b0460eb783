//! Hidden two-state Markov process with Poisson photon emission.
//!
//! The hidden state switches `|+⟩ → |−⟩` at rate `Γ₊` and `|−⟩ → |+⟩` at rate
//! `Γ₋`; photons are detected at rate `γ±` in state `|±⟩`. Time is divided
//! into bins of length `δt`, and the measurement matrix `M(δn)` propagates an
//! unnormalized state vector across one bin in which `δn` photons were seen.
//! Products of these matrices give exact trajectory likelihoods.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::decision::LogLikelihood;
use crate::linalg::{expm2_complex, Mat2, SquareMatrix};
use crate::{Error, Real, Result};

/// Default bound on the probability of more than `dn_max` photons per bin.
pub const DEFAULT_TAIL_BOUND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet<T = f64> {
    /// Detection rate in `|+⟩` (Hz).
    pub gamma_plus: T,
    /// Detection rate in `|−⟩` (Hz).
    pub gamma_minus: T,
    /// Switching rate `|+⟩ → |−⟩` (Hz).
    pub big_gamma_plus: T,
    /// Switching rate `|−⟩ → |+⟩` (Hz).
    pub big_gamma_minus: T,
    /// Bin duration (s).
    pub dt: T,
}

impl<T: Real> RateSet<T> {
    pub fn new(gamma_plus: T, gamma_minus: T, big_gamma_plus: T, big_gamma_minus: T, dt: T) -> Result<Self> {
        for (name, v) in [
            ("gamma_plus", gamma_plus),
            ("gamma_minus", gamma_minus),
            ("big_gamma_plus", big_gamma_plus),
            ("big_gamma_minus", big_gamma_minus),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} must be a finite rate >= 0")));
            }
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("{dt} must be > 0")));
        }
        Ok(Self {
            gamma_plus,
            gamma_minus,
            big_gamma_plus,
            big_gamma_minus,
            dt,
        })
    }

    /// Rates measured for the NV-center charge readout: `γ₊ = 720 Hz`,
    /// `γ₋ = 50 Hz`, `Γ₊ = 3.6 Hz`, `Γ₋ = 0.98 Hz`, with `δt = 0.1 ms`.
    pub fn nv_charge() -> Self {
        Self {
            gamma_plus: T::lit(720.0),
            gamma_minus: T::lit(50.0),
            big_gamma_plus: T::lit(3.6),
            big_gamma_minus: T::lit(0.98),
            dt: T::lit(1e-4),
        }
    }

    pub fn with_dt(self, dt: T) -> Result<Self> {
        Self::new(self.gamma_plus, self.gamma_minus, self.big_gamma_plus, self.big_gamma_minus, dt)
    }

    /// Whether detection dominates switching, `min(γ₊, γ₋) > max(Γ₊, Γ₋)`.
    /// Computation proceeds either way; reports surface the flag.
    pub fn regime_valid(&self) -> bool {
        self.gamma_plus.min(self.gamma_minus) > self.big_gamma_plus.max(self.big_gamma_minus)
    }

    pub fn lindbladian(&self) -> Lindbladian<T> {
        Lindbladian {
            matrix: [
                [-self.big_gamma_plus, self.big_gamma_minus],
                [self.big_gamma_plus, -self.big_gamma_minus],
            ],
        }
    }

    /// Detection matrix `𝓚 = diag(γ₊, γ₋)`.
    pub fn detection(&self) -> Mat2<T> {
        [[self.gamma_plus, T::zero()], [T::zero(), self.gamma_minus]]
    }
}

/// Generator of the two-level fluctuator in the basis `(|+⟩, |−⟩)`; columns
/// sum to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lindbladian<T = f64> {
    pub matrix: Mat2<T>,
}

impl<T: Real> Lindbladian<T> {
    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        mat_vec(&self.matrix, v)
    }

    /// `e^{𝓛 t}`.
    pub fn propagator(&self, t: T) -> Mat2<T> {
        let mut m = SquareMatrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = self.matrix[i][j] * t;
            }
        }
        let e = m.expm();
        [[e[(0, 0)], e[(0, 1)]], [e[(1, 0)], e[(1, 1)]]]
    }
}

#[inline]
pub(crate) fn mat_vec<T: Real>(m: &Mat2<T>, v: [T; 2]) -> [T; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Measurement matrices `M(δn)`, `δn = 0..=dn_max`, for one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrixSet<T = f64> {
    matrices: Vec<Mat2<T>>,
    tail_mass: T,
    rates: RateSet<T>,
}

impl<T: Real> UpdateMatrixSet<T> {
    /// Builds `M(0..=dn_max)` and rejects the result if more than
    /// [`DEFAULT_TAIL_BOUND`] of probability falls beyond the cutoff.
    pub fn build(rates: RateSet<T>, dn_max: usize) -> Result<Self> {
        Self::build_with_bound(rates, dn_max, T::lit(DEFAULT_TAIL_BOUND))
    }

    /// `M(δn)` is the `δn`-th block of the first block column of
    /// `exp(G δt)`, where `G` is block lower bidiagonal with `𝓛 − 𝓚` on the
    /// diagonal and `𝓚` below it.
    pub fn build_with_bound(rates: RateSet<T>, dn_max: usize, tail_bound: T) -> Result<Self> {
        let set = Self::build_unchecked(rates, dn_max);
        if set.tail_mass > tail_bound {
            return Err(Error::TailMassExceeded {
                tail_mass: set.tail_mass.as_f64(),
                bound: tail_bound.as_f64(),
                dn_max,
            });
        }
        Ok(set)
    }

    /// Smallest cutoff whose tail mass is below `tail_bound`.
    pub fn build_auto(rates: RateSet<T>, tail_bound: T) -> Result<Self> {
        let mut dn = 8usize;
        loop {
            let full = Self::build_unchecked(rates, dn);
            if full.tail_mass <= tail_bound {
                // M(n) does not depend on the cutoff, so prefixes are exact
                for k in 0..=dn {
                    let prefix = full.truncated(k);
                    if prefix.tail_mass <= tail_bound {
                        return Ok(prefix);
                    }
                }
            }
            if dn > 4096 {
                return Err(Error::TailMassExceeded {
                    tail_mass: full.tail_mass.as_f64(),
                    bound: tail_bound.as_f64(),
                    dn_max: dn,
                });
            }
            dn *= 2;
        }
    }

    fn build_unchecked(rates: RateSet<T>, dn_max: usize) -> Self {
        let blocks = dn_max + 1;
        let n = 2 * blocks;
        let l = rates.lindbladian().matrix;
        let k = rates.detection();
        let mut g = SquareMatrix::zeros(n);
        for b in 0..blocks {
            for i in 0..2 {
                for j in 0..2 {
                    g[(2 * b + i, 2 * b + j)] = (l[i][j] - k[i][j]) * rates.dt;
                    if b + 1 < blocks {
                        g[(2 * (b + 1) + i, 2 * b + j)] = k[i][j] * rates.dt;
                    }
                }
            }
        }
        let e = g.expm();
        let matrices: Vec<Mat2<T>> = (0..blocks)
            .map(|b| {
                let mut m = [[T::zero(); 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        // clamp rounding noise; the exact entries are nonnegative
                        m[i][j] = e[(2 * b + i, j)].max(T::zero());
                    }
                }
                m
            })
            .collect();
        Self::from_matrices(matrices, rates)
    }

    fn from_matrices(matrices: Vec<Mat2<T>>, rates: RateSet<T>) -> Self {
        let tail_mass = tail_of(&matrices);
        Self {
            matrices,
            tail_mass,
            rates,
        }
    }

    /// The set restricted to `δn ≤ dn_max`.
    pub fn truncated(&self, dn_max: usize) -> Self {
        let keep = (dn_max + 1).min(self.matrices.len());
        Self::from_matrices(self.matrices[..keep].to_vec(), self.rates)
    }

    pub fn dn_max(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn tail_mass(&self) -> T {
        self.tail_mass
    }

    pub fn rates(&self) -> &RateSet<T> {
        &self.rates
    }

    pub fn matrices(&self) -> &[Mat2<T>] {
        &self.matrices
    }

    pub fn get(&self, count: u32) -> Option<&Mat2<T>> {
        self.matrices.get(count as usize)
    }

    fn matrix_for(&self, bin: usize, count: u32) -> Result<&Mat2<T>> {
        self.get(count).ok_or(Error::CountExceedsCutoff {
            bin,
            count,
            dn_max: self.dn_max(),
        })
    }

    /// `Σ_δn M(δn)`, which equals `e^{𝓛δt}` up to the tail mass.
    pub fn sum(&self) -> Mat2<T> {
        let mut s = [[T::zero(); 2]; 2];
        for m in &self.matrices {
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += m[i][j];
                }
            }
        }
        s
    }

    /// Evaluates `e^{𝓡(e^{iχ}) δt}` on `n_grid` uniform counting-field points
    /// and inverts the discrete Fourier transform. Independent of the
    /// augmented-generator construction; used as a cross-check.
    pub fn fourier_check(rates: RateSet<T>, dn_max: usize, n_grid: usize) -> Result<Self> {
        if n_grid <= dn_max {
            return Err(Error::invalid(
                "n_grid",
                format!("{n_grid} must exceed dn_max = {dn_max}"),
            ));
        }
        let l = rates.lindbladian().matrix;
        let k = rates.detection();
        let c = |x: T| Complex::new(x, T::zero());
        let grid: Vec<Mat2<Complex<T>>> = (0..n_grid)
            .map(|j| {
                let chi = T::lit(2.0) * T::PI() * T::from_usize_lossy(j) / T::from_usize_lossy(n_grid);
                let z = Complex::new(chi.cos(), chi.sin());
                let mut r = [[Complex::new(T::zero(), T::zero()); 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        r[a][b] = (c(l[a][b] - k[a][b]) + z * c(k[a][b])) * c(rates.dt);
                    }
                }
                expm2_complex(r)
            })
            .collect();
        let norm = T::one() / T::from_usize_lossy(n_grid);
        let matrices = (0..=dn_max)
            .map(|n| {
                let mut acc = [[Complex::new(T::zero(), T::zero()); 2]; 2];
                for (j, g) in grid.iter().enumerate() {
                    // e^{-i n χ_j}; index reduced mod n_grid keeps the angle exact-ish
                    let idx = (n * j) % n_grid;
                    let ang = -T::lit(2.0) * T::PI() * T::from_usize_lossy(idx) / T::from_usize_lossy(n_grid);
                    let w = Complex::new(ang.cos(), ang.sin());
                    for a in 0..2 {
                        for b in 0..2 {
                            acc[a][b] += g[a][b] * w;
                        }
                    }
                }
                let mut m = [[T::zero(); 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        m[a][b] = (acc[a][b].re * norm).max(T::zero());
                    }
                }
                m
            })
            .collect();
        Ok(Self::from_matrices(matrices, rates))
    }
}

fn tail_of<T: Real>(matrices: &[Mat2<T>]) -> T {
    let mut kept = [T::zero(); 2];
    for m in matrices {
        for j in 0..2 {
            kept[j] += m[0][j] + m[1][j];
        }
    }
    (T::one() - kept[0].min(kept[1])).max(T::zero())
}

/// Two-state vector carrying an accumulated log normalization, so that the
/// represented vector is `e^{log_scale} · (rho_plus, rho_minus)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector<T = f64> {
    pub rho_plus: T,
    pub rho_minus: T,
    pub log_scale: T,
}

impl<T: Real> StateVector<T> {
    pub fn new(rho_plus: T, rho_minus: T) -> Result<Self> {
        if !(rho_plus >= T::zero() && rho_minus >= T::zero()) || rho_plus + rho_minus <= T::zero() {
            return Err(Error::invalid(
                "state vector",
                format!("({rho_plus}, {rho_minus}) must be nonnegative and nonzero"),
            ));
        }
        Ok(Self {
            rho_plus,
            rho_minus,
            log_scale: T::zero(),
        })
    }

    /// `ℓ₀⁽⁺⁾ = (1, 0)`.
    pub fn plus() -> Self {
        Self {
            rho_plus: T::one(),
            rho_minus: T::zero(),
            log_scale: T::zero(),
        }
    }

    /// `ℓ₀⁽⁻⁾ = (0, 1)`.
    pub fn minus() -> Self {
        Self {
            rho_plus: T::zero(),
            rho_minus: T::one(),
            log_scale: T::zero(),
        }
    }

    pub fn mixed() -> Self {
        Self {
            rho_plus: T::lit(0.5),
            rho_minus: T::lit(0.5),
            log_scale: T::zero(),
        }
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.rho_plus, self.rho_minus]
    }

    /// `ln Tr` of the represented (unnormalized) vector.
    pub fn log_trace(&self) -> T {
        self.log_scale + (self.rho_plus + self.rho_minus).ln()
    }

    /// Normalized copy with `log_scale` reset.
    pub fn normalized(&self) -> Self {
        let s = self.rho_plus + self.rho_minus;
        Self {
            rho_plus: self.rho_plus / s,
            rho_minus: self.rho_minus / s,
            log_scale: T::zero(),
        }
    }

    /// Applies `M` and renormalizes, folding the trace into `log_scale`.
    /// Returns `None` if the result vanishes.
    pub fn apply(&self, m: &Mat2<T>) -> Option<Self> {
        let [a, b] = mat_vec(m, self.as_array());
        let s = a + b;
        if !(s > T::zero()) {
            return None;
        }
        Some(Self {
            rho_plus: a / s,
            rho_minus: b / s,
            log_scale: self.log_scale + s.ln(),
        })
    }
}

/// A sequence of per-bin photon counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub counts: Vec<u32>,
    /// Bin duration (s).
    pub dt: f64,
}

impl Trajectory {
    pub fn new(counts: Vec<u32>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("{dt} must be > 0")));
        }
        Ok(Self { counts, dt })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.counts.len() as f64 * self.dt
    }
}

/// Incrementally updated log-likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodTracker<T = f64> {
    plus: Option<StateVector<T>>,
    minus: Option<StateVector<T>>,
    bins: usize,
}

impl<T: Real> Default for LikelihoodTracker<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LikelihoodTracker<T> {
    pub fn new() -> Self {
        Self {
            plus: Some(StateVector::plus()),
            minus: Some(StateVector::minus()),
            bins: 0,
        }
    }

    /// Conditions both hypotheses on one more bin.
    pub fn push(&mut self, count: u32, matrices: &UpdateMatrixSet<T>) -> Result<LogLikelihood<T>> {
        let m = matrices.matrix_for(self.bins, count)?;
        let plus = self.plus.and_then(|v| v.apply(m));
        let minus = self.minus.and_then(|v| v.apply(m));
        if plus.is_none() && minus.is_none() {
            return Err(Error::ImpossibleCount { count });
        }
        self.plus = plus;
        self.minus = minus;
        self.bins += 1;
        Ok(self.lambda())
    }

    pub fn lambda(&self) -> LogLikelihood<T> {
        match (self.plus, self.minus) {
            (Some(p), Some(m)) => LogLikelihood::Finite(p.log_trace() - m.log_trace()),
            (Some(_), None) => LogLikelihood::CertainPlus,
            (None, Some(_)) => LogLikelihood::CertainMinus,
            (None, None) => unreachable!("rejected in push"),
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

/// `λ_N = ln Tr[M(δn_{N−1})…M(δn₀)ℓ₀⁽⁺⁾] − ln Tr[…ℓ₀⁽⁻⁾]`.
pub fn log_likelihood_ratio<T: Real>(traj: &Trajectory, matrices: &UpdateMatrixSet<T>) -> Result<LogLikelihood<T>> {
    let mut tracker = LikelihoodTracker::new();
    for &c in &traj.counts {
        tracker.push(c, matrices)?;
    }
    Ok(tracker.lambda())
}

/// One step of Bayesian filtering: returns `M(δn)ρ / P` and
/// `P = Tr[M(δn)ρ]`.
pub fn posterior_propagate<T: Real>(
    rho: &StateVector<T>,
    count: u32,
    matrices: &UpdateMatrixSet<T>,
) -> Result<(StateVector<T>, T)> {
    let m = matrices.matrix_for(0, count)?;
    let rho = rho.normalized();
    let [a, b] = mat_vec(m, rho.as_array());
    let p = a + b;
    if !(p > T::zero()) {
        return Err(Error::ImpossibleCount { count });
    }
    Ok((
        StateVector {
            rho_plus: a / p,
            rho_minus: b / p,
            log_scale: T::zero(),
        },
        p,
    ))
}

/// `ln P(ψ_N | ℓ₀) = ln Tr[M(δn_{N−1})…M(δn₀)ℓ₀]`; `−∞` if impossible.
pub fn trajectory_probability<T: Real>(
    traj: &Trajectory,
    initial: &StateVector<T>,
    matrices: &UpdateMatrixSet<T>,
) -> Result<T> {
    let mut v = *initial;
    for (bin, &c) in traj.counts.iter().enumerate() {
        let m = matrices.matrix_for(bin, c)?;
        match v.apply(m) {
            Some(next) => v = next,
            None => return Ok(T::neg_infinity()),
        }
    }
    Ok(v.log_trace())
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    format: String,
    version: u32,
    /// `γ₊, γ₋, Γ₊, Γ₋, δt` as IEEE-754 bit patterns (hex).
    rates: [String; 5],
    dn_max: usize,
    tail_mass: String,
    /// Row-major `M(δn)` entries as IEEE-754 bit patterns (hex).
    matrices: Vec<[String; 4]>,
    /// Same numbers in decimal, for humans only.
    rates_decimal: [f64; 5],
}

const CACHE_FORMAT: &str = "seqread-update-matrices";

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn unbits(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::Cache(format!("bad float bits '{s}': {e}")))
}

impl UpdateMatrixSet<f64> {
    /// Serializes to a self-describing JSON record with bit-exact floats.
    pub fn to_cache_string(&self) -> String {
        let r = &self.rates;
        let rates = [r.gamma_plus, r.gamma_minus, r.big_gamma_plus, r.big_gamma_minus, r.dt];
        let record = CacheRecord {
            format: CACHE_FORMAT.to_string(),
            version: 1,
            rates: rates.map(bits),
            dn_max: self.dn_max(),
            tail_mass: bits(self.tail_mass),
            matrices: self
                .matrices
                .iter()
                .map(|m| [bits(m[0][0]), bits(m[0][1]), bits(m[1][0]), bits(m[1][1])])
                .collect(),
            rates_decimal: rates,
        };
        serde_json::to_string_pretty(&record).expect("serializable")
    }

    pub fn from_cache_str(s: &str) -> Result<Self> {
        let rec: CacheRecord = serde_json::from_str(s).map_err(|e| Error::Cache(e.to_string()))?;
        if rec.format != CACHE_FORMAT || rec.version != 1 {
            return Err(Error::Cache(format!("unsupported format {} v{}", rec.format, rec.version)));
        }
        if rec.matrices.len() != rec.dn_max + 1 {
            return Err(Error::Cache("matrix count does not match dn_max".into()));
        }
        let r: Vec<f64> = rec.rates.iter().map(|s| unbits(s)).collect::<Result<_>>()?;
        let rates = RateSet::new(r[0], r[1], r[2], r[3], r[4])?;
        let matrices = rec
            .matrices
            .iter()
            .map(|e| Ok([[unbits(&e[0])?, unbits(&e[1])?], [unbits(&e[2])?, unbits(&e[3])?]]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            matrices,
            tail_mass: unbits(&rec.tail_mass)?,
            rates,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_cache_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_cache_str(&s)
    }
}
