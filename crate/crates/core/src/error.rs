use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate prior: p_plus = {0} (must lie strictly between 0 and 1)")]
    DegeneratePrior(f64),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("series budget exceeded: no convergence within {terms} terms")]
    SeriesBudgetExceeded { terms: usize },

    #[error("tail mass {tail_mass:e} exceeds bound {bound:e} at dn_max = {dn_max}; use a larger dn_max")]
    TailMassExceeded {
        tail_mass: f64,
        bound: f64,
        dn_max: usize,
    },

    #[error("count exceeds matrix cutoff: bin {bin} has {count} > dn_max = {dn_max}")]
    CountExceedsCutoff { bin: usize, count: u32, dn_max: usize },

    #[error("count {count} has zero probability under the model")]
    ImpossibleCount { count: u32 },

    #[error("quadrature failed: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("target error rate {target} unreachable on the {curve} curve")]
    TargetUnreachable { target: f64, curve: &'static str },

    #[error("{what} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("class '{0}' has no members")]
    EmptyClass(&'static str),

    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("inconsistent bin duration: {first} s in {first_path} vs {other} s in {other_path}")]
    MixedBinDuration {
        first: f64,
        first_path: String,
        other: f64,
        other_path: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed cache: {0}")]
    Cache(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
