use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty index set")]
    EmptySet,

    #[error("zero vector where a nonzero {0} is required")]
    ZeroVector(&'static str),

    #[error("not overparameterized: p = {p} must exceed n = {n}")]
    NotOverparameterized { n: usize, p: usize },

    #[error("design matrix is rank deficient (s_min = {s_min:e}, s_max = {s_max:e})")]
    RankDeficient { s_min: f64, s_max: f64 },

    #[error("critical index is infinite: no j < p has r_j >= b*n")]
    InfiniteCriticalIndex,

    #[error("tail too thin: p = {p} < {multiple} * (n + k) = {required}")]
    TailTooThin {
        p: usize,
        multiple: f64,
        required: f64,
    },

    #[error("gradient descent diverged at iteration {iteration} (loss {loss:e}, initial {initial:e})")]
    Diverged {
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Strips trial context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
