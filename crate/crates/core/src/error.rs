use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("points closer than {tol:e} (gap {gap:e})")]
    CoincidentPoints { gap: f64, tol: f64 },

    #[error("dense tensor of {entries} entries exceeds the guard of {limit}")]
    SizeGuard { entries: u128, limit: u128 },

    #[error("near-critical level y={level}: |slope| {slope:e} at z={root}")]
    NearCritical { level: f64, root: f64, slope: f64 },

    #[error("signal lost at stage `{stage}` (iterate norm {norm:e})")]
    SignalLost { stage: String, norm: f64 },

    #[error("sample budget: {0}")]
    Sizing(String),

    #[error("label sample has {distinct} distinct values, basis degree {degree} needs {needed}")]
    RankDeficient { distinct: usize, degree: usize, needed: usize },

    #[error("no signal at degree {k}: lambda_k = {lambda:e}")]
    NoSignal { k: usize, lambda: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("initial point resampling exhausted after {tries} draws")]
    ResamplingExhausted { tries: usize },

    #[error("ODE horizon fell below the floor ({tau:e})")]
    TauFloor { tau: f64 },

    #[error("branch images overlap: branch {left} ends at {end}, branch {right} starts at {start}")]
    OverlappingBranches { left: usize, right: usize, end: f64, start: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("no exponent detected up to K={max_k}")]
    NoExponentDetected { max_k: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
