use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("requested dimension {requested} exceeds numerical rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("clustering infeasible: {0}")]
    Infeasible(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system at step {step}")]
    Singular { step: usize },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("class {0} has positive prior but no test samples")]
    UndefinedEstimate(usize),

    #[error("class {class} has {count} samples, at least 2 are required")]
    SmallClass { class: usize, count: usize },

    #[error("basis mode {mode} does not vanish at the inlet (value {value:e})")]
    Inadmissible { mode: usize, value: f64 },

    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error("missing artifact: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn at_sample(self, index: usize) -> Self {
        Error::Sample { index, source: Box::new(self) }
    }
}
