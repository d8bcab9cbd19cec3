use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error(
        "incompatible correlation for pair ({i}, {j}): target joint probability {target} \
         outside attainable range [{lo}, {hi}]"
    )]
    IncompatibleCorrelation {
        i: usize,
        j: usize,
        target: f64,
        lo: f64,
        hi: f64,
    },

    #[error("latent correlation matrix is not positive semi-definite (minimum eigenvalue {min_eigenvalue:e})")]
    NonPsdLatentCorrelation { min_eigenvalue: f64 },

    #[error("degenerate cell probability {prob:e} in family {family} for pair ({i}, {j})")]
    DegenerateCell {
        family: String,
        i: usize,
        j: usize,
        prob: f64,
    },

    #[error("optimizer did not converge after {iterations} iterations (score max-norm {score_norm:e})")]
    NonConvergence {
        iterations: usize,
        score_norm: f64,
        last: Vec<f64>,
    },

    #[error("variability matrix is singular (condition number {condition:e})")]
    SingularVariability { condition: f64 },

    #[error("invalid information estimate: {0}")]
    InvalidInformation(String),

    #[error("value {value} outside profiled range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("cyclic pedigree involving member {0}")]
    CyclicPedigree(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown individual `{id}` referenced")]
    ReferentialIntegrity { path: String, line: usize, id: String },

    #[error("{path}:{line}: duplicate individual id `{id}`")]
    DuplicateId { path: String, line: usize, id: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
