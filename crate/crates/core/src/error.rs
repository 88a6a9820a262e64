use thiserror::Error;

/// Errors raised by the simulator and its solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("energy efficiency undefined: total uplink power is zero")]
    ZeroPower,

    #[error("jain index undefined: all values are zero")]
    AllZero,

    #[error("power solver failed: {0}")]
    Solver(#[from] crate::power_opt::SolverError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
