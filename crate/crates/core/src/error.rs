use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid airport configuration: {0}")]
    InvalidConfig(String),

    #[error("state index {0} is outside the state space")]
    IndexOutOfRange(u32),

    #[error("invalid surface state: {0}")]
    InvalidState(String),

    #[error("probability {name} = {value} is outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("no real solution: {0}")]
    NoRealSolution(String),

    #[error("negative variance: {0}")]
    NegativeVariance(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("observation has zero likelihood under the current belief")]
    ZeroLikelihood,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
