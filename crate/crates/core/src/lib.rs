//! Energy-consumption modeling for event-detection wireless sensor networks.
//!
//! The crate covers the three stages of a study: profiling residual energy
//! with a seedable simulator ([`sim`]), screening the configuration
//! parameters by significance and correlation ([`stats`]), and fitting a
//! least-squares linear model on the retained parameters ([`regression`]).
//! [`pipeline`] strings the stages together and persists their artifacts.

pub mod catalog;
pub mod dataset;
pub mod pipeline;
pub mod regression;
pub mod sim;
pub mod stats;

use catalog::ConfigError;
use dataset::DatasetError;
use regression::RegressionError;
use sim::SimError;
use stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// 2 for bad input data or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Regression(RegressionError::RankDeficient { .. } | RegressionError::NotOrthogonal { .. }) => 3,
            Error::Stats(StatsError::CorrelationOutOfRange(_)) => 3,
            _ => 2,
        }
    }
}
