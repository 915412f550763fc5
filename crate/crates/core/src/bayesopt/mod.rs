//! Black-box maximization of attack objectives: a Gaussian-process surrogate
//! with expected improvement, plus random and grid search baselines.

mod gp;
mod search;

pub use gp::{cholesky, expected_improvement, gram, matern52, norm_cdf, norm_pdf, GpModel, HyperPolicy};
pub use search::{
    bayes_search, coordinate_ascent, grid_search, maximize_acquisition, random_search, AcquisitionPoint, Evaluation,
    Evaluator, FnEvaluator, IterationRecord, ObservationSet, Phase, SearchOptions, SearchResult, Sink, Strategy,
};

use thiserror::Error;

use crate::pattern::PatternError;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("kernel matrix is singular even with maximal jitter")]
    Singular,
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("search interrupted: {0}")]
    Interrupted(String),
}

/// A sink that drops every record.
pub fn discard(_: &IterationRecord) -> Result<(), BayesError> {
    Ok(())
}
