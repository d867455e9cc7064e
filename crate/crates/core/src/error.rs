use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{name} = {value} lies outside its prior support")]
    OutOfSupport { name: String, value: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("design matrix is not of full column rank")]
    RankDeficientX,
    #[error("{knots} knots requested for {n} observations; need fewer knots than observations")]
    TooManyKnots { knots: usize, n: usize },
    #[error("modified predictive-process variance at location {index} is negative ({value:e}); knots may be too close")]
    NegativeAdjustment { index: usize, value: f64 },
    #[error("time step {t} has no observed values")]
    AllMissingStep { t: usize },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("retained sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("time step {t}, iteration {iteration}: {source}")]
    AtTimeStep {
        t: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub fn at_sample(self, index: usize) -> Error {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub fn at_time_step(self, t: usize, iteration: usize) -> Error {
        Error::AtTimeStep {
            t,
            iteration,
            source: Box::new(self),
        }
    }

    /// The innermost error, with iteration/sample context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } | Error::AtSample { source, .. } | Error::AtTimeStep { source, .. } => {
                source.root()
            }
            other => other,
        }
    }

    /// True for failures that arise while evaluating a well-formed model
    /// (factorizations, negative variances), as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Linalg(_) | Error::RankDeficientX | Error::NegativeAdjustment { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_wrapping_keeps_root() {
        let e = Error::from(LinalgError::NotPositiveDefinite { pivot: 3, value: -1.0 })
            .at_sample(4)
            .at_iteration(9);
        assert!(e.is_numerical());
        assert!(matches!(e.root(), Error::Linalg(_)));
        let msg = e.to_string();
        assert!(msg.contains("iteration 9") && msg.contains("sample 4") && msg.contains("pivot 3"));
        assert!(!Error::InvalidParam("x".into()).is_numerical());
    }
}
