use nalgebra::DVector;
use thiserror::Error;

use crate::cmc::RankDeficiency;
use crate::graph::VariableKey;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable dimension must be at least 1, got {0}")]
    InvalidDimension(usize),

    #[error("variable {0} is not part of the graph")]
    UnknownVariable(VariableKey),

    #[error("no value assigned to variable {0}")]
    MissingValue(VariableKey),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point is infeasible: inequality row {row} evaluates to {value:e}")]
    Infeasible { row: usize, value: f64 },

    #[error(transparent)]
    RankDeficient(#[from] RankDeficiency),

    #[error("tangent vector leaves the tangent cone (constraint residual {residual:e})")]
    NotInTangentCone { residual: f64 },

    #[error("cone projection did not converge after {iterations} iterations (residual {residual:e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("linear system is not positive definite")]
    NotPositiveDefinite,

    #[error("retraction subproblem did not converge: violation {violation:e}, KKT residual {kkt_residual:e}")]
    RetractionFailed {
        best: DVector<f64>,
        violation: f64,
        kkt_residual: f64,
    },

    #[error("invalid phase schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
