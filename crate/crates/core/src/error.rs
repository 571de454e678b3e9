use thiserror::Error;

use crate::planner::Chain;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is off the manifold (constraint violation {deviation:.3e})")]
    OffManifold { deviation: f64 },

    #[error("vector is not tangent at the base point (normal component {deviation:.3e})")]
    NotTangent { deviation: f64 },

    #[error("retraction step is degenerate (|x + step| = {norm:.3e})")]
    DegenerateStep { norm: f64 },

    #[error("minimizing geodesic is not unique (points are antipodal)")]
    NonUniqueGeodesic,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("base pair is not steerable: controllability Gramian is numerically singular (ratio {ratio:.3e})")]
    UncontrollablePair { ratio: f64 },

    #[error("steering failed: {0}")]
    Steering(String),

    #[error("chain planning exceeded {max_legs} legs")]
    PlanningBudget { max_legs: usize, partial: Box<Chain> },
}
