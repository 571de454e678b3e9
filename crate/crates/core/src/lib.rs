//! Complete lifts of affine control systems to the tangent bundle: vector
//! field lifts and brackets, lifted flows, rank tests, tangent-bundle
//! distances, and constructive chain planning.

pub mod error;
pub mod fields;
pub mod flow;
pub mod liealg;
pub mod manifold;
pub mod planner;
pub mod sasaki;
pub mod systems;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use error::{Error, Result};
pub use fields::{complete_lift, lie_bracket, LiftedVectorField, VectorField};
pub use flow::{integrate_base, integrate_lifted, AffineSystem, ControlSignal, Segment, Trajectory};
pub use manifold::{Manifold, TangentPoint};
pub use planner::{plan_chain, verify_chain, Chain, ChainOptions, SteeringOracle};
pub use sasaki::{MetricMode, TangentMetric};
