//! Asynchronous gossip-based random projection (GRP) for distributed
//! constrained convex optimization.
//!
//! Agents on a connected graph wake up one at a time, average their estimate
//! with a random neighbor, take a local gradient step and project onto one
//! randomly realized component of their constraint set. The crate provides the
//! network model and its spectral constants, projectable constraint
//! components, smooth objectives, the iteration itself, closed-form error
//! bounds, a robust MPC benchmark and a seeded Monte-Carlo harness.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision instantiation.

pub mod analysis;
pub mod constraints;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mpc;
pub mod objective;
pub mod polyhedron;
pub mod scalar;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type SelectionMatrix64 = topology::SelectionMatrix<f64>;
pub type MixMatrix64 = topology::MixMatrix<f64>;
pub type ConstraintComponent64 = constraints::ConstraintComponent<f64>;
pub type LocalConstraint64 = constraints::LocalConstraint<f64>;
pub type UncertainHalfspace64 = constraints::UncertainHalfspace<f64>;
pub type Quadratic64 = objective::Quadratic<f64>;
pub type MpcObjective64 = objective::MpcObjective<f64>;
pub type ObjectiveConstants64 = objective::ObjectiveConstants<f64>;
pub type Problem64 = engine::Problem<f64, objective::Quadratic<f64>>;
pub type StepsizePolicy64 = engine::StepsizePolicy<f64>;
pub type RunState64 = engine::RunState<f64>;
pub type TraceRecord64 = engine::TraceRecord<f64>;
pub type BoundInputs64 = analysis::BoundInputs<f64>;
pub type MpcInstance64 = mpc::MpcInstance<f64>;
pub type DeterministicEquivalent64 = mpc::DeterministicEquivalent<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type SelectionMatrix32 = topology::SelectionMatrix<f32>;
pub type Quadratic32 = objective::Quadratic<f32>;
pub type BoundInputs32 = analysis::BoundInputs<f32>;
