//! Numerical continuation of periodic orbits in conservative hybrid systems.
//!
//! Periodic orbits of a conservative system come in one-parameter families
//! indexed by energy. Adding a dissipation parameter `xi` to every phase
//! field (`f + xi * grad H`) turns those families into regular solution
//! curves of a square-plus-one shooting system, which [`continuation::trace`]
//! follows with pseudo-arclength continuation. Along periodic orbits with
//! positive phase durations `xi` stays zero.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used by the command-line tool.

pub mod continuation;
pub mod error;
pub mod fd;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sensitivity;
pub mod shooting;
pub mod zoo;

pub use continuation::{
    branch_switch, correct, locate_singular, predict, tangent, trace, Branch, BranchPoint,
    ContinuationProblem, ContinuationSettings, PointClass, Termination, TimeBasedProblem,
};
pub use error::{Error, Result};
pub use integrator::IntegratorOptions;
pub use model::{Anchor, HybridSystem, Normalization, Phase};
pub use scalar::Scalar;
pub use shooting::{ContinuationVector, Layout};

pub type System = model::HybridSystem<f64>;
pub type Point = shooting::ContinuationVector<f64>;
pub type BranchF64 = continuation::Branch<f64>;
pub type BranchPointF64 = continuation::BranchPoint<f64>;
pub type ZooModel = zoo::ZooEntry<f64>;
