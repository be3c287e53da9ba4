//! Riemannian Newton methods on the manifold of fixed-rank matrices,
//! represented through factorizations `X = M·Nᵀ` under two quotient
//! geometries: a balanced `GL(p)` quotient with a fiber-invariant metric, and
//! an `O(p)` quotient with `M` kept orthonormal.

pub mod balanced;
pub mod error;
pub mod field;
pub mod geometry;
pub mod kernels;
pub mod newton;
pub mod objectives;
pub mod pair;
pub mod random;
pub mod stiefel;

pub use balanced::BalancedPoint;
pub use error::{Error, Result};
pub use field::{ConstantField, FrozenField, VectorField};
pub use geometry::{Balanced, Geometry, GeometryKind, Stiefel};
pub use kernels::Mat;
pub use newton::{newton_run, newton_run_observed, newton_step, IterationRecord, NewtonConfig, NewtonResult, Status, StepPolicy};
pub use objectives::{ApproximationObjective, CompletionObjective, EuclideanOracle, Observation};
pub use pair::{FactorPair, FactorPoint, LiftPair, PointId};
pub use stiefel::StiefelPoint;
