//! A common interface over the two quotient geometries, used by the Newton
//! solver and the verification harness.

use std::fmt::Debug;

use crate::balanced::{self, BalancedPoint};
use crate::error::Result;
use crate::field::VectorField;
use crate::kernels::Mat;
use crate::objectives::{gradient_field_balanced, gradient_field_stiefel, EuclideanOracle};
use crate::pair::{FactorPair, FactorPoint, LiftPair};
use crate::stiefel::{self, StiefelPoint};

pub trait Geometry: Copy + Debug + Send + Sync + 'static {
    type Point: FactorPoint + Debug + Send + Sync;

    fn name(self) -> &'static str;

    /// Validates raw factors as a point of this total space.
    fn point(self, m: Mat, n: Mat) -> Result<Self::Point>;

    /// A point of this total space representing `M·Nᵀ` for any full-rank
    /// pair (the Stiefel geometry re-orthonormalizes `M`).
    fn from_factors(self, m: &Mat, n: &Mat) -> Result<Self::Point>;

    /// The total-space metric at `pt`.
    fn metric(self, pt: &Self::Point, a: &FactorPair, b: &FactorPair) -> f64;

    fn norm(self, pt: &Self::Point, a: &FactorPair) -> f64 {
        self.metric(pt, a, a).max(0.0).sqrt()
    }

    fn relative_horizontality(self, pt: &Self::Point, a: &FactorPair) -> f64;

    /// Orthogonal projection of an arbitrary ambient pair onto the horizontal
    /// space (through the total tangent space where the total space is
    /// constrained).
    fn project_ambient(self, pt: &Self::Point, a: &FactorPair) -> Result<LiftPair>;

    /// Horizontal lift of `z ∈ T_{MNᵀ}M_p`.
    fn lift(self, pt: &Self::Point, z: &Mat) -> Result<LiftPair>;

    fn lifted_gradient(self, pt: &Self::Point, oracle: &dyn EuclideanOracle) -> Result<LiftPair>;

    /// `Pʰ(∇̄_ξ grad f̄)` given the gradient's value `grad` at `pt`.
    fn hessian_with(
        self,
        pt: &Self::Point,
        oracle: &dyn EuclideanOracle,
        grad: &FactorPair,
        xi: &LiftPair,
    ) -> Result<LiftPair>;

    /// Moves from `pt` along the horizontal `xi` scaled by `t`: the retraction
    /// for the balanced geometry, the Riemannian exponential for Stiefel.
    fn step(self, pt: &Self::Point, xi: &LiftPair, t: f64) -> Result<Self::Point>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Balanced;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stiefel;

impl Geometry for Balanced {
    type Point = BalancedPoint;

    fn name(self) -> &'static str {
        "balanced"
    }

    fn point(self, m: Mat, n: Mat) -> Result<BalancedPoint> {
        BalancedPoint::new(m, n)
    }

    fn from_factors(self, m: &Mat, n: &Mat) -> Result<BalancedPoint> {
        BalancedPoint::new(m.clone(), n.clone())
    }

    fn metric(self, pt: &BalancedPoint, a: &FactorPair, b: &FactorPair) -> f64 {
        balanced::metric_pair(pt, a, b)
    }

    fn relative_horizontality(self, pt: &BalancedPoint, a: &FactorPair) -> f64 {
        balanced::relative_horizontality(pt, a)
    }

    fn project_ambient(self, pt: &BalancedPoint, a: &FactorPair) -> Result<LiftPair> {
        Ok(balanced::horizontal_project_pair(pt, a)?.lift)
    }

    fn lift(self, pt: &BalancedPoint, z: &Mat) -> Result<LiftPair> {
        Ok(balanced::horizontal_lift(pt, z)?.lift)
    }

    fn lifted_gradient(self, pt: &BalancedPoint, oracle: &dyn EuclideanOracle) -> Result<LiftPair> {
        balanced::lifted_gradient(pt, oracle)
    }

    fn hessian_with(
        self,
        pt: &BalancedPoint,
        oracle: &dyn EuclideanOracle,
        grad: &FactorPair,
        xi: &LiftPair,
    ) -> Result<LiftPair> {
        xi.check_base(pt)?;
        let dy = gradient_field_balanced(oracle).derivative(pt.m(), pt.n(), xi.pair())?;
        let total = balanced::connection_from_parts(pt, xi.pair(), grad, &dy);
        Ok(balanced::horizontal_project_pair(pt, &total)?.lift)
    }

    fn step(self, pt: &BalancedPoint, xi: &LiftPair, t: f64) -> Result<BalancedPoint> {
        balanced::retract(pt, &xi.scale(t))
    }
}

impl Geometry for Stiefel {
    type Point = StiefelPoint;

    fn name(self) -> &'static str {
        "stiefel"
    }

    fn point(self, m: Mat, n: Mat) -> Result<StiefelPoint> {
        StiefelPoint::new(m, n)
    }

    fn from_factors(self, m: &Mat, n: &Mat) -> Result<StiefelPoint> {
        stiefel::reorthonormalize(m, n)
    }

    fn metric(self, _pt: &StiefelPoint, a: &FactorPair, b: &FactorPair) -> f64 {
        a.dot(b)
    }

    fn relative_horizontality(self, pt: &StiefelPoint, a: &FactorPair) -> f64 {
        stiefel::relative_horizontality(pt, a)
    }

    fn project_ambient(self, pt: &StiefelPoint, a: &FactorPair) -> Result<LiftPair> {
        let t = stiefel::tangent_project_total(pt, a)?;
        Ok(stiefel::horizontal_project_pair(pt, t.pair())?.lift)
    }

    fn lift(self, pt: &StiefelPoint, z: &Mat) -> Result<LiftPair> {
        Ok(stiefel::horizontal_lift(pt, z)?.lift)
    }

    fn lifted_gradient(self, pt: &StiefelPoint, oracle: &dyn EuclideanOracle) -> Result<LiftPair> {
        stiefel::lifted_gradient(pt, oracle)
    }

    fn hessian_with(
        self,
        pt: &StiefelPoint,
        oracle: &dyn EuclideanOracle,
        _grad: &FactorPair,
        xi: &LiftPair,
    ) -> Result<LiftPair> {
        xi.check_base(pt)?;
        let dy = gradient_field_stiefel(oracle).derivative(pt.m(), pt.n(), xi.pair())?;
        let total = stiefel::connection_from_parts(pt, &dy);
        Ok(stiefel::horizontal_project_pair(pt, &total)?.lift)
    }

    fn step(self, pt: &StiefelPoint, xi: &LiftPair, t: f64) -> Result<StiefelPoint> {
        stiefel::exp_quotient(pt, xi, t)
    }
}

/// Which geometry to run, chosen at runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryKind {
    Balanced,
    Stiefel,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Balanced => Balanced.name(),
            GeometryKind::Stiefel => Stiefel.name(),
        }
    }
}

impl std::str::FromStr for GeometryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" => Ok(GeometryKind::Balanced),
            "stiefel" => Ok(GeometryKind::Stiefel),
            other => Err(format!("unknown geometry `{other}` (expected balanced or stiefel)")),
        }
    }
}

impl std::fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
