//! Tangent vector fields on a factor total space.

use crate::error::Result;
use crate::kernels::Mat;
use crate::pair::FactorPair;

/// A vector field `(M, N) ↦ Y(M, N)` on the ambient factor space, together
/// with its Euclidean directional derivative `∂_Ẋ Y`.
///
/// Fields are evaluated at raw factor pairs so that finite-difference probes
/// may step slightly off a constrained total space.
pub trait VectorField {
    fn value(&self, m: &Mat, n: &Mat) -> Result<FactorPair>;

    /// Directional derivative of the field's components along `dir`.
    fn derivative(&self, m: &Mat, n: &Mat, dir: &FactorPair) -> Result<FactorPair>;
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn value(&self, m: &Mat, n: &Mat) -> Result<FactorPair> {
        (**self).value(m, n)
    }
    fn derivative(&self, m: &Mat, n: &Mat, dir: &FactorPair) -> Result<FactorPair> {
        (**self).derivative(m, n, dir)
    }
}

/// A field with the same value everywhere.
#[derive(Clone, Debug)]
pub struct ConstantField(pub FactorPair);

impl VectorField for ConstantField {
    fn value(&self, _m: &Mat, _n: &Mat) -> Result<FactorPair> {
        Ok(self.0.clone())
    }

    fn derivative(&self, m: &Mat, n: &Mat, _dir: &FactorPair) -> Result<FactorPair> {
        Ok(FactorPair::zeros_like(m, n))
    }
}

/// A field frozen at one point: reports a fixed value and a fixed derivative,
/// regardless of where or along which direction it is probed. Used to time
/// the geometric overhead of the connection without any oracle work.
#[derive(Clone, Debug)]
pub struct FrozenField {
    pub value: FactorPair,
    pub derivative: FactorPair,
}

impl VectorField for FrozenField {
    fn value(&self, _m: &Mat, _n: &Mat) -> Result<FactorPair> {
        Ok(self.value.clone())
    }

    fn derivative(&self, _m: &Mat, _n: &Mat, _dir: &FactorPair) -> Result<FactorPair> {
        Ok(self.derivative.clone())
    }
}
