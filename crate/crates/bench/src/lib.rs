//! Shared fixtures for the kernel benchmarks.

use fixrank::balanced::BalancedPoint;
use fixrank::random::Sampler;
use fixrank::stiefel::StiefelPoint;
use fixrank::{ApproximationObjective, FactorPair, FrozenField, Mat};

/// Random problem data of one shape: points in both geometries built from
/// the same factors, a tangent vector in factored form and a frozen field.
pub struct Fixture {
    pub balanced: BalancedPoint,
    pub stiefel: StiefelPoint,
    pub u: Mat,
    pub v: Mat,
    pub ambient: FactorPair,
    pub field: FrozenField,
    pub objective: ApproximationObjective,
}

impl Fixture {
    pub fn new(m: usize, n: usize, p: usize, seed: u64) -> Self {
        let mut s = Sampler::new(seed);
        let (mm, nn) = (s.factor(m, p), s.factor(n, p));
        let target = &mm * nn.transpose() + s.gaussian(m, n) * 1e-2;
        Self {
            balanced: BalancedPoint::new(mm.clone(), nn.clone()).expect("full-rank factors"),
            stiefel: StiefelPoint::from_factors(&mm, &nn).expect("full-rank factors"),
            u: s.gaussian(m, p),
            v: s.gaussian(n, p),
            ambient: FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)),
            field: FrozenField {
                value: FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)),
                derivative: FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)),
            },
            objective: ApproximationObjective::new(target).expect("finite target"),
        }
    }
}

/// `m + n = total`, split as evenly as possible.
pub fn split(total: usize) -> (usize, usize) {
    (total - total / 2, total / 2)
}
