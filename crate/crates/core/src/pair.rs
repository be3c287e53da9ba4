//! Factor pairs and tangent directions attached to a base point.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::kernels::Mat;

/// Identity of a constructed factor point. Clones of a point share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PointId(u64);

impl PointId {
    pub(crate) fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        PointId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

/// A point `(M, N)` of a total space mapping onto `X = M·Nᵀ`.
pub trait FactorPoint: Clone {
    fn id(&self) -> PointId;
    fn m(&self) -> &Mat;
    fn n(&self) -> &Mat;

    fn rank(&self) -> usize {
        self.m().ncols()
    }

    /// `(m, n, p)`.
    fn dims(&self) -> (usize, usize, usize) {
        (self.m().nrows(), self.n().nrows(), self.m().ncols())
    }

    /// The represented matrix `M·Nᵀ`.
    fn product(&self) -> Mat {
        self.m() * self.n().transpose()
    }

    /// Dimension `p(m+n−p)` of the rank-p manifold, which is also the
    /// dimension of every horizontal space.
    fn horizontal_dim(&self) -> usize {
        let (m, n, p) = self.dims();
        p * (m + n - p)
    }
}

/// A raw pair of `m×p` and `n×p` matrices: an ambient point or direction of
/// the factor space, with no base point attached.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub m: Mat,
    pub n: Mat,
}

impl FactorPair {
    pub fn new(m: Mat, n: Mat) -> Self {
        Self { m, n }
    }

    pub fn zeros_like(m: &Mat, n: &Mat) -> Self {
        Self {
            m: Mat::zeros(m.nrows(), m.ncols()),
            n: Mat::zeros(n.nrows(), n.ncols()),
        }
    }

    /// Euclidean trace inner product on the product space.
    pub fn dot(&self, other: &FactorPair) -> f64 {
        self.m.dot(&other.m) + self.n.dot(&other.n)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> FactorPair {
        FactorPair::new(&self.m * s, &self.n * s)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &FactorPair) -> FactorPair {
        FactorPair::new(&self.m + &other.m * s, &self.n + &other.n * s)
    }

    /// Right multiplication of both slots by different matrices.
    pub fn right_mul(&self, rm: &Mat, rn: &Mat) -> FactorPair {
        FactorPair::new(&self.m * rm, &self.n * rn)
    }

    pub fn shape_matches(&self, m: &Mat, n: &Mat) -> bool {
        self.m.shape() == m.shape() && self.n.shape() == n.shape()
    }
}

impl Add<&FactorPair> for &FactorPair {
    type Output = FactorPair;
    fn add(self, rhs: &FactorPair) -> FactorPair {
        FactorPair::new(&self.m + &rhs.m, &self.n + &rhs.n)
    }
}

impl Sub<&FactorPair> for &FactorPair {
    type Output = FactorPair;
    fn sub(self, rhs: &FactorPair) -> FactorPair {
        FactorPair::new(&self.m - &rhs.m, &self.n - &rhs.n)
    }
}

impl Mul<f64> for &FactorPair {
    type Output = FactorPair;
    fn mul(self, s: f64) -> FactorPair {
        self.scale(s)
    }
}

impl Neg for &FactorPair {
    type Output = FactorPair;
    fn neg(self) -> FactorPair {
        self.scale(-1.0)
    }
}

/// A tangent direction `(Ẋ_M, Ẋ_N)` attached to a base point.
///
/// `horizontal` is a certificate set only by operations that produce
/// horizontal vectors (lifts, projections, gradients) or by explicit
/// certification; consumers that require horizontality re-check it.
#[derive(Clone, Debug)]
pub struct LiftPair {
    base: PointId,
    dir: FactorPair,
    horizontal: bool,
}

impl LiftPair {
    /// Attaches an ambient direction to `pt`, without any horizontality claim.
    pub fn ambient<P: FactorPoint>(pt: &P, xm: Mat, xn: Mat) -> Result<Self> {
        if xm.shape() != pt.m().shape() {
            return Err(Error::dims("LiftPair (M slot)", pt.m().shape(), xm.shape()));
        }
        if xn.shape() != pt.n().shape() {
            return Err(Error::dims("LiftPair (N slot)", pt.n().shape(), xn.shape()));
        }
        Ok(Self {
            base: pt.id(),
            dir: FactorPair::new(xm, xn),
            horizontal: false,
        })
    }

    pub fn zero<P: FactorPoint>(pt: &P) -> Self {
        Self {
            base: pt.id(),
            dir: FactorPair::zeros_like(pt.m(), pt.n()),
            horizontal: true,
        }
    }

    pub(crate) fn from_pair<P: FactorPoint>(pt: &P, dir: FactorPair, horizontal: bool) -> Self {
        debug_assert!(dir.shape_matches(pt.m(), pt.n()));
        Self {
            base: pt.id(),
            dir,
            horizontal,
        }
    }

    pub fn base(&self) -> PointId {
        self.base
    }

    pub fn xm(&self) -> &Mat {
        &self.dir.m
    }

    pub fn xn(&self) -> &Mat {
        &self.dir.n
    }

    pub fn pair(&self) -> &FactorPair {
        &self.dir
    }

    pub fn into_pair(self) -> FactorPair {
        self.dir
    }

    pub fn is_horizontal(&self) -> bool {
        self.horizontal
    }

    pub(crate) fn with_horizontal(mut self, flag: bool) -> Self {
        self.horizontal = flag;
        self
    }

    /// Fails unless `self` is attached to `pt`.
    pub fn check_base<P: FactorPoint>(&self, pt: &P) -> Result<()> {
        if self.base != pt.id() {
            return Err(Error::Contract(format!(
                "tangent attached to point {:?} used at point {:?}",
                self.base,
                pt.id()
            )));
        }
        Ok(())
    }

    fn same_base(&self, other: &LiftPair) {
        assert_eq!(
            self.base, other.base,
            "combining tangents attached to different base points"
        );
    }

    pub fn scale(&self, s: f64) -> LiftPair {
        LiftPair {
            base: self.base,
            dir: self.dir.scale(s),
            horizontal: self.horizontal,
        }
    }

    /// `self + s·other`; both must share a base point. Linear combinations of
    /// horizontal vectors keep the certificate.
    pub fn axpy(&self, s: f64, other: &LiftPair) -> LiftPair {
        self.same_base(other);
        LiftPair {
            base: self.base,
            dir: self.dir.axpy(s, &other.dir),
            horizontal: self.horizontal && other.horizontal,
        }
    }

    pub fn sub(&self, other: &LiftPair) -> LiftPair {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &LiftPair) -> LiftPair {
        self.axpy(1.0, other)
    }

    /// Euclidean norm of the raw components (not the geometry's metric).
    pub fn euclidean_norm(&self) -> f64 {
        self.dir.norm()
    }
}
