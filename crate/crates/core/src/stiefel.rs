//! Quotient geometry of `St(p, m) × R*^{n×p}` as a Riemannian submanifold of
//! the Euclidean factor space. The fibers are `{(MR, NR) : R ∈ O(p)}` and the
//! horizontal space at `(M, N)` is
//!
//! ```text
//! { (Ṁ, Ṅ) : MᵀṀ skew,  MᵀṀ + NᵀṄ symmetric }.
//! ```
//!
//! Unlike the balanced geometry, the Riemannian exponential is available in
//! closed form through two small matrix exponentials.

use log::warn;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::kernels::{
    matrix_exp, qr_positive, relative, skew_sq, spd_condition, spd_inverse, sylvester_solve, sym_sq, Mat,
};
use crate::objectives::{gradient_field_stiefel, EuclideanOracle};
use crate::pair::{FactorPair, FactorPoint, LiftPair, PointId};

pub use crate::balanced::{HORIZONTAL_TOL, MAX_GRAM_CONDITION};

/// Orthonormality drift above which a step re-orthonormalizes `M`.
pub const REORTH_DRIFT: f64 = 1.0e-10;
/// Drift above which re-orthonormalization is logged as a warning.
pub const DRIFT_WARNING: f64 = 1.0e-6;
/// Tolerance on `‖RᵀR − I‖` for a gauge rotation.
pub const ROTATION_TOL: f64 = 1.0e-10;

/// A point `(M, N)` with `MᵀM = I_p` and `N` of full column rank.
#[derive(Clone, Debug)]
pub struct StiefelPoint {
    id: PointId,
    m: Mat,
    n: Mat,
    gram_n: Mat,
    gram_n_inv: Mat,
    shifted: Mat,
    orth_tol: f64,
}

/// `‖MᵀM − I‖_F`.
pub fn orthonormality_drift(m: &Mat) -> f64 {
    let p = m.ncols();
    (m.transpose() * m - Mat::identity(p, p)).norm()
}

impl StiefelPoint {
    pub const DEFAULT_ORTH_TOL: f64 = 1.0e-10;
    pub const RANK_TOL: f64 = 1.0e-10;

    pub fn new(m: Mat, n: Mat) -> Result<Self> {
        Self::with_orth_tol(m, n, Self::DEFAULT_ORTH_TOL)
    }

    pub fn with_orth_tol(m: Mat, n: Mat, orth_tol: f64) -> Result<Self> {
        let p = m.ncols();
        if p == 0 || m.nrows() < p {
            return Err(Error::dims("StiefelPoint (M)", (p.max(1), p.max(1)), m.shape()));
        }
        if n.ncols() != p || n.nrows() < p {
            return Err(Error::dims("StiefelPoint (N)", (n.nrows().max(p), p), n.shape()));
        }
        if m.iter().chain(n.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("StiefelPoint"));
        }
        let drift = orthonormality_drift(&m);
        if drift > orth_tol {
            return Err(Error::Contract(format!(
                "M is not orthonormal (‖MᵀM − I‖ = {drift:.3e} > {orth_tol:.1e})"
            )));
        }
        let gram_n = sym_sq(&(n.transpose() * &n));
        let cond = spd_condition(&gram_n);
        if !cond.is_finite() || cond.sqrt().recip() <= Self::RANK_TOL {
            return Err(Error::RankDeficient {
                what: "N factor",
                ratio: if cond.is_finite() { cond.sqrt().recip() } else { 0.0 },
            });
        }
        if cond > MAX_GRAM_CONDITION {
            return Err(Error::IllConditioned {
                what: "N factor",
                condition: cond,
                limit: MAX_GRAM_CONDITION,
            });
        }
        let gram_n_inv = spd_inverse(&gram_n, "N factor")?;
        let shifted = &gram_n + Mat::identity(p, p);
        Ok(Self {
            id: PointId::fresh(),
            m,
            n,
            gram_n,
            gram_n_inv,
            shifted,
            orth_tol,
        })
    }

    /// Builds a point from any full-rank pair by orthonormalizing `M` and
    /// compensating `N`, preserving `M·Nᵀ`.
    pub fn from_factors(m: &Mat, n: &Mat) -> Result<Self> {
        reorthonormalize(m, n)
    }

    pub fn gram_n(&self) -> &Mat {
        &self.gram_n
    }

    pub fn gram_n_inv(&self) -> &Mat {
        &self.gram_n_inv
    }

    pub fn orth_tol(&self) -> f64 {
        self.orth_tol
    }

    pub fn into_factors(self) -> (Mat, Mat) {
        (self.m, self.n)
    }
}

impl FactorPoint for StiefelPoint {
    fn id(&self) -> PointId {
        self.id
    }
    fn m(&self) -> &Mat {
        &self.m
    }
    fn n(&self) -> &Mat {
        &self.n
    }
}

/// An orthogonal `R` acting by `(M, N) ↦ (MR, NR)`.
#[derive(Clone, Debug)]
pub struct GaugeRotation {
    r: Mat,
}

impl GaugeRotation {
    pub fn new(r: Mat) -> Result<Self> {
        let p = r.nrows();
        if r.ncols() != p || p == 0 {
            return Err(Error::dims("GaugeRotation", (p, p), r.shape()));
        }
        let err = (r.transpose() * &r - Mat::identity(p, p)).norm();
        if err > ROTATION_TOL {
            return Err(Error::Gauge(format!("‖RᵀR − I‖ = {err:.3e} exceeds {ROTATION_TOL:.0e}")));
        }
        Ok(Self { r })
    }

    pub fn identity(p: usize) -> Self {
        Self { r: Mat::identity(p, p) }
    }

    pub fn matrix(&self) -> &Mat {
        &self.r
    }
}

/// A horizontal lift with its skew `Ω` and symmetric `S`.
#[derive(Clone, Debug)]
pub struct LiftSolutionO {
    pub lift: LiftPair,
    pub omega: Mat,
    pub s: Mat,
}

/// A horizontal projection with the skew `Ω` of the vertical correction.
#[derive(Clone, Debug)]
pub struct ProjectionSolutionO {
    pub lift: LiftPair,
    pub omega: Mat,
}

/// Orthogonal projection `(Ṁ − M·sym(MᵀṀ), Ṅ)` onto `T_M St × R^{n×p}`.
pub fn tangent_project_total(pt: &StiefelPoint, a: &FactorPair) -> Result<LiftPair> {
    if !a.shape_matches(&pt.m, &pt.n) {
        return Err(Error::dims("tangent_project_total", pt.m.shape(), a.m.shape()));
    }
    Ok(LiftPair::from_pair(pt, project_pair(&pt.m, a), false))
}

fn project_pair(m: &Mat, a: &FactorPair) -> FactorPair {
    FactorPair::new(&a.m - m * sym_sq(&(m.transpose() * &a.m)), a.n.clone())
}

/// Euclidean metric `tr(aₘᵀbₘ + aₙᵀbₙ)`.
pub fn metric_total(pt: &StiefelPoint, a: &LiftPair, b: &LiftPair) -> Result<f64> {
    a.check_base(pt)?;
    b.check_base(pt)?;
    Ok(a.pair().dot(b.pair()))
}

/// `(MΩ, NΩ)` for skew `Ω`.
pub fn vertical_vector(pt: &StiefelPoint, omega: &Mat) -> Result<LiftPair> {
    let p = pt.rank();
    if omega.shape() != (p, p) {
        return Err(Error::dims("vertical_vector", (p, p), omega.shape()));
    }
    let asym = (omega + omega.transpose()).norm();
    if asym > 1.0e-12 * omega.norm().max(1.0) {
        return Err(Error::Contract(format!("Ω is not skew-symmetric (‖Ω+Ωᵀ‖ = {asym:.3e})")));
    }
    Ok(LiftPair::from_pair(pt, FactorPair::new(&pt.m * omega, &pt.n * omega), false))
}

/// `Ṁ·Nᵀ + M·Ṅᵀ`.
pub fn dpi(pt: &StiefelPoint, a: &LiftPair) -> Result<Mat> {
    a.check_base(pt)?;
    Ok(a.xm() * pt.n.transpose() + &pt.m * a.xn().transpose())
}

/// `‖sym(Mᵀaₘ)‖ / ‖aₘ‖`: distance of the M slot from `T_M St`.
pub fn stiefel_tangency(pt: &StiefelPoint, a: &FactorPair) -> f64 {
    relative(sym_sq(&(pt.m.transpose() * &a.m)).norm(), a.m.norm())
}

/// Absolute residuals `(‖sym(Mᵀaₘ)‖, ‖skew(Mᵀaₘ + Nᵀaₙ)‖)`; both vanish on
/// the horizontal space.
pub fn horizontality_residuals(pt: &StiefelPoint, a: &FactorPair) -> (f64, f64) {
    let mtm = pt.m.transpose() * &a.m;
    let total = &mtm + pt.n.transpose() * &a.n;
    (sym_sq(&mtm).norm(), skew_sq(&total).norm())
}

/// Sum of both horizontality residuals relative to `‖Mᵀaₘ‖ + ‖Nᵀaₙ‖`.
pub fn relative_horizontality(pt: &StiefelPoint, a: &FactorPair) -> f64 {
    let (r1, r2) = horizontality_residuals(pt, a);
    let scale = (pt.m.transpose() * &a.m).norm() + (pt.n.transpose() * &a.n).norm();
    relative(r1 + r2, scale)
}

pub fn certify_horizontal(pt: &StiefelPoint, a: &LiftPair) -> Result<LiftPair> {
    a.check_base(pt)?;
    let res = relative_horizontality(pt, a.pair());
    if res > HORIZONTAL_TOL {
        return Err(Error::Contract(format!(
            "vector is not horizontal (relative residual {res:.3e})"
        )));
    }
    Ok(a.clone().with_horizontal(true))
}

pub(crate) fn require_horizontal(pt: &StiefelPoint, a: &LiftPair) -> Result<()> {
    certify_horizontal(pt, a).map(|_| ())
}

fn require_total_tangent(pt: &StiefelPoint, a: &FactorPair) -> Result<()> {
    let res = stiefel_tangency(pt, a);
    if res > HORIZONTAL_TOL {
        return Err(Error::Contract(format!(
            "M slot is not tangent to the Stiefel manifold (relative residual {res:.3e})"
        )));
    }
    Ok(())
}

/// `‖(I − MMᵀ)·z·(I − P_N)‖ / ‖z‖`.
pub fn tangency_residual(pt: &StiefelPoint, z: &Mat) -> Result<f64> {
    let (m, n, _) = pt.dims();
    if z.shape() != (m, n) {
        return Err(Error::dims("tangent matrix", (m, n), z.shape()));
    }
    let w = z - &pt.m * (pt.m.transpose() * z);
    let w = &w - (&w * &pt.n) * &pt.gram_n_inv * pt.n.transpose();
    Ok(relative(w.norm(), z.norm()))
}

fn lift_from_products(pt: &StiefelPoint, mtzn: &Mat, zn: &Mat, ztm: &Mat) -> Result<LiftSolutionO> {
    let rhs = mtzn - mtzn.transpose();
    let omega = sylvester_solve(&pt.shifted, &pt.shifted, &rhs)?;
    let s = mtzn - &omega * &pt.shifted;
    let xm = (zn - &pt.m * (&omega + &s)) * &pt.gram_n_inv;
    let xn = ztm + &pt.n * &omega;
    Ok(LiftSolutionO {
        lift: LiftPair::from_pair(pt, FactorPair::new(xm, xn), true),
        omega,
        s,
    })
}

/// Horizontal lift of `z ∈ T_{MNᵀ}M_p`.
///
/// `Ω` solves `Ω(NᵀN+I) + (NᵀN+I)Ω = MᵀzN − NᵀzᵀM`, `S = MᵀzN − Ω(NᵀN+I)`,
/// and `Ẋ_M = zN(NᵀN)⁻¹ − M(Ω+S)(NᵀN)⁻¹`, `Ẋ_N = zᵀM + NΩ`.
pub fn horizontal_lift(pt: &StiefelPoint, z: &Mat) -> Result<LiftSolutionO> {
    let res = tangency_residual(pt, z)?;
    if res > HORIZONTAL_TOL {
        return Err(Error::NotTangent { residual: res });
    }
    let zn = z * &pt.n;
    let ztm = z.transpose() * &pt.m;
    let mtzn = pt.m.transpose() * &zn;
    lift_from_products(pt, &mtzn, &zn, &ztm)
}

/// Horizontal lift of `z = U·Nᵀ + M·Vᵀ` without forming `z`.
pub fn horizontal_lift_factored(pt: &StiefelPoint, u: &Mat, v: &Mat) -> Result<LiftSolutionO> {
    if u.shape() != pt.m.shape() {
        return Err(Error::dims("horizontal_lift_factored (U)", pt.m.shape(), u.shape()));
    }
    if v.shape() != pt.n.shape() {
        return Err(Error::dims("horizontal_lift_factored (V)", pt.n.shape(), v.shape()));
    }
    let vtn = v.transpose() * &pt.n;
    let mtu = pt.m.transpose() * u;
    let zn = u * &pt.gram_n + &pt.m * &vtn;
    let ztm = &pt.n * mtu.transpose() + v;
    let mtzn = &mtu * &pt.gram_n + &vtn;
    lift_from_products(pt, &mtzn, &zn, &ztm)
}

/// The fiber point `(MR, NR)`.
pub fn transport_point(pt: &StiefelPoint, g: &GaugeRotation) -> Result<StiefelPoint> {
    let p = pt.rank();
    if g.r.shape() != (p, p) {
        return Err(Error::dims("gauge", (p, p), g.r.shape()));
    }
    StiefelPoint::with_orth_tol(&pt.m * &g.r, &pt.n * &g.r, pt.orth_tol)
}

/// `(Ẋ_M·R, Ẋ_N·R)` attached to `target = (MR, NR)`.
pub fn fiber_transport(
    pt: &StiefelPoint,
    lift: &LiftPair,
    g: &GaugeRotation,
    target: &StiefelPoint,
) -> Result<LiftPair> {
    require_horizontal(pt, lift)?;
    let dm = (&pt.m * &g.r - &target.m).norm();
    let dn = (&pt.n * &g.r - &target.n).norm();
    if relative(dm, target.m.norm()) > 1e-12 || relative(dn, target.n.norm()) > 1e-12 {
        return Err(Error::Contract("transport target is not the gauge image of the base point".into()));
    }
    Ok(LiftPair::from_pair(target, lift.pair().right_mul(&g.r, &g.r), true))
}

/// Projection onto the horizontal space along the vertical space.
///
/// `Ω` solves `(NᵀN+I)Ω + Ω(NᵀN+I) = ṀᵀM − MᵀṀ + ṄᵀN − NᵀṄ`; the result is
/// `(Ṁ + MΩ, Ṅ + NΩ)`. The input must be tangent to the total space.
pub fn horizontal_project(pt: &StiefelPoint, a: &LiftPair) -> Result<ProjectionSolutionO> {
    a.check_base(pt)?;
    require_total_tangent(pt, a.pair())?;
    horizontal_project_pair(pt, a.pair())
}

pub(crate) fn horizontal_project_pair(pt: &StiefelPoint, a: &FactorPair) -> Result<ProjectionSolutionO> {
    let c = pt.m.transpose() * &a.m + pt.n.transpose() * &a.n;
    let rhs = c.transpose() - &c;
    let omega = sylvester_solve(&pt.shifted, &pt.shifted, &rhs)?;
    let dir = FactorPair::new(&a.m + &pt.m * &omega, &a.n + &pt.n * &omega);
    Ok(ProjectionSolutionO {
        lift: LiftPair::from_pair(pt, dir, true),
        omega,
    })
}

/// Levi-Civita connection of the total space given the field's Euclidean
/// derivative: `(P^St_M(∂y_M), ∂y_N)`.
pub fn connection_from_parts(pt: &StiefelPoint, dy: &FactorPair) -> FactorPair {
    project_pair(&pt.m, dy)
}

/// `∇̄_x Y = P^{St×R}(∂_x Y)`.
pub fn connection_total(pt: &StiefelPoint, x: &LiftPair, y: &dyn VectorField) -> Result<LiftPair> {
    x.check_base(pt)?;
    require_total_tangent(pt, x.pair())?;
    let der = y.derivative(&pt.m, &pt.n, x.pair())?;
    if !der.shape_matches(&pt.m, &pt.n) {
        return Err(Error::dims("vector field", pt.m.shape(), der.m.shape()));
    }
    Ok(LiftPair::from_pair(pt, connection_from_parts(pt, &der), false))
}

/// Horizontal projection of `∇̄_x Y` for horizontal `x` and a horizontal-lift
/// field `Y`.
pub fn connection_quotient(pt: &StiefelPoint, x: &LiftPair, y: &dyn VectorField) -> Result<LiftPair> {
    require_horizontal(pt, x)?;
    let total = connection_total(pt, x, y)?;
    Ok(horizontal_project_pair(pt, total.pair())?.lift)
}

/// `P^{St×R}(G·N, Gᵀ·M)`.
///
/// Like the balanced gradient, the value is re-projected onto the horizontal
/// space to remove rounding-level vertical components.
pub fn lifted_gradient(pt: &StiefelPoint, oracle: &dyn EuclideanOracle) -> Result<LiftPair> {
    let val = gradient_field_stiefel(oracle).value(&pt.m, &pt.n)?;
    Ok(horizontal_project_pair(pt, &project_pair(&pt.m, &val))?.lift)
}

/// Riemannian exponential of the total space for raw factors:
/// `M(1) = [M Ẋ_M]·exp([[A, −S],[I, A]])·I_{2p,p}·exp(−A)` with `A = MᵀẊ_M`,
/// `S = Ẋ_MᵀẊ_M`, and `N(1) = N + Ẋ_N`.
pub fn exp_total_pair(m: &Mat, n: &Mat, dir: &FactorPair) -> Result<FactorPair> {
    let p = m.ncols();
    let a = m.transpose() * &dir.m;
    let s = dir.m.transpose() * &dir.m;
    let mut block = Mat::zeros(2 * p, 2 * p);
    block.view_mut((0, 0), (p, p)).copy_from(&a);
    block.view_mut((0, p), (p, p)).copy_from(&(-s));
    block.view_mut((p, 0), (p, p)).fill_with_identity();
    block.view_mut((p, p), (p, p)).copy_from(&a);
    let e = matrix_exp(&block)?;
    let top = e.view((0, 0), (p, p));
    let bottom = e.view((p, 0), (p, p));
    let tail = matrix_exp(&(-&a))?;
    let m_new = (m * top + &dir.m * bottom) * tail;
    Ok(FactorPair::new(m_new, n + &dir.n))
}

/// Geodesic of the total space through `pt` with velocity `h` (any total
/// tangent vector), evaluated at time 1.
pub fn exp_total(pt: &StiefelPoint, h: &LiftPair) -> Result<FactorPair> {
    h.check_base(pt)?;
    require_total_tangent(pt, h.pair())?;
    exp_total_pair(&pt.m, &pt.n, h.pair())
}

/// Riemannian exponential on the quotient, represented through the
/// horizontal geodesic `t ↦ Exp_{(M,N)}(t·h)`.
///
/// Drift of `M` from orthonormality above [`REORTH_DRIFT`] is repaired by
/// [`reorthonormalize`], which keeps `M·Nᵀ`.
pub fn exp_quotient(pt: &StiefelPoint, h: &LiftPair, t: f64) -> Result<StiefelPoint> {
    require_horizontal(pt, h)?;
    let out = exp_total_pair(&pt.m, &pt.n, &h.pair().scale(t))?;
    let drift = orthonormality_drift(&out.m);
    if drift > DRIFT_WARNING {
        warn!("geodesic factor drifted from orthonormality by {drift:.3e}; re-orthonormalizing");
    }
    let res = if drift > REORTH_DRIFT {
        reorthonormalize(&out.m, &out.n)
    } else {
        StiefelPoint::with_orth_tol(out.m, out.n, pt.orth_tol)
    };
    res.map_err(|e| match e {
        Error::IllConditioned { condition, .. } => Error::RankDeficient {
            what: "geodesic N factor",
            ratio: condition.sqrt().recip(),
        },
        other => other,
    })
}

/// Replaces `M` by the Q factor of its positive-diagonal QR and `N` by `N·Rᵀ`.
pub fn reorthonormalize(m: &Mat, n: &Mat) -> Result<StiefelPoint> {
    let (q, r) = qr_positive(m)?;
    StiefelPoint::new(q, n * r.transpose())
}

/// Field `(M, N) ↦ P^{St×R}_{(M,N)}(Y₀)`: a constant direction projected onto
/// the total tangent space at every point.
#[derive(Clone, Debug)]
pub struct ProjectedConstantField(pub FactorPair);

impl VectorField for ProjectedConstantField {
    fn value(&self, m: &Mat, _n: &Mat) -> Result<FactorPair> {
        Ok(project_pair(m, &self.0))
    }

    fn derivative(&self, m: &Mat, _n: &Mat, dir: &FactorPair) -> Result<FactorPair> {
        let y = &self.0.m;
        let dm = &dir.m * sym_sq(&(m.transpose() * y)) + m * sym_sq(&(dir.m.transpose() * y));
        Ok(FactorPair::new(-dm, Mat::zeros(self.0.n.nrows(), self.0.n.ncols())))
    }
}
