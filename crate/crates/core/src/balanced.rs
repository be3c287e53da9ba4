//! Quotient geometry of the full factor space `R*^{m×p} × R*^{n×p}` under the
//! Gram-scaled metric
//!
//! ```text
//! ḡ((Ṁ,Ṅ), (M̃,Ñ)) = tr((MᵀM)⁻¹ ṀᵀM̃ + (NᵀN)⁻¹ ṄᵀÑ)
//! ```
//!
//! which is invariant along the fibers `{(MR, NR⁻ᵀ) : R ∈ GL(p)}` and so turns
//! `π(M, N) = MNᵀ` into a Riemannian submersion. Horizontal vectors are
//! characterized by `Mᵀ Ẋ_M (MᵀM)⁻¹ = (NᵀN)⁻¹ Ẋ_Nᵀ N`.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::kernels::{relative, spd_condition, spd_inverse, sylvester_solve, sym_sq, Mat};
use crate::objectives::{gradient_field_balanced, EuclideanOracle};
use crate::pair::{FactorPair, FactorPoint, LiftPair, PointId};

/// Largest Gram-matrix condition number accepted for a point.
pub const MAX_GRAM_CONDITION: f64 = 1.0e12;
/// Largest condition number accepted for a gauge transform.
pub const MAX_GAUGE_CONDITION: f64 = 1.0e12;
/// Relative tolerance for horizontality and tangency certificates.
pub const HORIZONTAL_TOL: f64 = 1.0e-8;

/// A point `(M, N)` with both factors of full column rank. Gram matrices and
/// their inverses are computed once at construction.
#[derive(Clone, Debug)]
pub struct BalancedPoint {
    id: PointId,
    m: Mat,
    n: Mat,
    gram_m: Mat,
    gram_n: Mat,
    gram_m_inv: Mat,
    gram_n_inv: Mat,
    rank_tol: f64,
}

impl BalancedPoint {
    pub const DEFAULT_RANK_TOL: f64 = 1.0e-10;

    pub fn new(m: Mat, n: Mat) -> Result<Self> {
        Self::with_rank_tol(m, n, Self::DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(m: Mat, n: Mat, rank_tol: f64) -> Result<Self> {
        let p = m.ncols();
        if p == 0 || m.nrows() < p {
            return Err(Error::dims("BalancedPoint (M)", (p.max(1), p.max(1)), m.shape()));
        }
        if n.ncols() != p || n.nrows() < p {
            return Err(Error::dims("BalancedPoint (N)", (n.nrows().max(p), p), n.shape()));
        }
        if m.iter().chain(n.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("BalancedPoint"));
        }
        let gram_m = sym_sq(&(m.transpose() * &m));
        let gram_n = sym_sq(&(n.transpose() * &n));
        check_gram(&gram_m, "M factor", rank_tol)?;
        check_gram(&gram_n, "N factor", rank_tol)?;
        let gram_m_inv = spd_inverse(&gram_m, "M factor")?;
        let gram_n_inv = spd_inverse(&gram_n, "N factor")?;
        Ok(Self {
            id: PointId::fresh(),
            m,
            n,
            gram_m,
            gram_n,
            gram_m_inv,
            gram_n_inv,
            rank_tol,
        })
    }

    pub fn gram_m(&self) -> &Mat {
        &self.gram_m
    }

    pub fn gram_n(&self) -> &Mat {
        &self.gram_n
    }

    pub fn gram_m_inv(&self) -> &Mat {
        &self.gram_m_inv
    }

    pub fn gram_n_inv(&self) -> &Mat {
        &self.gram_n_inv
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn into_factors(self) -> (Mat, Mat) {
        (self.m, self.n)
    }
}

fn check_gram(g: &Mat, what: &'static str, rank_tol: f64) -> Result<()> {
    let cond = spd_condition(g);
    if !cond.is_finite() || cond.sqrt().recip() <= rank_tol {
        return Err(Error::RankDeficient {
            what,
            ratio: if cond.is_finite() { cond.sqrt().recip() } else { 0.0 },
        });
    }
    if cond > MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned {
            what,
            condition: cond,
            limit: MAX_GRAM_CONDITION,
        });
    }
    Ok(())
}

impl FactorPoint for BalancedPoint {
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

/// A direction `Ṙ` along the fiber.
#[derive(Clone, Debug)]
pub struct FiberDirection(pub Mat);

/// An element `R ∈ GL(p)` acting by `(M, N) ↦ (MR, NR⁻ᵀ)`.
#[derive(Clone, Debug)]
pub struct GaugeTransform {
    r: Mat,
    r_inv_t: Mat,
}

impl GaugeTransform {
    pub fn new(r: Mat) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(Error::dims("GaugeTransform", (r.nrows(), r.nrows()), r.shape()));
        }
        let sv = r.clone().singular_values();
        let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
        if !(cond <= MAX_GAUGE_CONDITION) {
            return Err(Error::Gauge(format!("condition {cond:.3e} exceeds {MAX_GAUGE_CONDITION:.0e}")));
        }
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Gauge("singular gauge".into()))?;
        Ok(Self {
            r_inv_t: r_inv.transpose(),
            r,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            r: Mat::identity(p, p),
            r_inv_t: Mat::identity(p, p),
        }
    }

    pub fn matrix(&self) -> &Mat {
        &self.r
    }

    pub fn inverse_transpose(&self) -> &Mat {
        &self.r_inv_t
    }
}

/// A horizontal lift with the solution `K` of its Sylvester equation.
#[derive(Clone, Debug)]
pub struct LiftSolution {
    pub lift: LiftPair,
    pub k: Mat,
}

/// A horizontal projection with the fiber direction `Ṙ` that was added.
#[derive(Clone, Debug)]
pub struct ProjectionSolution {
    pub lift: LiftPair,
    pub rdot: Mat,
}

fn check_shape(pt: &BalancedPoint, a: &LiftPair) -> Result<()> {
    a.check_base(pt)
}

/// The total-space metric `ḡ`.
pub fn metric_total(pt: &BalancedPoint, a: &LiftPair, b: &LiftPair) -> Result<f64> {
    check_shape(pt, a)?;
    check_shape(pt, b)?;
    Ok(metric_pair(pt, a.pair(), b.pair()))
}

/// `ḡ` on raw pairs at `pt`.
pub fn metric_pair(pt: &BalancedPoint, a: &FactorPair, b: &FactorPair) -> f64 {
    (&a.m * &pt.gram_m_inv).dot(&b.m) + (&a.n * &pt.gram_n_inv).dot(&b.n)
}

/// `(M·Ṙ, −N·Ṙᵀ)`.
pub fn vertical_vector(pt: &BalancedPoint, d: &FiberDirection) -> Result<LiftPair> {
    let p = pt.rank();
    if d.0.shape() != (p, p) {
        return Err(Error::dims("vertical_vector", (p, p), d.0.shape()));
    }
    let dir = FactorPair::new(&pt.m * &d.0, -(&pt.n * d.0.transpose()));
    Ok(LiftPair::from_pair(pt, dir, false))
}

fn horizontality_terms(pt: &BalancedPoint, a: &FactorPair) -> (Mat, Mat) {
    let left = pt.m.transpose() * &a.m * &pt.gram_m_inv;
    let right = &pt.gram_n_inv * a.n.transpose() * &pt.n;
    (left, right)
}

/// `‖Mᵀaₘ(MᵀM)⁻¹ − (NᵀN)⁻¹aₙᵀN‖_F`, zero exactly on the horizontal space.
pub fn horizontality_residual(pt: &BalancedPoint, a: &LiftPair) -> f64 {
    let (l, r) = horizontality_terms(pt, a.pair());
    (l - r).norm()
}

/// Horizontality residual relative to the size of its two terms.
pub fn relative_horizontality(pt: &BalancedPoint, a: &FactorPair) -> f64 {
    let (l, r) = horizontality_terms(pt, a);
    relative((&l - &r).norm(), l.norm() + r.norm())
}

/// Validates `a` as horizontal at `pt` and sets its certificate.
pub fn certify_horizontal(pt: &BalancedPoint, a: &LiftPair) -> Result<LiftPair> {
    a.check_base(pt)?;
    let res = relative_horizontality(pt, a.pair());
    if res > HORIZONTAL_TOL {
        return Err(Error::Contract(format!(
            "vector is not horizontal (relative residual {res:.3e})"
        )));
    }
    Ok(a.clone().with_horizontal(true))
}

pub(crate) fn require_horizontal(pt: &BalancedPoint, a: &LiftPair) -> Result<()> {
    certify_horizontal(pt, a).map(|_| ())
}

/// `Dπ(M, N)[a] = aₘNᵀ + M·aₙᵀ`.
pub fn dpi(pt: &BalancedPoint, a: &LiftPair) -> Result<Mat> {
    a.check_base(pt)?;
    Ok(a.xm() * pt.n.transpose() + &pt.m * a.xn().transpose())
}

/// `‖(I − P_M)·z·(I − P_N)‖ / ‖z‖` with the projectors onto the column
/// spaces of `M` and `N`.
pub fn tangency_residual(pt: &BalancedPoint, z: &Mat) -> Result<f64> {
    let (m, n, _) = pt.dims();
    if z.shape() != (m, n) {
        return Err(Error::dims("tangent matrix", (m, n), z.shape()));
    }
    let w = z - &pt.m * (&pt.gram_m_inv * (pt.m.transpose() * z));
    let w = &w - (&w * &pt.n) * &pt.gram_n_inv * pt.n.transpose();
    Ok(relative(w.norm(), z.norm()))
}

fn lift_from_products(pt: &BalancedPoint, mtzn: &Mat, zn: &Mat, ztm: &Mat) -> Result<LiftSolution> {
    let a = &pt.gram_m * &pt.gram_n;
    let k = sylvester_solve(&a, &a, mtzn)?;
    let xm = (zn - &pt.m * (&pt.gram_n * &k)) * &pt.gram_n_inv;
    let xn = (ztm - &pt.n * (&pt.gram_m * k.transpose())) * &pt.gram_m_inv;
    Ok(LiftSolution {
        lift: LiftPair::from_pair(pt, FactorPair::new(xm, xn), true),
        k,
    })
}

/// Horizontal lift of a tangent vector `z ∈ T_{MNᵀ}M_p`.
///
/// `K` solves `MᵀzN = MᵀM NᵀN K + K MᵀM NᵀN`, and
/// `Ẋ_M = (zN − M NᵀN K)(NᵀN)⁻¹`, `Ẋ_N = (zᵀM − N MᵀM Kᵀ)(MᵀM)⁻¹`.
pub fn horizontal_lift(pt: &BalancedPoint, z: &Mat) -> Result<LiftSolution> {
    let res = tangency_residual(pt, z)?;
    if res > HORIZONTAL_TOL {
        return Err(Error::NotTangent { residual: res });
    }
    let zn = z * &pt.n;
    let ztm = z.transpose() * &pt.m;
    let mtzn = pt.m.transpose() * &zn;
    lift_from_products(pt, &mtzn, &zn, &ztm)
}

/// Horizontal lift of the tangent vector `z = U·Nᵀ + M·Vᵀ`, without forming
/// the `m×n` matrix. Costs `O(p²(m+n) + p⁶)`.
pub fn horizontal_lift_factored(pt: &BalancedPoint, u: &Mat, v: &Mat) -> Result<LiftSolution> {
    if u.shape() != pt.m.shape() {
        return Err(Error::dims("horizontal_lift_factored (U)", pt.m.shape(), u.shape()));
    }
    if v.shape() != pt.n.shape() {
        return Err(Error::dims("horizontal_lift_factored (V)", pt.n.shape(), v.shape()));
    }
    let vtn = v.transpose() * &pt.n;
    let utm = u.transpose() * &pt.m;
    let zn = u * &pt.gram_n + &pt.m * &vtn;
    let ztm = &pt.n * &utm + v * &pt.gram_m;
    let mtzn = utm.transpose() * &pt.gram_n + &pt.gram_m * &vtn;
    lift_from_products(pt, &mtzn, &zn, &ztm)
}

/// The fiber point `(MR, NR⁻ᵀ)`.
pub fn transport_point(pt: &BalancedPoint, g: &GaugeTransform) -> Result<BalancedPoint> {
    let p = pt.rank();
    if g.r.shape() != (p, p) {
        return Err(Error::dims("gauge", (p, p), g.r.shape()));
    }
    BalancedPoint::with_rank_tol(&pt.m * &g.r, &pt.n * &g.r_inv_t, pt.rank_tol)
}

/// Moves a horizontal lift at `pt` to the fiber point `target = (MR, NR⁻ᵀ)`:
/// `(Ẋ_M·R, Ẋ_N·R⁻ᵀ)`.
pub fn fiber_transport(
    pt: &BalancedPoint,
    lift: &LiftPair,
    g: &GaugeTransform,
    target: &BalancedPoint,
) -> Result<LiftPair> {
    require_horizontal(pt, lift)?;
    let dm = (&pt.m * &g.r - &target.m).norm();
    let dn = (&pt.n * &g.r_inv_t - &target.n).norm();
    if relative(dm, target.m.norm()) > 1e-12 || relative(dn, target.n.norm()) > 1e-12 {
        return Err(Error::Contract("transport target is not the gauge image of the base point".into()));
    }
    let dir = lift.pair().right_mul(&g.r, &g.r_inv_t);
    Ok(LiftPair::from_pair(target, dir, true))
}

/// Projection onto the horizontal space along the vertical space.
///
/// `Ṙ` solves `NᵀN MᵀM Ṙ + Ṙ NᵀN MᵀM = −NᵀN Mᵀaₘ + aₙᵀN MᵀM` and the result is
/// `(aₘ + MṘ, aₙ − NṘᵀ)`.
pub fn horizontal_project(pt: &BalancedPoint, a: &LiftPair) -> Result<ProjectionSolution> {
    a.check_base(pt)?;
    horizontal_project_pair(pt, a.pair())
}

pub(crate) fn horizontal_project_pair(pt: &BalancedPoint, a: &FactorPair) -> Result<ProjectionSolution> {
    let op = &pt.gram_n * &pt.gram_m;
    let rhs = -(&pt.gram_n * (pt.m.transpose() * &a.m)) + (a.n.transpose() * &pt.n) * &pt.gram_m;
    let rdot = sylvester_solve(&op, &op, &rhs)?;
    let dir = FactorPair::new(&a.m + &pt.m * &rdot, &a.n - &pt.n * rdot.transpose());
    Ok(ProjectionSolution {
        lift: LiftPair::from_pair(pt, dir, true),
        rdot,
    })
}

/// Levi-Civita connection of `(total space, ḡ)` given the field's value `y`
/// and its Euclidean derivative `dy` along `x`.
pub fn connection_from_parts(pt: &BalancedPoint, x: &FactorPair, y: &FactorPair, dy: &FactorPair) -> FactorPair {
    let slot = |f: &Mat, gi: &Mat, xs: &Mat, ys: &Mat, dys: &Mat| -> Mat {
        let sx = sym_sq(&(xs.transpose() * f));
        let sy = sym_sq(&(ys.transpose() * f));
        let sxy = sym_sq(&(xs.transpose() * ys));
        dys - ys * (gi * sx) - xs * (gi * sy) + f * (gi * sxy)
    };
    FactorPair::new(
        slot(&pt.m, &pt.gram_m_inv, &x.m, &y.m, &dy.m),
        slot(&pt.n, &pt.gram_n_inv, &x.n, &y.n, &dy.n),
    )
}

/// `∇̄_x Y` on the total space.
pub fn connection_total(pt: &BalancedPoint, x: &LiftPair, y: &dyn VectorField) -> Result<LiftPair> {
    x.check_base(pt)?;
    let val = y.value(&pt.m, &pt.n)?;
    let der = y.derivative(&pt.m, &pt.n, x.pair())?;
    check_field_shapes(pt, &val, &der)?;
    Ok(LiftPair::from_pair(pt, connection_from_parts(pt, x.pair(), &val, &der), false))
}

fn check_field_shapes(pt: &BalancedPoint, val: &FactorPair, der: &FactorPair) -> Result<()> {
    if !val.shape_matches(&pt.m, &pt.n) || !der.shape_matches(&pt.m, &pt.n) {
        return Err(Error::dims("vector field", pt.m.shape(), val.m.shape()));
    }
    Ok(())
}

/// Horizontal lift of the quotient connection `∇_X Y`: the horizontal
/// projection of `∇̄_x Y`. `x` must be horizontal and `Y` a horizontal-lift
/// field.
pub fn connection_quotient(pt: &BalancedPoint, x: &LiftPair, y: &dyn VectorField) -> Result<LiftPair> {
    require_horizontal(pt, x)?;
    let total = connection_total(pt, x, y)?;
    Ok(horizontal_project(pt, &total)?.lift)
}

/// `(∂_M f̄ · MᵀM, ∂_N f̄ · NᵀN)` with `∂_M f̄ = G·N`, `∂_N f̄ = Gᵀ·M`.
///
/// The value is horizontal in exact arithmetic; it is passed through the
/// horizontal projection so that rounding in `G·N` and `Gᵀ·M` (which need not
/// be consistent with each other near a critical point) leaves no vertical
/// component.
pub fn lifted_gradient(pt: &BalancedPoint, oracle: &dyn EuclideanOracle) -> Result<LiftPair> {
    let val = gradient_field_balanced(oracle).value(&pt.m, &pt.n)?;
    Ok(horizontal_project_pair(pt, &val)?.lift)
}

/// The lift obtained under the plain Euclidean metric on the factor space:
/// `K` solves `MᵀM K + K NᵀN = MᵀzN`, `Ẋ_M = (zN − MK)(NᵀN)⁻¹`,
/// `Ẋ_N = (zᵀM − NKᵀ)(MᵀM)⁻¹`. That metric is not invariant along the fibers,
/// so these lifts do not define a metric on the quotient.
pub fn euclidean_horizontal_lift(pt: &BalancedPoint, z: &Mat) -> Result<LiftPair> {
    let res = tangency_residual(pt, z)?;
    if res > HORIZONTAL_TOL {
        return Err(Error::NotTangent { residual: res });
    }
    let zn = z * &pt.n;
    let ztm = z.transpose() * &pt.m;
    let k = sylvester_solve(&pt.gram_m, &pt.gram_n, &(pt.m.transpose() * &zn))?;
    let xm = (zn - &pt.m * &k) * &pt.gram_n_inv;
    let xn = (ztm - &pt.n * k.transpose()) * &pt.gram_m_inv;
    Ok(LiftPair::from_pair(pt, FactorPair::new(xm, xn), false))
}

/// Plain trace inner product `tr(aₘᵀbₘ) + tr(aₙᵀbₙ)`.
pub fn euclidean_metric(a: &LiftPair, b: &LiftPair) -> f64 {
    a.pair().dot(b.pair())
}

/// `(M + Ẋ_M, N + Ẋ_N)`; fails if either factor loses rank.
pub fn retract(pt: &BalancedPoint, h: &LiftPair) -> Result<BalancedPoint> {
    require_horizontal(pt, h)?;
    BalancedPoint::with_rank_tol(&pt.m + h.xm(), &pt.n + h.xn(), pt.rank_tol).map_err(|e| match e {
        Error::IllConditioned { condition, .. } => Error::RankDeficient {
            what: "retracted factor",
            ratio: condition.sqrt().recip(),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::objectives::ApproximationObjective;
    use crate::random::Sampler;

    fn point(s: &mut Sampler, m: usize, n: usize, p: usize) -> BalancedPoint {
        BalancedPoint::new(s.factor(m, p), s.factor(n, p)).unwrap()
    }

    #[test]
    fn rejects_rank_deficient_and_ill_conditioned_factors() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let n = Mat::identity(3, 2);
        assert!(BalancedPoint::new(m, n.clone()).is_err());
        let m = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1e-7, 0.0, 0.0]);
        assert!(matches!(BalancedPoint::new(m, n), Err(Error::IllConditioned { .. })));
        assert!(BalancedPoint::new(Mat::identity(3, 2), Mat::identity(4, 3)).is_err());
    }

    #[test]
    fn orthonormal_metric_is_euclidean() {
        let mut s = Sampler::new(20);
        let pt = BalancedPoint::new(s.orthonormal(6, 2), s.orthonormal(5, 2)).unwrap();
        let a = LiftPair::ambient(&pt, s.gaussian(6, 2), s.gaussian(5, 2)).unwrap();
        let b = LiftPair::ambient(&pt, s.gaussian(6, 2), s.gaussian(5, 2)).unwrap();
        let g = metric_total(&pt, &a, &b).unwrap();
        assert!((g - a.pair().dot(b.pair())).abs() < 1e-13);
        assert_eq!(metric_total(&pt, &LiftPair::zero(&pt), &LiftPair::zero(&pt)).unwrap(), 0.0);
        assert!(metric_total(&pt, &a, &a).unwrap() > 0.0);
    }

    #[test]
    fn mismatched_base_is_a_contract_error() {
        let mut s = Sampler::new(21);
        let p1 = point(&mut s, 5, 4, 2);
        let p2 = point(&mut s, 5, 4, 2);
        let a = LiftPair::zero(&p1);
        assert!(matches!(metric_total(&p2, &a, &a), Err(Error::Contract(_))));
    }

    #[test]
    fn vertical_vectors_are_killed_by_dpi() {
        let mut s = Sampler::new(22);
        let pt = point(&mut s, 6, 5, 3);
        let zero = vertical_vector(&pt, &FiberDirection(Mat::zeros(3, 3))).unwrap();
        assert_eq!(zero.euclidean_norm(), 0.0);
        let v = vertical_vector(&pt, &FiberDirection(s.gaussian(3, 3))).unwrap();
        assert!(dpi(&pt, &v).unwrap().norm() < 1e-13);
        assert!(horizontality_residual(&pt, &v) > 1e-3);
        assert_eq!(horizontality_residual(&pt, &LiftPair::zero(&pt)), 0.0);
    }

    #[test]
    fn lift_of_zero_is_zero() {
        let mut s = Sampler::new(23);
        let pt = point(&mut s, 5, 4, 2);
        let sol = horizontal_lift(&pt, &Mat::zeros(5, 4)).unwrap();
        assert_eq!(sol.k.norm(), 0.0);
        assert_eq!(sol.lift.euclidean_norm(), 0.0);
    }

    #[test]
    fn lift_with_orthonormal_factors_has_closed_form() {
        let mut s = Sampler::new(24);
        let (m, n) = (s.orthonormal(6, 2), s.orthonormal(5, 2));
        let pt = BalancedPoint::new(m.clone(), n.clone()).unwrap();
        let z = s.tangent_at(&m, &n);
        let sol = horizontal_lift(&pt, &z).unwrap();
        let k = m.transpose() * &z * &n * 0.5;
        assert!((&sol.k - &k).norm() < 1e-13);
        let xm = &z * &n - &m * &k;
        let xn = z.transpose() * &m - &n * k.transpose();
        assert!((sol.lift.xm() - xm).norm() < 1e-13);
        assert!((sol.lift.xn() - xn).norm() < 1e-13);
    }

    #[test]
    fn lift_roundtrips_through_dpi() {
        let mut s = Sampler::new(25);
        for _ in 0..10 {
            let pt = point(&mut s, 7, 5, 3);
            let z = s.tangent_at(pt.m(), pt.n());
            let sol = horizontal_lift(&pt, &z).unwrap();
            assert!((dpi(&pt, &sol.lift).unwrap() - &z).norm() <= 1e-10 * z.norm());
            assert!(horizontality_residual(&pt, &sol.lift) <= 1e-10 * z.norm());
        }
    }

    #[test]
    fn lift_rejects_non_tangent_matrices() {
        let mut s = Sampler::new(26);
        let pt = point(&mut s, 6, 5, 1);
        let z = s.gaussian(6, 5);
        assert!(matches!(horizontal_lift(&pt, &z), Err(Error::NotTangent { .. })));
    }

    #[test]
    fn factored_lift_agrees_with_dense_lift() {
        let mut s = Sampler::new(27);
        let pt = point(&mut s, 8, 6, 3);
        let u = s.gaussian(8, 3);
        let v = s.gaussian(6, 3);
        let z = &u * pt.n().transpose() + pt.m() * v.transpose();
        let dense = horizontal_lift(&pt, &z).unwrap();
        let fact = horizontal_lift_factored(&pt, &u, &v).unwrap();
        assert!(dense.lift.sub(&fact.lift).euclidean_norm() <= 1e-12 * dense.lift.euclidean_norm());
    }

    #[test]
    fn projection_fixes_horizontal_and_kills_vertical() {
        let mut s = Sampler::new(28);
        let pt = point(&mut s, 6, 5, 2);
        let z = s.tangent_at(pt.m(), pt.n());
        let h = horizontal_lift(&pt, &z).unwrap().lift;
        let proj = horizontal_project(&pt, &h).unwrap();
        assert!(proj.rdot.norm() <= 1e-12 * h.euclidean_norm());
        assert!(proj.lift.sub(&h).euclidean_norm() <= 1e-12 * h.euclidean_norm());

        let v = vertical_vector(&pt, &FiberDirection(s.gaussian(2, 2))).unwrap();
        let out = horizontal_project(&pt, &v).unwrap();
        assert!(out.lift.euclidean_norm() <= 1e-12 * v.euclidean_norm());
    }

    #[test]
    fn transport_by_identity_is_identity() {
        let mut s = Sampler::new(29);
        let pt = point(&mut s, 5, 4, 2);
        let h = horizontal_lift(&pt, &s.tangent_at(pt.m(), pt.n())).unwrap().lift;
        let g = GaugeTransform::identity(2);
        let target = transport_point(&pt, &g).unwrap();
        let moved = fiber_transport(&pt, &h, &g, &target).unwrap();
        assert_eq!(moved.pair(), h.pair());
    }

    #[test]
    fn ill_conditioned_gauge_is_rejected() {
        let r = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(GaugeTransform::new(r), Err(Error::Gauge(_))));
    }

    #[test]
    fn constant_field_connection_reduces_with_skew_products() {
        // With orthonormal M and x_MᵀM, y_MᵀM skew, only M·sym(x_Mᵀy_M) survives.
        let mut s = Sampler::new(30);
        let (m, n) = (s.orthonormal(6, 2), s.orthonormal(5, 2));
        let pt = BalancedPoint::new(m.clone(), n.clone()).unwrap();
        let mperp = |s: &mut Sampler| {
            let g = s.gaussian(6, 2);
            &g - &m * (m.transpose() * &g)
        };
        let xm = &m * s.skew(2) + mperp(&mut s);
        let ym = &m * s.skew(2) + mperp(&mut s);
        let zero_n = Mat::zeros(5, 2);
        let x = LiftPair::ambient(&pt, xm.clone(), zero_n.clone()).unwrap();
        let y = ConstantField(FactorPair::new(ym.clone(), zero_n));
        let out = connection_total(&pt, &x, &y).unwrap();
        let expected = &m * sym_sq(&(xm.transpose() * &ym));
        assert!((out.xm() - expected).norm() < 1e-13);
    }

    #[test]
    fn connection_of_constant_fields_is_symmetric() {
        let mut s = Sampler::new(31);
        let pt = point(&mut s, 6, 5, 2);
        let a = FactorPair::new(s.gaussian(6, 2), s.gaussian(5, 2));
        let b = FactorPair::new(s.gaussian(6, 2), s.gaussian(5, 2));
        let la = LiftPair::ambient(&pt, a.m.clone(), a.n.clone()).unwrap();
        let lb = LiftPair::ambient(&pt, b.m.clone(), b.n.clone()).unwrap();
        let ab = connection_total(&pt, &la, &ConstantField(b)).unwrap();
        let ba = connection_total(&pt, &lb, &ConstantField(a)).unwrap();
        assert!(ab.sub(&ba).euclidean_norm() < 1e-13);
    }

    #[test]
    fn lifted_gradient_with_orthonormal_factors() {
        let mut s = Sampler::new(32);
        let (m, n) = (s.orthonormal(6, 2), s.orthonormal(5, 2));
        let pt = BalancedPoint::new(m.clone(), n.clone()).unwrap();
        let a = s.gaussian(6, 5);
        let o = ApproximationObjective::new(a.clone()).unwrap();
        let g = lifted_gradient(&pt, &o).unwrap();
        let r = &m * n.transpose() - &a;
        assert!((g.xm() - &r * &n).norm() < 1e-12);
        assert!((g.xn() - r.transpose() * &m).norm() < 1e-12);
        assert!(relative_horizontality(&pt, g.pair()) < 1e-12);
    }

    #[test]
    fn retraction_of_zero_keeps_product() {
        let mut s = Sampler::new(33);
        let pt = point(&mut s, 5, 4, 2);
        let q = retract(&pt, &LiftPair::zero(&pt)).unwrap();
        assert!((q.product() - pt.product()).norm() < 1e-14);
    }

    #[test]
    fn retraction_reports_rank_loss() {
        let mut s = Sampler::new(34);
        let pt = point(&mut s, 5, 4, 1);
        // Horizontal step taking M to zero: Ẋ = (−M, −N) is horizontal (scaling).
        let h = LiftPair::ambient(&pt, -pt.m().clone(), -pt.n().clone()).unwrap();
        let h = certify_horizontal(&pt, &h).unwrap();
        assert!(matches!(retract(&pt, &h), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn euclidean_lift_of_zero_and_roundtrip() {
        let mut s = Sampler::new(35);
        let pt = point(&mut s, 6, 5, 2);
        assert_eq!(euclidean_horizontal_lift(&pt, &Mat::zeros(6, 5)).unwrap().euclidean_norm(), 0.0);
        let z = s.tangent_at(pt.m(), pt.n());
        let l = euclidean_horizontal_lift(&pt, &z).unwrap();
        assert!((dpi(&pt, &l).unwrap() - &z).norm() <= 1e-10 * z.norm());
    }
}
