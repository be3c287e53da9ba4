//! Dense small-matrix primitives shared by both quotient geometries.
//!
//! Everything here works on `p×p` or `2p×2p` matrices except [`qr_positive`],
//! which factors a tall `m×p` factor. All functions are pure.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Absolute floor applied to every relative tolerance.
pub const ABS_FLOOR: f64 = 1.0e-14;

/// Relative size of `err` against `scale`, with [`ABS_FLOOR`] guarding
/// zero-sized scales.
#[inline]
pub fn relative(err: f64, scale: f64) -> f64 {
    err / scale.max(ABS_FLOOR)
}

fn require_square(op: &'static str, z: &Mat) -> Result<()> {
    if z.nrows() != z.ncols() || z.nrows() == 0 {
        return Err(Error::dims(op, (z.nrows(), z.nrows()), z.shape()));
    }
    Ok(())
}

/// `½(Z + Zᵀ)`.
pub fn sym(z: &Mat) -> Result<Mat> {
    require_square("sym", z)?;
    Ok((z + z.transpose()) * 0.5)
}

/// `½(Z − Zᵀ)`.
pub fn skew(z: &Mat) -> Result<Mat> {
    require_square("skew", z)?;
    Ok((z - z.transpose()) * 0.5)
}

/// Unchecked symmetric part, for internal call sites whose shapes are already
/// guaranteed square.
#[inline]
pub(crate) fn sym_sq(z: &Mat) -> Mat {
    debug_assert_eq!(z.nrows(), z.ncols());
    (z + z.transpose()) * 0.5
}

#[inline]
pub(crate) fn skew_sq(z: &Mat) -> Mat {
    debug_assert_eq!(z.nrows(), z.ncols());
    (z - z.transpose()) * 0.5
}

/// Solves `A·K + K·B = C` for square `A`, `B`, `C` of equal size.
///
/// The system is vectorized as `(I⊗A + Bᵀ⊗I)·vec(K) = vec(C)` and solved with
/// a fully pivoted LU, followed by one step of iterative refinement. The
/// returned solution satisfies
/// `‖A·K + K·B − C‖_F ≤ 1e-10·(‖A‖_F + ‖B‖_F)·‖K‖_F` (plus the absolute floor),
/// otherwise [`Error::SylvesterUnsolvable`] is returned.
pub fn sylvester_solve(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    require_square("sylvester_solve(A)", a)?;
    let p = a.nrows();
    if b.shape() != (p, p) {
        return Err(Error::dims("sylvester_solve(B)", (p, p), b.shape()));
    }
    if c.shape() != (p, p) {
        return Err(Error::dims("sylvester_solve(C)", (p, p), c.shape()));
    }

    let q = p * p;
    let mut t = Mat::zeros(q, q);
    for j in 0..p {
        for i in 0..p {
            let row = i + j * p;
            for k in 0..p {
                t[(row, k + j * p)] += a[(i, k)];
                t[(row, i + k * p)] += b[(k, j)];
            }
        }
    }

    let lu = t.clone().full_piv_lu();
    let u = lu.u();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
    for i in 0..q {
        let d = u[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if !(dmin > 1.0e-14 * dmax) {
        return Err(Error::SylvesterUnsolvable {
            condition: condition_estimate(&t),
        });
    }

    let rhs = Mat::from_column_slice(q, 1, c.as_slice());
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SylvesterUnsolvable {
            condition: condition_estimate(&t),
        })?;
    let r = &rhs - &t * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }

    let k = Mat::from_column_slice(p, p, x.as_slice());
    let residual = (a * &k + &k * b - c).norm();
    let bound = 1.0e-10 * (a.norm() + b.norm()) * k.norm() + ABS_FLOOR;
    if !residual.is_finite() || residual > bound {
        return Err(Error::SylvesterUnsolvable {
            condition: condition_estimate(&t),
        });
    }
    Ok(k)
}

fn condition_estimate(t: &Mat) -> f64 {
    let sv = t.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

// Padé(13) numerator coefficients; the denominator uses the same values with
// alternating signs.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(z: &Mat) -> f64 {
    z.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Padé(13) kernel.
pub fn matrix_exp(z: &Mat) -> Result<Mat> {
    require_square("matrix_exp", z)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix_exp"));
    }
    let n = z.nrows();
    let nrm = norm1(z);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = z * 2f64.powi(-s);

    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::NonFinite("matrix_exp Padé denominator"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Thin QR factorization `M = Q·R` with `diag(R) > 0`, which makes it unique.
///
/// Fails with [`Error::RankDeficient`] when the smallest diagonal entry of `R`
/// falls below `1e-12·‖M‖_F`.
pub fn qr_positive(m: &Mat) -> Result<(Mat, Mat)> {
    let (rows, p) = m.shape();
    if rows < p || p == 0 {
        return Err(Error::dims("qr_positive", (p.max(rows), p), m.shape()));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = m.norm();
    let mut dmin = f64::INFINITY;
    for i in 0..p {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
        dmin = dmin.min(r[(i, i)]);
    }
    if !(dmin > 1.0e-12 * scale) {
        return Err(Error::RankDeficient {
            what: "QR factor",
            ratio: relative(dmin, scale),
        });
    }
    Ok((q, r))
}

/// Condition number (λ_max/λ_min) of a symmetric positive semidefinite matrix.
pub fn spd_condition(g: &Mat) -> f64 {
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub(crate) fn spd_inverse(g: &Mat, what: &'static str) -> Result<Mat> {
    let chol = g.clone().cholesky().ok_or(Error::RankDeficient { what, ratio: 0.0 })?;
    Ok(sym_sq(&chol.inverse()))
}

/// Trace inner product `⟨A, B⟩ = trace(AᵀB)`.
#[inline]
pub fn frob_dot(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// The `2p×p` matrix `[I_p; 0]`.
pub fn stacked_identity(p: usize) -> Mat {
    let mut e = Mat::zeros(2 * p, p);
    for i in 0..p {
        e[(i, i)] = 1.0;
    }
    e
}

/// Leading `p` singular triplets `(U, σ, V)` of `a`, with `σ` decreasing.
pub fn truncated_svd(a: &Mat, p: usize) -> Result<(Mat, Vec<f64>, Mat)> {
    let k = a.nrows().min(a.ncols());
    if p == 0 || p > k {
        return Err(Error::Contract(format!("rank {p} outside 1..={k} for a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("truncated_svd"));
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::NonFinite("truncated_svd")),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let order = &order[..p];
    let uu = Mat::from_fn(a.nrows(), p, |r, c| u[(r, order[c])]);
    let vv = Mat::from_fn(a.ncols(), p, |r, c| vt[(order[c], r)]);
    let sig = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((uu, sig, vv))
}

/// Best rank-`p` approximation of `a` in the Frobenius norm.
pub fn rank_p_approximation(a: &Mat, p: usize) -> Result<Mat> {
    let (u, s, v) = truncated_svd(a, p)?;
    let us = Mat::from_fn(u.nrows(), p, |r, c| u[(r, c)] * s[c]);
    Ok(us * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::Sampler;

    /// Kronecker assembly written out independently of the solver: column-major
    /// `vec`, `kron(I, A) + kron(Bᵀ, I)`, solved by SVD.
    fn kron_oracle(a: &Mat, b: &Mat, c: &Mat) -> Mat {
        let p = a.nrows();
        let kron = |x: &Mat, y: &Mat| {
            let (xr, xc) = x.shape();
            let (yr, yc) = y.shape();
            Mat::from_fn(xr * yr, xc * yc, |i, j| x[(i / yr, j / yc)] * y[(i % yr, j % yc)])
        };
        let id = Mat::identity(p, p);
        let t = kron(&id, a) + kron(&b.transpose(), &id);
        let rhs = Mat::from_column_slice(p * p, 1, c.as_slice());
        let x = t.svd(true, true).solve(&rhs, 1e-300).unwrap();
        Mat::from_column_slice(p, p, x.as_slice())
    }

    /// Taylor series on a heavily scaled argument, then repeated squaring.
    fn taylor_exp(z: &Mat) -> Mat {
        let n = z.nrows();
        let s = (z.norm() / 0.5).log2().ceil().max(0.0) as i32;
        let a = z / 2f64.powi(s);
        let mut term = Mat::identity(n, n);
        let mut sum = Mat::identity(n, n);
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn sym_and_skew_examples() {
        let i3 = Mat::identity(3, 3);
        assert_eq!(sym(&i3).unwrap(), i3);
        assert_eq!(skew(&i3).unwrap(), Mat::zeros(3, 3));
        let z = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(sym(&z).unwrap(), Mat::from_row_slice(2, 2, &[1.0, 2.5, 2.5, 4.0]));
        let w = Mat::from_row_slice(2, 2, &[0.0, -1.5, 1.5, 0.0]);
        assert_eq!(sym(&w).unwrap(), Mat::zeros(2, 2));
        assert_eq!(skew(&w).unwrap(), w);
        assert!(matches!(sym(&Mat::zeros(2, 3)), Err(Error::Dimension { .. })));
        assert!(matches!(skew(&Mat::zeros(3, 2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sym_plus_skew_recovers_input() {
        let mut s = Sampler::new(1);
        let z = s.gaussian(4, 4);
        let back = sym(&z).unwrap() + skew(&z).unwrap();
        assert!((back - &z).norm() <= 1e-15 * z.norm());
    }

    #[test]
    fn sylvester_identity_and_scalar() {
        let mut s = Sampler::new(2);
        let c = s.gaussian(3, 3);
        let id = Mat::identity(3, 3);
        let k = sylvester_solve(&id, &id, &c).unwrap();
        assert!((k - &c * 0.5).norm() < 1e-15);

        let a = Mat::from_element(1, 1, 1.5);
        let b = Mat::from_element(1, 1, 2.5);
        let c = Mat::from_element(1, 1, 8.0);
        assert!((sylvester_solve(&a, &b, &c).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sylvester_matches_kronecker_oracle() {
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            let (ga, gb) = (s.spd(3), s.spd(3));
            let (gc, gd) = (s.spd(3), s.spd(3));
            let a = &ga * &gb;
            let b = &gc * &gd;
            let c = s.gaussian(3, 3);
            let k = sylvester_solve(&a, &b, &c).unwrap();
            let oracle = kron_oracle(&a, &b, &c);
            assert!((&k - &oracle).norm() <= 1e-10 * oracle.norm());
        }
    }

    #[test]
    fn sylvester_rejects_spectral_overlap() {
        let a = Mat::identity(2, 2);
        let b = -Mat::identity(2, 2);
        let c = Mat::identity(2, 2);
        assert!(matches!(
            sylvester_solve(&a, &b, &c),
            Err(Error::SylvesterUnsolvable { .. })
        ));
        assert!(matches!(
            sylvester_solve(&a, &Mat::identity(3, 3), &c),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn sylvester_skew_rhs_gives_skew_solution() {
        let mut s = Sampler::new(4);
        for _ in 0..50 {
            let a = s.spd(4) + Mat::identity(4, 4);
            let c = s.skew(4);
            let om = sylvester_solve(&a, &a, &c).unwrap();
            assert!((&om + om.transpose()).norm() <= 1e-10 * om.norm().max(1.0));
        }
    }

    #[test]
    fn exp_trivial_cases() {
        let z = Mat::zeros(3, 3);
        assert_eq!(matrix_exp(&z).unwrap(), Mat::identity(3, 3));
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, 3.0]));
        let e = matrix_exp(&d).unwrap();
        for (i, v) in [-1.0f64, 0.5, 3.0].iter().enumerate() {
            assert!((e[(i, i)] - v.exp()).abs() <= 1e-14 * v.exp());
        }
        assert!(e.norm() - e.diagonal().norm() < 1e-15);
    }

    #[test]
    fn exp_rotation_matches_taylor_oracle() {
        for &theta in &[0.1, 1.0, 2.5, 7.0] {
            let z = Mat::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
            let e = matrix_exp(&z).unwrap();
            let oracle = taylor_exp(&z);
            assert!((&e - &oracle).norm() <= 1e-12 * oracle.norm());
            let rot = Mat::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            assert!((&e - rot).norm() <= 1e-12);
        }
    }

    #[test]
    fn exp_matches_taylor_on_random_inputs() {
        let mut s = Sampler::new(5);
        for _ in 0..20 {
            let mut z = s.gaussian(6, 6);
            let target = 10.0 * s.uniform();
            z *= target / z.norm();
            let e = matrix_exp(&z).unwrap();
            let oracle = taylor_exp(&z);
            assert!((&e - &oracle).norm() <= 1e-12 * oracle.norm());
        }
    }

    #[test]
    fn qr_positive_examples() {
        let m = Mat::from_column_slice(3, 1, &[2.0, 0.0, 0.0]);
        let (q, r) = qr_positive(&m).unwrap();
        assert!((q - Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).norm() < 1e-15);
        assert!((r[(0, 0)] - 2.0).abs() < 1e-15);

        let mut s = Sampler::new(6);
        let m = s.gaussian(7, 3);
        let (q, r) = qr_positive(&m).unwrap();
        assert!((&q * &r - &m).norm() <= 1e-12 * m.norm());
        assert!((q.transpose() * &q - Mat::identity(3, 3)).norm() <= 1e-13);
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
        let (q2, r2) = qr_positive(&q).unwrap();
        assert!((&q2 - &q).norm() <= 1e-13);
        assert!((r2 - Mat::identity(3, 3)).norm() <= 1e-13);
    }

    #[test]
    fn qr_positive_rejects_rank_deficiency() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(qr_positive(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn truncated_svd_of_diagonal_matrix() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 5.0, 3.0]));
        let (u, s, v) = truncated_svd(&a, 2).unwrap();
        assert_eq!(s, vec![5.0, 3.0]);
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-15 && (v[(2, 1)].abs() - 1.0).abs() < 1e-15);
        let best = rank_p_approximation(&a, 2).unwrap();
        assert!((best[(0, 0)]).abs() < 1e-15 && (best[(1, 1)] - 5.0).abs() < 1e-14);
        assert!(truncated_svd(&a, 4).is_err());
    }
}
