//! Euclidean objectives `f(X)` on `m×n` matrices, evaluated through the
//! factors of `X = M·Nᵀ`, and the gradient vector fields each geometry's
//! connection differentiates.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::kernels::{sym_sq, truncated_svd, Mat};
use crate::pair::FactorPair;

/// An objective on `m×n` matrices with Euclidean gradient `G(X)` and Hessian
/// action `H(X)[Ẋ]`, exposed only through products with tall factors.
///
/// Directions passed to the Hessian are factor-space pairs `(dM, dN)`; the
/// corresponding matrix direction is `Ẋ = dM·Nᵀ + M·dNᵀ`.
pub trait EuclideanOracle: Send + Sync {
    /// `(m, n)`.
    fn shape(&self) -> (usize, usize);

    fn value(&self, m: &Mat, n: &Mat) -> Result<f64>;

    /// `G(M·Nᵀ)·V` for `V` of size `n×k`.
    fn grad_right(&self, m: &Mat, n: &Mat, v: &Mat) -> Result<Mat>;

    /// `G(M·Nᵀ)ᵀ·U` for `U` of size `m×k`.
    fn grad_left(&self, m: &Mat, n: &Mat, u: &Mat) -> Result<Mat>;

    /// `H[Ẋ]·V` with `Ẋ = dM·Nᵀ + M·dNᵀ`.
    fn hess_right(&self, m: &Mat, n: &Mat, dir: &FactorPair, v: &Mat) -> Result<Mat>;

    /// `H[Ẋ]ᵀ·U` with `Ẋ = dM·Nᵀ + M·dNᵀ`.
    fn hess_left(&self, m: &Mat, n: &Mat, dir: &FactorPair, u: &Mat) -> Result<Mat>;
}

fn check_factors(op: &'static str, shape: (usize, usize), m: &Mat, n: &Mat) -> Result<()> {
    if m.nrows() != shape.0 {
        return Err(Error::dims(op, (shape.0, m.ncols()), m.shape()));
    }
    if n.nrows() != shape.1 || n.ncols() != m.ncols() {
        return Err(Error::dims(op, (shape.1, m.ncols()), n.shape()));
    }
    Ok(())
}

/// `f(X) = ½‖X − A‖²_F` for a dense target `A`.
#[derive(Clone, Debug)]
pub struct ApproximationObjective {
    target: Mat,
}

impl ApproximationObjective {
    pub fn new(target: Mat) -> Result<Self> {
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("approximation target"));
        }
        if target.nrows() == 0 || target.ncols() == 0 {
            return Err(Error::dims("approximation target", (1, 1), target.shape()));
        }
        Ok(Self { target })
    }

    pub fn target(&self) -> &Mat {
        &self.target
    }

    fn residual(&self, m: &Mat, n: &Mat) -> Mat {
        m * n.transpose() - &self.target
    }
}

impl EuclideanOracle for ApproximationObjective {
    fn shape(&self) -> (usize, usize) {
        self.target.shape()
    }

    fn value(&self, m: &Mat, n: &Mat) -> Result<f64> {
        check_factors("approx value", self.shape(), m, n)?;
        Ok(0.5 * self.residual(m, n).norm_squared())
    }

    fn grad_right(&self, m: &Mat, n: &Mat, v: &Mat) -> Result<Mat> {
        check_factors("approx grad", self.shape(), m, n)?;
        Ok(m * (n.transpose() * v) - &self.target * v)
    }

    fn grad_left(&self, m: &Mat, n: &Mat, u: &Mat) -> Result<Mat> {
        check_factors("approx grad", self.shape(), m, n)?;
        Ok(n * (m.transpose() * u) - self.target.transpose() * u)
    }

    fn hess_right(&self, m: &Mat, n: &Mat, dir: &FactorPair, v: &Mat) -> Result<Mat> {
        check_factors("approx hess", self.shape(), m, n)?;
        Ok(&dir.m * (n.transpose() * v) + m * (dir.n.transpose() * v))
    }

    fn hess_left(&self, m: &Mat, n: &Mat, dir: &FactorPair, u: &Mat) -> Result<Mat> {
        check_factors("approx hess", self.shape(), m, n)?;
        Ok(n * (dir.m.transpose() * u) + &dir.n * (m.transpose() * u))
    }
}

/// One observed entry `A[row, col] = value` (0-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `f(X) = ½‖P_Ω(X − A)‖²_F` over a set `Ω` of observed entries.
///
/// No operation forms an `m×n` matrix; every product costs `O(|Ω|·k)`.
#[derive(Clone, Debug)]
pub struct CompletionObjective {
    rows: usize,
    cols: usize,
    entries: Vec<Observation>,
}

impl CompletionObjective {
    /// Entries are sorted by `(row, col)`; duplicates and out-of-range indices
    /// are rejected, as is an empty sample.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<Observation>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Contract("completion objective needs at least one observed entry".into()));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.row >= rows || e.col >= cols {
                return Err(Error::Contract(format!(
                    "observed entry ({}, {}) outside {}x{}",
                    e.row, e.col, rows, cols
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::NonFinite("observed entry"));
            }
            if !seen.insert((e.row, e.col)) {
                return Err(Error::Contract(format!("duplicate observed entry ({}, {})", e.row, e.col)));
            }
        }
        entries.sort_by_key(|e| (e.row, e.col));
        Ok(Self { rows, cols, entries })
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Dense matrix with the observed values and zeros elsewhere.
    pub fn zero_filled(&self) -> Mat {
        let mut a = Mat::zeros(self.rows, self.cols);
        for e in &self.entries {
            a[(e.row, e.col)] = e.value;
        }
        a
    }

    /// Balanced factors `(U√Σ, V√Σ)` of the rank-`p` truncated SVD of the
    /// zero-filled sample rescaled by the inverse sampling ratio.
    pub fn spectral_factors(&self, p: usize) -> Result<(Mat, Mat)> {
        let ratio = self.entries.len() as f64 / (self.rows * self.cols) as f64;
        let (u, s, v) = truncated_svd(&(self.zero_filled() / ratio), p)?;
        let root: Vec<f64> = s.iter().map(|x| x.sqrt()).collect();
        let m = Mat::from_fn(self.rows, p, |r, c| u[(r, c)] * root[c]);
        let n = Mat::from_fn(self.cols, p, |r, c| v[(r, c)] * root[c]);
        Ok((m, n))
    }

    fn row_dot(a: &Mat, i: usize, b: &Mat, j: usize) -> f64 {
        (0..a.ncols()).map(|k| a[(i, k)] * b[(j, k)]).sum()
    }

    /// Residuals `X_ij − A_ij` on Ω, in entry order.
    fn residuals(&self, m: &Mat, n: &Mat) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| Self::row_dot(m, e.row, n, e.col) - e.value)
            .collect()
    }

    /// `Ẋ_ij` on Ω for `Ẋ = dM·Nᵀ + M·dNᵀ`.
    fn directional(&self, m: &Mat, n: &Mat, dir: &FactorPair) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| Self::row_dot(&dir.m, e.row, n, e.col) + Self::row_dot(m, e.row, &dir.n, e.col))
            .collect()
    }

    /// `S·V` where `S` is the sparse matrix with values `w` on Ω.
    fn sparse_right(&self, w: &[f64], v: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, v.ncols());
        for (e, &s) in self.entries.iter().zip(w) {
            for k in 0..v.ncols() {
                out[(e.row, k)] += s * v[(e.col, k)];
            }
        }
        out
    }

    /// `Sᵀ·U`.
    fn sparse_left(&self, w: &[f64], u: &Mat) -> Mat {
        let mut out = Mat::zeros(self.cols, u.ncols());
        for (e, &s) in self.entries.iter().zip(w) {
            for k in 0..u.ncols() {
                out[(e.col, k)] += s * u[(e.row, k)];
            }
        }
        out
    }
}

impl EuclideanOracle for CompletionObjective {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn value(&self, m: &Mat, n: &Mat) -> Result<f64> {
        check_factors("completion value", self.shape(), m, n)?;
        Ok(0.5 * self.residuals(m, n).iter().map(|r| r * r).sum::<f64>())
    }

    fn grad_right(&self, m: &Mat, n: &Mat, v: &Mat) -> Result<Mat> {
        check_factors("completion grad", self.shape(), m, n)?;
        Ok(self.sparse_right(&self.residuals(m, n), v))
    }

    fn grad_left(&self, m: &Mat, n: &Mat, u: &Mat) -> Result<Mat> {
        check_factors("completion grad", self.shape(), m, n)?;
        Ok(self.sparse_left(&self.residuals(m, n), u))
    }

    fn hess_right(&self, m: &Mat, n: &Mat, dir: &FactorPair, v: &Mat) -> Result<Mat> {
        check_factors("completion hess", self.shape(), m, n)?;
        Ok(self.sparse_right(&self.directional(m, n, dir), v))
    }

    fn hess_left(&self, m: &Mat, n: &Mat, dir: &FactorPair, u: &Mat) -> Result<Mat> {
        check_factors("completion hess", self.shape(), m, n)?;
        Ok(self.sparse_left(&self.directional(m, n, dir), u))
    }
}

/// The lifted gradient of `f∘π` in the balanced geometry,
/// `(G·N·MᵀM, Gᵀ·M·NᵀN)`, as a field on the factor space.
pub struct BalancedGradientField<'a> {
    oracle: &'a dyn EuclideanOracle,
}

impl<'a> BalancedGradientField<'a> {
    pub fn new(oracle: &'a dyn EuclideanOracle) -> Self {
        Self { oracle }
    }
}

/// Builds the balanced-geometry gradient field of `oracle`.
pub fn gradient_field_balanced(oracle: &dyn EuclideanOracle) -> BalancedGradientField<'_> {
    BalancedGradientField::new(oracle)
}

impl VectorField for BalancedGradientField<'_> {
    fn value(&self, m: &Mat, n: &Mat) -> Result<FactorPair> {
        let gn = self.oracle.grad_right(m, n, n)?;
        let gtm = self.oracle.grad_left(m, n, m)?;
        Ok(FactorPair::new(gn * (m.transpose() * m), gtm * (n.transpose() * n)))
    }

    fn derivative(&self, m: &Mat, n: &Mat, dir: &FactorPair) -> Result<FactorPair> {
        let (dm, dn) = (&dir.m, &dir.n);
        let gram_m = m.transpose() * m;
        let gram_n = n.transpose() * n;
        let dgram_m = dm.transpose() * m + m.transpose() * dm;
        let dgram_n = dn.transpose() * n + n.transpose() * dn;

        let gn = self.oracle.grad_right(m, n, n)?;
        let d_gn = self.oracle.hess_right(m, n, dir, n)? + self.oracle.grad_right(m, n, dn)?;
        let gtm = self.oracle.grad_left(m, n, m)?;
        let d_gtm = self.oracle.hess_left(m, n, dir, m)? + self.oracle.grad_left(m, n, dm)?;

        Ok(FactorPair::new(
            d_gn * &gram_m + gn * dgram_m,
            d_gtm * &gram_n + gtm * dgram_n,
        ))
    }
}

/// The lifted gradient of `f∘π` in the Stiefel geometry,
/// `(G·N − M·sym(MᵀG·N), Gᵀ·M)`, as a field on the factor space.
pub struct StiefelGradientField<'a> {
    oracle: &'a dyn EuclideanOracle,
}

impl<'a> StiefelGradientField<'a> {
    pub fn new(oracle: &'a dyn EuclideanOracle) -> Self {
        Self { oracle }
    }
}

/// Builds the Stiefel-geometry gradient field of `oracle`.
pub fn gradient_field_stiefel(oracle: &dyn EuclideanOracle) -> StiefelGradientField<'_> {
    StiefelGradientField::new(oracle)
}

impl VectorField for StiefelGradientField<'_> {
    fn value(&self, m: &Mat, n: &Mat) -> Result<FactorPair> {
        let gn = self.oracle.grad_right(m, n, n)?;
        let s = sym_sq(&(m.transpose() * &gn));
        let gtm = self.oracle.grad_left(m, n, m)?;
        Ok(FactorPair::new(gn - m * s, gtm))
    }

    fn derivative(&self, m: &Mat, n: &Mat, dir: &FactorPair) -> Result<FactorPair> {
        let (dm, dn) = (&dir.m, &dir.n);
        let gn = self.oracle.grad_right(m, n, n)?;
        let d_gn = self.oracle.hess_right(m, n, dir, n)? + self.oracle.grad_right(m, n, dn)?;
        let s = sym_sq(&(m.transpose() * &gn));
        let ds = sym_sq(&(dm.transpose() * &gn + m.transpose() * &d_gn));
        let d_gtm = self.oracle.hess_left(m, n, dir, m)? + self.oracle.grad_left(m, n, dm)?;
        Ok(FactorPair::new(d_gn - dm * s - m * ds, d_gtm))
    }
}
