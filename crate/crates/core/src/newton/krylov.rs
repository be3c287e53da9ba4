//! GMRES on a horizontal space, with inner products in the geometry's metric.

use crate::error::{Error, Result};
use crate::pair::LiftPair;

/// Outcome of a Krylov solve.
#[derive(Clone, Debug)]
pub struct KrylovSolution {
    pub solution: LiftPair,
    pub iterations: usize,
    /// `‖op(ξ) − rhs‖ / ‖rhs‖` in the supplied inner product, recomputed from
    /// the returned iterate.
    pub relative_residual: f64,
}

/// Solves `op(ξ) = rhs` by unrestarted GMRES from `ξ₀ = 0`.
///
/// The Arnoldi basis is orthonormalized by modified Gram–Schmidt with one
/// reorthogonalization pass under `inner`. Returns
/// [`Error::SolverFailure`] with the best iterate when `maxit` iterations do
/// not reach `tol`.
pub fn gmres<Op, Inner>(op: Op, inner: Inner, rhs: &LiftPair, tol: f64, maxit: usize) -> Result<KrylovSolution>
where
    Op: Fn(&LiftPair) -> Result<LiftPair>,
    Inner: Fn(&LiftPair, &LiftPair) -> f64,
{
    let norm = |v: &LiftPair| inner(v, v).max(0.0).sqrt();
    let beta = norm(rhs);
    let zero = rhs.scale(0.0);
    if beta == 0.0 {
        return Ok(KrylovSolution {
            solution: zero,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    if !beta.is_finite() {
        return Err(Error::NonFinite("Krylov right-hand side"));
    }

    let maxit = maxit.max(1);
    let mut basis: Vec<LiftPair> = vec![rhs.scale(1.0 / beta)];
    // Column j of the Hessenberg matrix, already rotated.
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut iterations = 0;

    for j in 0..maxit {
        let mut w = op(&basis[j])?;
        let mut h = vec![0.0; j + 2];
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = inner(&w, v);
                h[i] += c;
                w = w.axpy(-c, v);
            }
        }
        let hn = norm(&w);
        h[j + 1] = hn;

        for (i, &(c, s)) in rotations.iter().enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (a, b) = (h[j], h[j + 1]);
        let r = a.hypot(b);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
        h[j] = r;
        h[j + 1] = 0.0;
        rotations.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        h_cols.push(h);
        iterations = j + 1;

        let estimate = g[j + 1].abs() / beta;
        let breakdown = hn <= 1e-14 * beta.max(1.0) || r == 0.0;
        if estimate <= tol || breakdown || j + 1 == maxit {
            break;
        }
        basis.push(w.scale(1.0 / hn));
    }

    let k = iterations;
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for (l, yl) in y.iter().enumerate().take(k).skip(i + 1) {
            acc -= h_cols[l][i] * yl;
        }
        let d = h_cols[i][i];
        y[i] = if d == 0.0 { 0.0 } else { acc / d };
    }
    let mut xi = zero;
    for (v, yi) in basis.iter().zip(&y) {
        xi = xi.axpy(*yi, v);
    }
    let residual = op(&xi)?.sub(rhs);
    let relative_residual = norm(&residual) / beta;
    if !relative_residual.is_finite() {
        return Err(Error::NonFinite("Krylov iterate"));
    }
    if relative_residual > tol {
        return Err(Error::SolverFailure {
            iterations,
            relative_residual,
            best: Box::new(xi),
        });
    }
    Ok(KrylovSolution {
        solution: xi,
        iterations,
        relative_residual,
    })
}
