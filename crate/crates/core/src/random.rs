//! Seeded random instance generation for tests, verification runs and
//! synthetic experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::kernels::{qr_positive, Mat};

/// Deterministic generator of random matrices with controlled conditioning.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gaussian(&mut self, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |_, _| self.rng.sample(StandardNormal))
    }

    /// Gaussian matrix rescaled to unit Frobenius norm.
    pub fn unit(&mut self, rows: usize, cols: usize) -> Mat {
        let g = self.gaussian(rows, cols);
        let n = g.norm();
        g / n
    }

    /// Matrix with orthonormal columns, Haar-distributed.
    pub fn orthonormal(&mut self, rows: usize, cols: usize) -> Mat {
        loop {
            let g = self.gaussian(rows, cols);
            if let Ok((q, _)) = qr_positive(&g) {
                return q;
            }
        }
    }

    /// Orthogonal `p×p` matrix (possibly with determinant −1).
    pub fn rotation(&mut self, p: usize) -> Mat {
        let mut q = self.orthonormal(p, p);
        if self.uniform() < 0.5 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    /// Square matrix with singular values drawn from `[lo, hi]`.
    pub fn conditioned(&mut self, p: usize, lo: f64, hi: f64) -> Mat {
        let u = self.rotation(p);
        let v = self.rotation(p);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(p, |_, _| self.uniform_in(lo, hi)));
        u * d * v.transpose()
    }

    /// Full-rank `rows×p` factor with singular values in `[0.5, 2]`.
    pub fn factor(&mut self, rows: usize, p: usize) -> Mat {
        let q = self.orthonormal(rows, p);
        q * self.conditioned(p, 0.5, 2.0)
    }

    /// Symmetric positive definite matrix with eigenvalues in `[0.5, 2]`.
    pub fn spd(&mut self, p: usize) -> Mat {
        let u = self.rotation(p);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(p, |_, _| self.uniform_in(0.5, 2.0)));
        let s = &u * d * u.transpose();
        (&s + s.transpose()) * 0.5
    }

    pub fn skew(&mut self, p: usize) -> Mat {
        let g = self.gaussian(p, p);
        (&g - g.transpose()) * 0.5
    }

    /// Invertible gauge with singular values in `[0.5, 2]`.
    pub fn gauge(&mut self, p: usize) -> Mat {
        self.conditioned(p, 0.5, 2.0)
    }

    /// A random tangent vector to the rank-p manifold at `M·Nᵀ`, of the form
    /// `U·Nᵀ + M·Vᵀ`.
    pub fn tangent_at(&mut self, m: &Mat, n: &Mat) -> Mat {
        let p = m.ncols();
        let u = self.gaussian(m.nrows(), p);
        let v = self.gaussian(n.nrows(), p);
        u * n.transpose() + m * v.transpose()
    }
}
