//! Small dense symmetric matrices and their Cholesky factors.

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest diagonal shift tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Real> SymmetricMatrix<T> {
    /// Fills entries `(a, b)` with `a <= b` from `entry` and mirrors them.
    pub fn from_fn(size: usize, mut entry: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); size * size];
        for a in 0..size {
            for b in a..size {
                let v = entry(a, b);
                data[a * size + b] = v;
                data[b * size + a] = v;
            }
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.data[a * self.size + b]
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            size: self.size,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Plain Cholesky of `self + shift * I`; `None` when a pivot is not positive.
    pub fn cholesky(&self, shift: T) -> Option<LowerTriangular<T>> {
        let n = self.size;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut diag = self.get(j, j) + shift;
            for k in 0..j {
                diag = diag - l[j * n + k] * l[j * n + k];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return None;
            }
            let pivot = diag.sqrt();
            l[j * n + j] = pivot;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / pivot;
            }
        }
        Some(LowerTriangular { size: n, data: l })
    }

    /// Cholesky with diagonal jitter, escalated tenfold until it succeeds or
    /// exceeds [`MAX_JITTER`]. Returns the factor and the jitter actually used.
    pub fn cholesky_jittered(&self, jitter: T) -> Result<(LowerTriangular<T>, T)> {
        let cap = T::lit(MAX_JITTER);
        let mut shift = jitter;
        loop {
            if let Some(l) = self.cholesky(shift) {
                if shift > jitter {
                    log::warn!("covariance jitter escalated from {:e} to {:e}", jitter.as_f64(), shift.as_f64());
                }
                return Ok((l, shift));
            }
            if shift >= cap {
                return Err(Error::Factorization {
                    jitter: shift.as_f64(),
                });
            }
            shift = if shift > T::zero() {
                (shift * T::lit(10.0)).min(cap)
            } else {
                T::lit(1e-12)
            };
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Real> LowerTriangular<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.data[a * self.size + b]
    }

    /// `L * v` into `out`.
    pub fn mul_vec_into(&self, v: &[T], out: &mut [T]) {
        let n = self.size;
        for (i, slot) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[i * n..i * n + i + 1];
            *slot = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.size];
        self.mul_vec_into(v, &mut out);
        out
    }
}
