//! Symmetric tridiagonal matrices and their bidiagonal Cholesky factors.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// super-diagonal (`off.len() == diag.len() - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `self + diag(a)`.
    pub fn add_diagonal(&self, a: &[f64]) -> Self {
        let diag = self.diag.iter().zip(a).map(|(d, v)| d + v).collect();
        Self {
            diag,
            off: self.off.clone(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let mut acc = self.diag[k] * v[k];
                if k > 0 {
                    acc += self.off[k - 1] * v[k - 1];
                }
                if k + 1 < n {
                    acc += self.off[k] * v[k + 1];
                }
                acc
            })
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.diag[k] * v[k] * v[k];
            if k + 1 < n {
                acc += 2.0 * self.off[k] * v[k] * v[k + 1];
            }
        }
        acc
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.diag[r]
            } else if r + 1 == c {
                self.off[r]
            } else if c + 1 == r {
                self.off[c]
            } else {
                0.0
            }
        })
    }

    fn try_factor(&self) -> Option<BidiagCholesky> {
        let n = self.len();
        let mut l = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n {
            let mut d = self.diag[k];
            if k > 0 {
                let s = self.off[k - 1] / l[k - 1];
                d -= s * s;
                sub.push(s);
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            l.push(d.sqrt());
        }
        Some(BidiagCholesky { diag: l, sub })
    }

    /// Cholesky factorization; on failure retries once with
    /// `1e-10 * mean(diag)` added to the diagonal.
    pub fn cholesky(&self) -> Result<BidiagCholesky> {
        if let Some(f) = self.try_factor() {
            return Ok(f);
        }
        let n = self.len().max(1) as f64;
        let jitter = 1e-10 * self.diag.iter().sum::<f64>() / n;
        log::warn!("tridiagonal factorization failed; retrying with jitter {jitter:e}");
        let bumped = self.add_diagonal(&vec![jitter; self.len()]);
        bumped
            .try_factor()
            .ok_or_else(|| Error::NumericDegeneracy("tridiagonal precision is not positive definite".into()))
    }
}

/// Lower bidiagonal `L` with `P = L Lᵀ`; `sub[k-1]` is `L[k, k-1]`.
#[derive(Clone, Debug)]
pub struct BidiagCholesky {
    pub diag: Vec<f64>,
    pub sub: Vec<f64>,
}

impl BidiagCholesky {
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for k in 0..b.len() {
            let mut v = b[k];
            if k > 0 {
                v -= self.sub[k - 1] * y[k - 1];
            }
            y.push(v / self.diag[k]);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut v = y[k];
            if k + 1 < n {
                v -= self.sub[k] * x[k + 1];
            }
            x[k] = v / self.diag[k];
        }
        x
    }

    /// Solves `P x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }
}
