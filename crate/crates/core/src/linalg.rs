//! Small dense linear algebra: a row-major matrix and a Cholesky factorization
//! with a fixed symmetrize-then-jitter policy.
//!
//! Every factorization symmetrizes its input (averaging with the transpose)
//! first. If that fails, a jitter of `1e-10 * trace / n` is added to the
//! diagonal once; a second failure is reported with a condition-number
//! estimate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math;

/// Relative jitter added to the diagonal after a failed factorization.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Returns `None` if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `(A + Aᵀ) / 2`. Panics if the matrix is not square.
    pub fn symmetrized(&self) -> Matrix {
        assert_eq!(self.rows, self.cols, "symmetrize needs a square matrix");
        let mut s = self.clone();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let avg = 0.5 * (self[(r, c)] + self[(c, r)]);
                s[(r, c)] = avg;
                s[(c, r)] = avg;
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        out
    }

    /// `vᵀ A v` for a square matrix.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        debug_assert_eq!(v.len(), self.rows);
        let mut acc = 0.0;
        for (r, &vr) in v.iter().enumerate() {
            acc += vr * dot(self.row(r), v);
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Failed factorization, after the jitter retry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    /// Ratio of the largest to the smallest pivot met; infinite when a pivot
    /// was non-positive.
    pub condition: f64,
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factor a symmetric positive-definite matrix under the
    /// symmetrize-then-jitter-once policy.
    pub fn factor(a: &Matrix) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.rows(), a.cols(), "Cholesky needs a square matrix");
        let sym = a.symmetrized();
        match Self::factor_raw(&sym, 0.0) {
            Ok(c) => Ok(c),
            Err(_) => {
                let n = sym.rows().max(1) as f64;
                let tr = sym.trace();
                let jitter = if tr > 0.0 && tr.is_finite() {
                    JITTER_SCALE * tr / n
                } else {
                    JITTER_SCALE
                };
                Self::factor_raw(&sym, jitter)
            }
        }
    }

    fn factor_raw(a: &Matrix, jitter: f64) -> Result<Self, NotPositiveDefinite> {
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        let mut max_pivot: f64 = 0.0;
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = a[(j, j)] + jitter;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite {
                    condition: f64::INFINITY,
                });
            }
            max_pivot = max_pivot.max(d);
            min_pivot = min_pivot.min(d);
            let ljj = math::sqrt(d);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        // Pivots this small relative to the largest have lost all precision.
        if n > 0 && min_pivot < max_pivot * 1e-15 * (n as f64) {
            return Err(NotPositiveDefinite {
                condition: max_pivot / min_pivot,
            });
        }
        Ok(Cholesky {
            n,
            lower: l,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was needed, zero if the first attempt succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        let l = &self.lower;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
    }

    /// `A⁻¹`, exactly symmetric.
    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrized()
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        let n = self.n;
        2.0 * (0..n).map(|i| math::ln(self.lower[i * n + i])).sum::<f64>()
    }
}
