//! Symmetric LDLᵀ factorization without pivoting, used for gramians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ldlt {
    /// Unit lower-triangular factor; the diagonal is implicit.
    lower: DMatrix<f64>,
    pivots: DVector<f64>,
}

impl Ldlt {
    /// Factor a symmetric matrix. Only the lower triangle is read.
    pub fn new(mat: &DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::Shape(format!(
                "LDLt needs a square matrix, got {}x{}",
                n,
                mat.ncols()
            )));
        }
        let mut lower = DMatrix::<f64>::identity(n, n);
        let mut pivots = DVector::<f64>::zeros(n);
        // row-scaled workspace: work[k] = L[j,k] d[k]
        let mut work = vec![0.0; n];
        for j in 0..n {
            let mut d = mat[(j, j)];
            for k in 0..j {
                work[k] = lower[(j, k)] * pivots[k];
                d -= lower[(j, k)] * work[k];
            }
            pivots[j] = d;
            for i in j + 1..n {
                let mut acc = mat[(i, j)];
                for k in 0..j {
                    acc -= lower[(i, k)] * work[k];
                }
                lower[(i, j)] = if d != 0.0 { acc / d } else { 0.0 };
            }
        }
        Ok(Self { lower, pivots })
    }

    pub fn pivots(&self) -> &DVector<f64> {
        &self.pivots
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivots.min()
    }

    /// Ratio of largest to smallest pivot; infinite when a pivot is not positive.
    pub fn condition_estimate(&self) -> f64 {
        let lo = self.pivots.min();
        let hi = self.pivots.max();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.pivots.len();
        let mut x = rhs.clone();
        for i in 0..n {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.lower[(i, k)] * x[k];
            }
            x[i] = acc;
        }
        for i in 0..n {
            x[i] /= self.pivots[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self.lower[(k, i)] * x[k];
            }
            x[i] = acc;
        }
        x
    }
}
