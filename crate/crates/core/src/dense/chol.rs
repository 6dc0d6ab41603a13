use super::{dot, flops, DenseMatrix};
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `A = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: DenseMatrix,
}

/// Factorizes a symmetric positive definite matrix. Only the lower triangle
/// of `a` is read.
pub fn cholesky(a: &DenseMatrix) -> Result<Cholesky> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.cols() });
    }
    flops::add((n * n * n / 3) as u64);
    // Row-oriented storage of L keeps the inner products contiguous.
    let mut lt = DenseMatrix::zeros(n, n); // lt[(k, i)] = L[i][k]
    for j in 0..n {
        let mut d = a[(j, j)] - dot(&lt.col(j)[..j], &lt.col(j)[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(j));
        }
        d = d.sqrt();
        lt[(j, j)] = d;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&lt.col(i)[..j], &lt.col(j)[..j]);
            lt[(j, i)] = s / d;
        }
    }
    Ok(Cholesky { l: lt.transpose() })
}

impl Cholesky {
    pub fn from_factor(l: DenseMatrix) -> Self {
        Cholesky { l }
    }

    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        forward_lower(&self.l, b, false);
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        backward_lower_tr(&self.l, y);
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.solve_in_place(x.col_mut(j));
        }
        x
    }
}

/// Solves `L y = b` for lower-triangular `L` (column-major sweep).
pub(crate) fn forward_lower(l: &DenseMatrix, b: &mut [f64], unit: bool) {
    let n = l.rows();
    for j in 0..n {
        if !unit {
            b[j] /= l[(j, j)];
        }
        let bj = b[j];
        if bj != 0.0 {
            let col = l.col(j);
            for i in (j + 1)..n {
                b[i] -= col[i] * bj;
            }
        }
    }
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub(crate) fn backward_lower_tr(l: &DenseMatrix, y: &mut [f64]) {
    let n = l.rows();
    for j in (0..n).rev() {
        let col = l.col(j);
        let s = dot(&col[j + 1..n], &y[j + 1..n]);
        y[j] = (y[j] - s) / col[j];
    }
}
