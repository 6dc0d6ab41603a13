use super::{dot, flops, DenseMatrix};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting, `P·A = L·U`.
///
/// `L` (unit lower) and `U` share one packed matrix. `perm[i]` is the row of
/// `A` that ends up in row `i` of `P·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lu {
    packed: DenseMatrix,
    perm: Vec<usize>,
}

pub fn lu_pp(a: &DenseMatrix) -> Result<Lu> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.cols() });
    }
    flops::add((2 * n * n * n / 3) as u64);
    let threshold = 1e-14 * a.norm_inf();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if !(pmax > threshold) || pmax == 0.0 {
            return Err(Error::Singular(k));
        }
        if p != k {
            perm.swap(p, k);
            for j in 0..n {
                let t = lu[(p, j)];
                lu[(p, j)] = lu[(k, j)];
                lu[(k, j)] = t;
            }
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            lu[(i, k)] /= pivot;
        }
        for j in (k + 1)..n {
            let ukj = lu[(k, j)];
            if ukj == 0.0 {
                continue;
            }
            let (lcol, rest) = lu.as_mut_slice().split_at_mut(j * n);
            let lk = &lcol[k * n..(k + 1) * n];
            let cj = &mut rest[..n];
            for i in (k + 1)..n {
                cj[i] -= lk[i] * ukj;
            }
        }
    }
    Ok(Lu { packed: lu, perm })
}

impl Lu {
    pub fn from_parts(packed: DenseMatrix, perm: Vec<usize>) -> Self {
        Lu { packed, perm }
    }

    pub fn packed(&self) -> &DenseMatrix {
        &self.packed
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn l(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.packed[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn u(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| if i <= j { self.packed[(i, j)] } else { 0.0 })
    }

    /// Permutation as an explicit matrix `P`.
    pub fn p(&self) -> DenseMatrix {
        let n = self.dim();
        let mut p = DenseMatrix::zeros(n, n);
        for (i, &src) in self.perm.iter().enumerate() {
            p[(i, src)] = 1.0;
        }
        p
    }

    /// `y ← L⁻¹ P y`
    pub fn apply_lower_inv(&self, y: &mut [f64]) {
        let permuted: Vec<f64> = self.perm.iter().map(|&i| y[i]).collect();
        y.copy_from_slice(&permuted);
        super::chol::forward_lower(&self.packed, y, true);
    }

    /// `y ← U⁻¹ y`
    pub fn apply_upper_inv(&self, y: &mut [f64]) {
        let n = self.dim();
        for j in (0..n).rev() {
            y[j] /= self.packed[(j, j)];
            let yj = y[j];
            if yj != 0.0 {
                let col = self.packed.col(j);
                for i in 0..j {
                    y[i] -= col[i] * yj;
                }
            }
        }
    }

    /// `y ← U⁻ᵀ y`
    pub fn apply_upper_inv_tr(&self, y: &mut [f64]) {
        let n = self.dim();
        for j in 0..n {
            let col = self.packed.col(j);
            let s = dot(&col[..j], &y[..j]);
            y[j] = (y[j] - s) / col[j];
        }
    }

    /// `y ← Pᵀ L⁻ᵀ y`
    pub fn apply_lower_inv_tr(&self, y: &mut [f64]) {
        let n = self.dim();
        for j in (0..n).rev() {
            let col = self.packed.col(j);
            let s = dot(&col[j + 1..n], &y[j + 1..n]);
            y[j] -= s;
        }
        let mut out = vec![0.0; n];
        for (i, &src) in self.perm.iter().enumerate() {
            out[src] = y[i];
        }
        y.copy_from_slice(&out);
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.apply_lower_inv(b);
        self.apply_upper_inv(b);
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_tr_in_place(&self, b: &mut [f64]) {
        self.apply_upper_inv_tr(b);
        self.apply_lower_inv_tr(b);
    }

    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.solve_in_place(x.col_mut(j));
        }
        x
    }

    pub fn solve_tr_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.solve_tr_in_place(x.col_mut(j));
        }
        x
    }
}
