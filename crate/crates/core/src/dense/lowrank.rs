use super::{cholesky, householder_qr, jacobi_svd, lu_pp, Cholesky, DenseMatrix, Lu};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How many singular values survive truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankPolicy {
    /// Keep at most `K` singular triplets.
    FixedRank(usize),
    /// Drop singular values `σ ≤ ε` (absolute 2-norm). `ε = 0` keeps the full
    /// numerical rank.
    Tolerance(f64),
    /// Drop singular values `σ ≤ ε·σ_max`.
    RelativeTolerance(f64),
}

impl RankPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankPolicy::FixedRank(_) => Ok(()),
            RankPolicy::Tolerance(e) | RankPolicy::RelativeTolerance(e) if e >= 0.0 && e.is_finite() => Ok(()),
            _ => Err(Error::InvalidConfig(format!("invalid rank policy {self:?}"))),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, RankPolicy::Tolerance(e) | RankPolicy::RelativeTolerance(e) if *e == 0.0)
            || matches!(self, RankPolicy::FixedRank(usize::MAX))
    }
}

#[derive(Debug, Clone)]
pub struct LowRankBasis {
    /// `m×k`, orthonormal columns.
    pub u: DenseMatrix,
    /// `k×w`, equal to `Uᵀ·M`.
    pub z: DenseMatrix,
    pub epsilon_achieved: f64,
    pub rank: usize,
}

pub fn truncated_lowrank(m: &DenseMatrix, policy: RankPolicy) -> LowRankBasis {
    let (rows, cols) = m.shape();
    let svd = jacobi_svd(m);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    // Anything below roundoff of the largest value is numerically zero.
    let floor = smax * rows.max(cols) as f64 * f64::EPSILON;
    let numerical_rank = svd.sigma.iter().take_while(|&&s| s > floor).count();
    let k = match policy {
        RankPolicy::FixedRank(k) => k.min(numerical_rank),
        RankPolicy::Tolerance(eps) => {
            let thr = eps.max(floor);
            svd.sigma.iter().take_while(|&&s| s > thr).count()
        }
        RankPolicy::RelativeTolerance(eps) => {
            let thr = (eps * smax).max(floor);
            svd.sigma.iter().take_while(|&&s| s > thr).count()
        }
    };
    let epsilon_achieved = svd.sigma.get(k).copied().unwrap_or(0.0);
    if k == 0 {
        return LowRankBasis {
            u: DenseMatrix::zeros(rows, 0),
            z: DenseMatrix::zeros(0, cols),
            epsilon_achieved,
            rank: 0,
        };
    }
    let u = householder_qr(&svd.u.select_cols(0..k)).thin_q();
    let z = u.tr_matmul(m);
    LowRankBasis { u, z, epsilon_achieved, rank: k }
}

/// Factorization of a square diagonal block.
#[derive(Debug, Clone, PartialEq)]
pub enum SquareFactor {
    Cholesky(Cholesky),
    Lu(Lu),
}

impl SquareFactor {
    /// Cholesky when `symmetric` and it succeeds, LU otherwise.
    pub fn new(a: &DenseMatrix, symmetric: bool) -> Result<SquareFactor> {
        if symmetric {
            if let Ok(c) = cholesky(a) {
                return Ok(SquareFactor::Cholesky(c));
            }
        }
        lu_pp(a).map(SquareFactor::Lu)
    }

    pub fn dim(&self) -> usize {
        match self {
            SquareFactor::Cholesky(c) => c.dim(),
            SquareFactor::Lu(f) => f.dim(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, SquareFactor::Cholesky(_))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        super::flops::add(2 * (b.len() * b.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.solve_in_place(b),
            SquareFactor::Lu(f) => f.solve_in_place(b),
        }
    }

    pub fn solve_tr_in_place(&self, b: &mut [f64]) {
        super::flops::add(2 * (b.len() * b.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.solve_in_place(b),
            SquareFactor::Lu(f) => f.solve_tr_in_place(b),
        }
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

    /// `y ← L⁻¹ y` where the factor is `L·R` (`R = Lᵀ` for Cholesky).
    pub fn apply_left_inv(&self, y: &mut [f64]) {
        super::flops::add((y.len() * y.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.forward(y),
            SquareFactor::Lu(f) => f.apply_lower_inv(y),
        }
    }

    /// `y ← R⁻¹ y`
    pub fn apply_right_inv(&self, y: &mut [f64]) {
        super::flops::add((y.len() * y.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.backward(y),
            SquareFactor::Lu(f) => f.apply_upper_inv(y),
        }
    }

    /// `y ← L⁻ᵀ y`
    pub fn apply_left_inv_tr(&self, y: &mut [f64]) {
        super::flops::add((y.len() * y.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.backward(y),
            SquareFactor::Lu(f) => f.apply_lower_inv_tr(y),
        }
    }

    /// `y ← R⁻ᵀ y`
    pub fn apply_right_inv_tr(&self, y: &mut [f64]) {
        super::flops::add((y.len() * y.len()) as u64);
        match self {
            SquareFactor::Cholesky(c) => c.forward(y),
            SquareFactor::Lu(f) => f.apply_upper_inv_tr(y),
        }
    }
}

/// Relative residual of `A X = B` (or `Aᵀ X = B`).
pub fn solve_residual(a: &DenseMatrix, x: &DenseMatrix, b: &DenseMatrix, transpose: bool) -> f64 {
    let ax = if transpose { a.tr_matmul(x) } else { a.matmul(x) };
    let denom = a.frobenius_norm() * x.frobenius_norm() + b.frobenius_norm();
    if denom == 0.0 {
        return 0.0;
    }
    ax.sub(b).frobenius_norm() / denom
}

pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-8;

/// Orthonormal basis of the orthogonal complement of `range(A⁻¹U)`.
pub fn complement_basis(a_ss: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix> {
    let f = SquareFactor::new(a_ss, a_ss.asymmetry() <= 1e-12 * a_ss.max_abs())
        .map_err(|_| Error::IllConditioned(f64::INFINITY))?;
    complement_basis_with(&f, a_ss, u, false).map(|(v, _)| v)
}

/// Same as [`complement_basis`] with a precomputed factor of `A`. With
/// `transpose` the constraint uses `A⁻ᵀU`. Returns `(V, A⁻¹U)`.
pub fn complement_basis_with(
    f: &SquareFactor,
    a: &DenseMatrix,
    u: &DenseMatrix,
    transpose: bool,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let m = a.rows();
    let k = u.cols();
    if u.rows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: u.rows() });
    }
    let x = if transpose { f.solve_tr_mat(u) } else { f.solve_mat(u) };
    let res = solve_residual(a, &x, u, transpose);
    if !(res <= SOLVE_RESIDUAL_LIMIT) {
        return Err(Error::IllConditioned(res));
    }
    if k == 0 {
        return Ok((DenseMatrix::identity(m), x));
    }
    let q = householder_qr(&x).full_q();
    Ok((q.select_cols(k..m), x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_tolerance_picks_rank_two() {
        let m = DenseMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let b = truncated_lowrank(&m, RankPolicy::Tolerance(1.5));
        assert_eq!(b.rank, 2);
        assert!((b.epsilon_achieved - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let m = DenseMatrix::zeros(4, 5);
        for p in [RankPolicy::FixedRank(3), RankPolicy::Tolerance(0.1), RankPolicy::Tolerance(0.0)] {
            assert_eq!(truncated_lowrank(&m, p).rank, 0);
        }
    }

    #[test]
    fn identity_complement_of_e1() {
        let u = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]);
        let v = complement_basis(&DenseMatrix::identity(2), &u).unwrap();
        assert_eq!(v.shape(), (2, 1));
        assert!(v[(0, 0)].abs() < 1e-15);
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_basis_gives_identity() {
        let v = complement_basis(&DenseMatrix::identity(3), &DenseMatrix::zeros(3, 0)).unwrap();
        assert_eq!(v, DenseMatrix::identity(3));
    }
}
