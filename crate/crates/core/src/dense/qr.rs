use super::{dot, flops, DenseMatrix};

/// Householder QR of an `m×n` matrix with `m ≥ n`.
///
/// Reflector `j` is `I − τ_j v_j v_jᵀ` with `v_j[j] = 1`; the tails of the
/// vectors live below the diagonal of `packed`, `R` on and above it.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    packed: DenseMatrix,
    tau: Vec<f64>,
}

pub fn householder_qr(a: &DenseMatrix) -> HouseholderQr {
    let (m, n) = a.shape();
    assert!(m >= n, "householder_qr needs rows >= cols");
    flops::add((2 * m * n * n).saturating_sub(2 * n * n * n / 3) as u64);
    let mut qr = a.clone();
    let mut tau = vec![0.0; n];
    for j in 0..n {
        let col = &mut qr.col_mut(j)[j..];
        let alpha = col[0];
        let sigma = dot(&col[1..], &col[1..]);
        if sigma == 0.0 {
            // Already upper triangular in this column; use an identity reflector.
            tau[j] = 0.0;
            continue;
        }
        let norm = (alpha * alpha + sigma).sqrt();
        let beta = if alpha <= 0.0 { norm } else { -norm };
        let v0 = alpha - beta;
        for x in col[1..].iter_mut() {
            *x /= v0;
        }
        col[0] = beta;
        tau[j] = (beta - alpha) / beta;
        let t = tau[j];
        for c in (j + 1)..n {
            let (left, right) = qr.as_mut_slice().split_at_mut(c * m);
            let v = &left[j * m + j + 1..(j + 1) * m];
            let target = &mut right[j..m];
            let s = t * (target[0] + dot(v, &target[1..]));
            target[0] -= s;
            for (ti, vi) in target[1..].iter_mut().zip(v) {
                *ti -= s * vi;
            }
        }
    }
    HouseholderQr { packed: qr, tau }
}

impl HouseholderQr {
    pub fn rows(&self) -> usize {
        self.packed.rows()
    }

    pub fn cols(&self) -> usize {
        self.packed.cols()
    }

    pub fn r(&self) -> DenseMatrix {
        let n = self.cols();
        DenseMatrix::from_fn(n, n, |i, j| if i <= j { self.packed[(i, j)] } else { 0.0 })
    }

    /// `x ← Q x` for a length-`m` vector.
    pub fn apply_q(&self, x: &mut [f64]) {
        for j in (0..self.cols()).rev() {
            self.reflect(j, x);
        }
    }

    /// `x ← Qᵀ x` for a length-`m` vector.
    pub fn apply_qt(&self, x: &mut [f64]) {
        for j in 0..self.cols() {
            self.reflect(j, x);
        }
    }

    fn reflect(&self, j: usize, x: &mut [f64]) {
        let t = self.tau[j];
        if t == 0.0 {
            return;
        }
        let m = self.rows();
        let v = &self.packed.col(j)[j + 1..m];
        let s = t * (x[j] + dot(v, &x[j + 1..m]));
        x[j] -= s;
        for (xi, vi) in x[j + 1..m].iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }

    /// First `n` columns of `Q`.
    pub fn thin_q(&self) -> DenseMatrix {
        self.q_columns(self.cols())
    }

    /// Full orthogonal `m×m` factor.
    pub fn full_q(&self) -> DenseMatrix {
        self.q_columns(self.rows())
    }

    fn q_columns(&self, count: usize) -> DenseMatrix {
        let m = self.rows();
        let mut q = DenseMatrix::zeros(m, count);
        for j in 0..count {
            let c = q.col_mut(j);
            c[j] = 1.0;
            self.apply_q(c);
        }
        q
    }
}
