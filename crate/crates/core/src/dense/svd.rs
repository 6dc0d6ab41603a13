use super::{dot, flops, householder_qr, DenseMatrix};

/// Thin singular value decomposition `A = U·diag(σ)·Vᵀ`, σ sorted descending.
///
/// `U` is `m×r`, `V` is `n×r` with `r = min(m, n)`. Columns belonging to
/// zero singular values are zero vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

const MAX_SWEEPS: usize = 80;

pub fn jacobi_svd(a: &DenseMatrix) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.transpose());
        return Svd { u: t.v, sigma: t.sigma, v: t.u };
    }
    if n == 0 {
        return Svd { u: DenseMatrix::zeros(m, 0), sigma: Vec::new(), v: DenseMatrix::zeros(0, 0) };
    }
    // Reduce to the square triangular factor first; Jacobi then works on n×n.
    let qr = householder_qr(a);
    let (w, sigma, v) = square_jacobi(qr.r());
    let mut u = DenseMatrix::zeros(m, n);
    for j in 0..n {
        u.col_mut(j)[..n].copy_from_slice(w.col(j));
        qr.apply_q(u.col_mut(j));
    }
    Svd { u, sigma, v }
}

/// One-sided (Hestenes) Jacobi on a square matrix. Returns normalized left
/// vectors, singular values and right vectors, sorted.
fn square_jacobi(mut w: DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let n = w.cols();
    let mut v = DenseMatrix::identity(n);
    let tol = f64::EPSILON * n as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let mut u_sorted = DenseMatrix::zeros(n, n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        if s > 0.0 {
            for (o, x) in u_sorted.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x / s;
            }
        }
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();
    (u_sorted, sigma, v_sorted)
}

fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    flops::add(6 * rows as u64);
    let (left, right) = m.as_mut_slice().split_at_mut(q * rows);
    let cp = &mut left[p * rows..(p + 1) * rows];
    let cq = &mut right[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
