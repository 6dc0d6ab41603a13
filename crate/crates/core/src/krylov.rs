//! Preconditioned conjugate gradients and restarted GMRES.

use crate::dense::{axpy, dot, norm};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Convergence record of one Krylov solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual before the first iteration and after each one. For
    /// GMRES this is the preconditioned residual.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// `‖b − Ax‖ / ‖b‖` of the returned iterate.
    pub true_residual: f64,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    /// `MaxIterations` when the solve did not converge.
    pub fn check(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::MaxIterations(self.iterations))
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "residual"]).map_err(csv_err)?;
        for (i, r) in self.residuals.iter().enumerate() {
            w.write_record([i.to_string(), format!("{r:e}")]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    pub tol: f64,
    pub maxit: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-12, maxit: 1000, restart: 50 }
    }
}

impl KrylovOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("solve tolerance must be > 0".into()));
        }
        if self.restart == 0 {
            return Err(Error::InvalidConfig("restart must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that maps a vector to a vector of the same length.
pub trait Operator {
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Operator for F {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// The identity, for unpreconditioned runs.
pub struct Identity;

impl Operator for Identity {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

fn true_residual(a: &dyn Operator, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let ax = a.apply(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    norm(&r) / bnorm
}

/// Preconditioned CG from a zero initial guess. Non-convergence is reported
/// through `SolveReport::converged`.
pub fn pcg(a: &dyn Operator, m: &dyn Operator, b: &[f64], opts: &KrylovOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let mut report = SolveReport { residuals: vec![if bnorm == 0.0 { 0.0 } else { 1.0 }], ..Default::default() };
    if bnorm == 0.0 {
        report.converged = true;
        report.solve_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = m.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    while report.iterations < opts.maxit {
        let ap = a.apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::BreakdownIndefinite);
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        report.iterations += 1;
        let mut rel = norm(&r) / bnorm;
        if rel <= opts.tol {
            // Confirm against the true residual before stopping.
            let ax = a.apply(&x);
            r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            rel = norm(&r) / bnorm;
        }
        report.residuals.push(rel);
        if rel <= opts.tol {
            report.converged = true;
            break;
        }
        z = m.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    report.true_residual = true_residual(a, &x, b, bnorm);
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

/// Left-preconditioned restarted GMRES from a zero initial guess, with
/// modified Gram–Schmidt plus one reorthogonalization pass.
pub fn gmres(a: &dyn Operator, m: &dyn Operator, b: &[f64], opts: &KrylovOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let mb = m.apply(b);
    let mbnorm = norm(&mb);
    let mut report = SolveReport { residuals: vec![if mbnorm == 0.0 { 0.0 } else { 1.0 }], ..Default::default() };
    if bnorm == 0.0 || mbnorm == 0.0 {
        report.converged = bnorm == 0.0;
        report.true_residual = 0.0;
        report.solve_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut z = mb;
    'outer: while report.iterations < opts.maxit {
        let beta = norm(&z);
        if beta / mbnorm <= opts.tol {
            report.converged = true;
            break;
        }
        let mm = opts.restart.min(opts.maxit - report.iterations);
        let mut basis: Vec<Vec<f64>> = vec![z.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; mm]; mm + 1]; // h[row][col]
        let (mut cs, mut sn) = (vec![0.0; mm], vec![0.0; mm]);
        let mut g = vec![0.0; mm + 1];
        g[0] = beta;
        let mut used = 0;
        let mut done = false;
        for j in 0..mm {
            let mut w = m.apply(&a.apply(&basis[j]));
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i][j] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / d;
                sn[j] = h[j + 1][j] / d;
            }
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            report.iterations += 1;
            let rel = g[j + 1].abs() / mbnorm;
            report.residuals.push(rel);
            if rel <= opts.tol || hn <= 1e-14 * beta {
                done = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // Back substitution on the triangular Hessenberg part.
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
        let ax = a.apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        z = m.apply(&r);
        if done {
            let rel = norm(&z) / mbnorm;
            if rel <= opts.tol || report.iterations >= opts.maxit {
                report.converged = rel <= opts.tol;
                break 'outer;
            }
        }
    }
    report.true_residual = true_residual(a, &x, b, bnorm);
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

impl Operator for crate::csr::CsrMatrix {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.spmv(x)
    }
}

/// Applies the approximate inverse; panics on a length mismatch.
impl Operator for crate::factor::HierarchicalFactor {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.solve(x).expect("preconditioner length matches")
    }
}
