//! Model problems on the unit cube and Matrix Market I/O.

mod field;
mod mm;

pub use field::{gen_vc_field, FIELD_HI, FIELD_LO};
pub use mm::{read_matrix_market, read_matrix_market_str, write_matrix_market, write_matrix_market_string};

use crate::block::SymmetryFlag;
use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Poisson,
    #[value(name = "vcpoisson")]
    #[serde(rename = "vcpoisson")]
    VcPoisson,
    Helmholtz,
    /// Nonsymmetric convection-diffusion, used to exercise the general path.
    #[value(name = "convdiff")]
    #[serde(rename = "convdiff")]
    ConvDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub n: usize,
    pub seed: u64,
    pub freq: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("grid size n must be >= 2, got {}", self.n)));
        }
        if self.kind == ProblemKind::Helmholtz && !(self.freq > 0.0) {
            return Err(Error::InvalidConfig("helmholtz needs a positive frequency".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<(CsrMatrix, SymmetryFlag)> {
        self.validate()?;
        Ok(match self.kind {
            ProblemKind::Poisson => (gen_poisson(self.n), SymmetryFlag::Spd),
            ProblemKind::VcPoisson => (gen_vc_poisson(self.n, self.seed), SymmetryFlag::Spd),
            ProblemKind::Helmholtz => (gen_helmholtz(self.n, self.freq), SymmetryFlag::SymmetricIndefinite),
            ProblemKind::ConvDiff => (gen_convdiff(self.n, 0.5), SymmetryFlag::General),
        })
    }
}

#[inline]
pub fn grid_index(n: usize, x: usize, y: usize, z: usize) -> usize {
    x + n * (y + n * z)
}

/// Visits every interior face `(cell, neighbor, axis)` once, with `neighbor`
/// the `+axis` neighbor of `cell`.
fn for_each_face(n: usize, mut f: impl FnMut(usize, usize, usize)) {
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let i = grid_index(n, x, y, z);
                if x + 1 < n {
                    f(i, grid_index(n, x + 1, y, z), 0);
                }
                if y + 1 < n {
                    f(i, grid_index(n, x, y + 1, z), 1);
                }
                if z + 1 < n {
                    f(i, grid_index(n, x, y, z + 1), 2);
                }
            }
        }
    }
}

/// Seven-point Laplacian, unit spacing, Dirichlet boundary folded into the
/// diagonal (diagonal 6, off-diagonals −1).
pub fn gen_poisson(n: usize) -> CsrMatrix {
    gen_shifted_poisson(n, 0.0)
}

/// Seven-point Laplacian on an `nx × ny × nz` box, `x` fastest.
pub fn gen_poisson_box(nx: usize, ny: usize, nz: usize) -> CsrMatrix {
    let big = nx * ny * nz;
    let id = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut t = Vec::with_capacity(7 * big);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = id(x, y, z);
                t.push((i, i, 6.0));
                for (ok, j) in [(x + 1 < nx, i + 1), (y + 1 < ny, i + nx), (z + 1 < nz, i + nx * ny)] {
                    if ok {
                        t.push((i, j, -1.0));
                        t.push((j, i, -1.0));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(big, big, &t).expect("generator indices in range")
}

fn gen_shifted_poisson(n: usize, shift: f64) -> CsrMatrix {
    let big = n * n * n;
    let mut t = Vec::with_capacity(7 * big);
    for i in 0..big {
        t.push((i, i, 6.0 - shift));
    }
    for_each_face(n, |i, j, _| {
        t.push((i, j, -1.0));
        t.push((j, i, -1.0));
    });
    CsrMatrix::from_triplets(big, big, &t).expect("generator indices in range")
}

/// `−∇·(a∇u)` on cells; interior faces use the harmonic mean of the two cell
/// values, boundary faces the cell value itself.
pub fn gen_vc_poisson(n: usize, seed: u64) -> CsrMatrix {
    gen_vc_poisson_with_field(n, &gen_vc_field(n, seed))
}

pub fn gen_vc_poisson_with_field(n: usize, a: &[f64]) -> CsrMatrix {
    let big = n * n * n;
    assert_eq!(a.len(), big);
    let mut diag = vec![0.0; big];
    let mut faces = vec![0u8; big];
    let mut t = Vec::with_capacity(7 * big);
    for_each_face(n, |i, j, _| {
        let c = 2.0 * a[i] * a[j] / (a[i] + a[j]);
        diag[i] += c;
        diag[j] += c;
        faces[i] += 1;
        faces[j] += 1;
        t.push((i, j, -c));
        t.push((j, i, -c));
    });
    for i in 0..big {
        diag[i] += (6 - faces[i]) as f64 * a[i];
        t.push((i, i, diag[i]));
    }
    CsrMatrix::from_triplets(big, big, &t).expect("generator indices in range")
}

/// Seven-point Helmholtz operator `−Δ − k²` with `k = 2πf`, written in unit
/// spacing as Poisson minus `(2πf/n)²` on the diagonal. `n = 32f` gives 32
/// points per wavelength.
pub fn gen_helmholtz(n: usize, f: f64) -> CsrMatrix {
    gen_shifted_poisson(n, helmholtz_shift(n, f))
}

pub fn helmholtz_shift(n: usize, f: f64) -> f64 {
    let kh = 2.0 * PI * f / n as f64;
    kh * kh
}

/// Convection-diffusion with central differences and velocity
/// `c·(1, 1/2, 1/4)`; nonsymmetric for `c ≠ 0`.
pub fn gen_convdiff(n: usize, c: f64) -> CsrMatrix {
    let big = n * n * n;
    let vel = [c, 0.5 * c, 0.25 * c];
    let mut t = Vec::with_capacity(7 * big);
    for i in 0..big {
        t.push((i, i, 6.0));
    }
    for_each_face(n, |i, j, axis| {
        let b = 0.5 * vel[axis];
        t.push((i, j, -1.0 + b));
        t.push((j, i, -1.0 - b));
    });
    CsrMatrix::from_triplets(big, big, &t).expect("generator indices in range")
}
