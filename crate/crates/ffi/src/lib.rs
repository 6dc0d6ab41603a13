//! C interface to the hierarchical solver.
//!
//! Matrices and factorizations are opaque handles created by `hs_*_new` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an `HsStatus`; the message of the last failure on the calling
//! thread is available from `hs_last_error`.

use hsolve::block::SymmetryFlag;
use hsolve::csr::CsrMatrix;
use hsolve::dense::RankPolicy;
use hsolve::error::Error;
use hsolve::factor::{factor_csr, read_factor, write_factor, FactorConfig, HierarchicalFactor};
use hsolve::krylov::{gmres, pcg, KrylovOptions};
use hsolve::parallel::{parallel_factor, ParallelOptions, Schedule};
use hsolve::problems::{read_matrix_market, ProblemKind, ProblemSpec};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes. The first five match the exit codes of the command-line
/// tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NotConverged = 1,
    Io = 2,
    InvalidConfig = 3,
    Numeric = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsPolicyKind {
    FixedRank = 0,
    Tolerance = 1,
    RelativeTolerance = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsProblem {
    Poisson = 0,
    VcPoisson = 1,
    Helmholtz = 2,
    ConvDiff = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsMethod {
    /// CG for SPD matrices, GMRES otherwise.
    Auto = 0,
    Cg = 1,
    Gmres = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsSchedule {
    Bsp = 0,
    Async = 1,
}

/// Factorization parameters; start from `hs_factor_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsFactorOptions {
    pub cluster_size: usize,
    pub policy: HsPolicyKind,
    pub rank: usize,
    pub tol: f64,
    /// More than one worker runs the distributed schedule on the simulator.
    pub workers: usize,
    pub schedule: HsSchedule,
}

/// Opaque sparse matrix.
pub struct HsMatrix {
    a: CsrMatrix,
    flag: SymmetryFlag,
}

/// Opaque factorization.
pub struct HsFactor {
    f: HierarchicalFactor,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::MaxIterations(_) => HsStatus::NotConverged,
        Error::Io(_) | Error::Parse { .. } | Error::UnsupportedField(_) | Error::Format(_) => HsStatus::Io,
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::InsufficientSamples => HsStatus::InvalidConfig,
        _ => HsStatus::Numeric,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            HsStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("panic: {}", msg.unwrap_or_default()));
            HsStatus::Panic
        }
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p).to_str().map(str::to_string).map_err(|_| Failure::Lib(Error::InvalidConfig("path is not UTF-8".into())))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Generates a model problem on an `n`³ grid.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_generate(problem: HsProblem, n: usize, seed: u64, freq: f64, out: *mut *mut HsMatrix) -> HsStatus {
    guard(|| {
        let kind = match problem {
            HsProblem::Poisson => ProblemKind::Poisson,
            HsProblem::VcPoisson => ProblemKind::VcPoisson,
            HsProblem::Helmholtz => ProblemKind::Helmholtz,
            HsProblem::ConvDiff => ProblemKind::ConvDiff,
        };
        let (a, flag) = ProblemSpec { kind, n, seed, freq }.generate()?;
        store(out, HsMatrix { a, flag })
    })
}

/// Reads a Matrix Market file.
///
/// # Safety
/// `file` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_read(file: *const c_char, out: *mut *mut HsMatrix) -> HsStatus {
    guard(|| {
        let (a, flag) = read_matrix_market(path(file)?)?;
        store(out, HsMatrix { a, flag })
    })
}

/// Builds a matrix from CSR arrays (`row_ptr` has `rows + 1` entries).
/// `symmetry` is 0 for SPD, 1 for symmetric indefinite, 2 for general.
///
/// # Safety
/// The arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_from_csr(
    rows: usize,
    cols: usize,
    row_ptr: *const usize,
    col_idx: *const usize,
    values: *const f64,
    symmetry: u8,
    out: *mut *mut HsMatrix,
) -> HsStatus {
    guard(|| {
        let rp = slice(row_ptr, rows + 1, "row_ptr")?;
        let nnz = rp[rows];
        let ci = slice(col_idx, nnz, "col_idx")?;
        let vs = slice(values, nnz, "values")?;
        let flag = SymmetryFlag::from_code(symmetry).ok_or_else(|| Error::InvalidConfig(format!("symmetry code {symmetry}")))?;
        let mut t = Vec::with_capacity(nnz);
        for i in 0..rows {
            if rp[i] > rp[i + 1] || rp[i + 1] > nnz {
                return Err(Error::InvalidConfig("row_ptr is not monotone".into()).into());
            }
            for k in rp[i]..rp[i + 1] {
                t.push((i, ci[k], vs[k]));
            }
        }
        let a = CsrMatrix::from_triplets(rows, cols, &t)?;
        store(out, HsMatrix { a, flag })
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_rows(m: *const HsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.a.rows())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_free(m: *mut HsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub extern "C" fn hs_factor_options_default() -> HsFactorOptions {
    HsFactorOptions { cluster_size: 64, policy: HsPolicyKind::FixedRank, rank: 8, tol: 0.0, workers: 1, schedule: HsSchedule::Bsp }
}

/// Factors `m`.
///
/// # Safety
/// `m` must be a live handle, `opts` null (defaults) or valid, and `out` a
/// valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_new(m: *const HsMatrix, opts: *const HsFactorOptions, out: *mut *mut HsFactor) -> HsStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let o = opts.as_ref().copied().unwrap_or_else(|| hs_factor_options_default());
        let policy = match o.policy {
            HsPolicyKind::FixedRank => RankPolicy::FixedRank(o.rank),
            HsPolicyKind::Tolerance => RankPolicy::Tolerance(o.tol),
            HsPolicyKind::RelativeTolerance => RankPolicy::RelativeTolerance(o.tol),
        };
        let cfg = FactorConfig::new(o.cluster_size, policy);
        let f = if o.workers > 1 {
            let schedule = if o.schedule == HsSchedule::Bsp { Schedule::Bsp } else { Schedule::Async };
            parallel_factor(&m.a, m.flag, &cfg, &ParallelOptions::new(o.workers), schedule)?.factor
        } else {
            factor_csr(&m.a, m.flag, &cfg)?
        };
        store(out, HsFactor { f })
    })
}

/// Applies the approximate inverse: `x = F⁻¹ b`, both of length `n`.
///
/// # Safety
/// `b` and `x` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_apply(f: *const HsFactor, b: *const f64, x: *mut f64, n: usize) -> HsStatus {
    guard(|| {
        let f = deref(f, "factor")?;
        let b = slice(b, n, "b")?;
        if x.is_null() {
            return Err(Failure::Null("x"));
        }
        let y = f.f.solve(b)?;
        std::ptr::copy_nonoverlapping(y.as_ptr(), x, n);
        Ok(())
    })
}

/// Number of elimination levels, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_levels(f: *const HsFactor) -> usize {
    f.as_ref().map_or(0, |f| f.f.levels.len())
}

/// Stored operator and top-factor bytes, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_memory_bytes(f: *const HsFactor) -> usize {
    f.as_ref().map_or(0, |f| f.f.memory_bytes())
}

/// # Safety
/// `f` must be a live handle and `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_save(f: *const HsFactor, file: *const c_char) -> HsStatus {
    guard(|| {
        let f = deref(f, "factor")?;
        write_factor(&f.f, path(file)?)?;
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_load(file: *const c_char, out: *mut *mut HsFactor) -> HsStatus {
    guard(|| {
        let f = read_factor(path(file)?)?;
        store(out, HsFactor { f })
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_factor_free(f: *mut HsFactor) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Solves `m x = b` with a Krylov method preconditioned by `f`, from a zero
/// initial guess. Returns `NotConverged` when the tolerance was not reached
/// within `maxit` iterations; `x` then holds the last iterate. The iteration
/// count and final relative residual are stored when the pointers are
/// non-null.
///
/// # Safety
/// Handles must be live; `b` and `x` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn hs_solve(
    m: *const HsMatrix,
    f: *const HsFactor,
    method: HsMethod,
    tol: f64,
    maxit: usize,
    restart: usize,
    b: *const f64,
    x: *mut f64,
    n: usize,
    iterations: *mut usize,
    residual: *mut f64,
) -> HsStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let f = deref(f, "factor")?;
        let b = slice(b, n, "b")?;
        if x.is_null() {
            return Err(Failure::Null("x"));
        }
        if n != m.a.rows() || n != f.f.n {
            return Err(Error::DimensionMismatch { expected: m.a.rows(), got: n }.into());
        }
        let opts = KrylovOptions { tol, maxit, restart };
        let cg = match method {
            HsMethod::Auto => m.flag == SymmetryFlag::Spd,
            HsMethod::Cg => true,
            HsMethod::Gmres => false,
        };
        let (y, report) = if cg { pcg(&m.a, &f.f, b, &opts)? } else { gmres(&m.a, &f.f, b, &opts)? };
        std::ptr::copy_nonoverlapping(y.as_ptr(), x, n);
        if !iterations.is_null() {
            *iterations = report.iterations;
        }
        if !residual.is_null() {
            *residual = report.true_residual;
        }
        report.check()?;
        Ok(())
    })
}
