use hsolve_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe { hs_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn poisson(n: usize) -> *mut HsMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hs_matrix_generate(HsProblem::Poisson, n, 0, 1.0, &mut m) }, HsStatus::Ok);
    m
}

fn opts() -> HsFactorOptions {
    HsFactorOptions { cluster_size: 32, ..hs_factor_options_default() }
}

#[test]
fn solve_roundtrip() {
    let m = poisson(12);
    let n = unsafe { hs_matrix_rows(m) };
    assert_eq!(n, 1728);
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hs_factor_new(m, &opts(), &mut f) }, HsStatus::Ok);
    assert!(unsafe { hs_factor_levels(f) } >= 1);
    assert!(unsafe { hs_factor_memory_bytes(f) } > 0);
    let b = vec![1.0; n];
    let mut x = vec![0.0; n];
    let (mut its, mut res) = (0usize, 0.0f64);
    let s = unsafe { hs_solve(m, f, HsMethod::Auto, 1e-10, 200, 50, b.as_ptr(), x.as_mut_ptr(), n, &mut its, &mut res) };
    assert_eq!(s, HsStatus::Ok, "{}", last_error());
    assert!(res <= 1e-10 && its > 0);
    unsafe {
        hs_factor_free(f);
        hs_matrix_free(m);
    }
}

#[test]
fn exact_factor_apply_solves_small_system() {
    // 1D Laplacian as CSR.
    let n: usize = 50;
    let mut rp = vec![0usize];
    let (mut ci, mut vs) = (Vec::new(), Vec::new());
    for i in 0..n {
        for (j, v) in [(i.wrapping_sub(1), -1.0), (i, 2.0), (i + 1, -1.0)] {
            if j < n {
                ci.push(j);
                vs.push(v);
            }
        }
        rp.push(ci.len());
    }
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hs_matrix_from_csr(n, n, rp.as_ptr(), ci.as_ptr(), vs.as_ptr(), 0, &mut m) }, HsStatus::Ok);
    let o = HsFactorOptions { cluster_size: 8, policy: HsPolicyKind::Tolerance, tol: 0.0, ..hs_factor_options_default() };
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hs_factor_new(m, &o, &mut f) }, HsStatus::Ok);
    // A x = b with x = 1 has b = e_0 + e_{n-1}.
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    b[n - 1] = 1.0;
    let mut x = vec![0.0; n];
    assert_eq!(unsafe { hs_factor_apply(f, b.as_ptr(), x.as_mut_ptr(), n) }, HsStatus::Ok);
    assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10), "{x:?}");
    unsafe {
        hs_factor_free(f);
        hs_matrix_free(m);
    }
}

#[test]
fn status_codes_and_messages() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hs_matrix_generate(HsProblem::Poisson, 1, 0, 1.0, &mut m) }, HsStatus::InvalidConfig);
    assert!(last_error().contains("grid size"));
    let missing = CString::new("/nonexistent/a.mtx").unwrap();
    assert_eq!(unsafe { hs_matrix_read(missing.as_ptr(), &mut m) }, HsStatus::Io);
    assert!(m.is_null());
    assert_eq!(unsafe { hs_factor_new(ptr::null(), ptr::null(), &mut ptr::null_mut()) }, HsStatus::NullPointer);
    assert_eq!(unsafe { hs_matrix_generate(HsProblem::Poisson, 4, 0, 1.0, ptr::null_mut()) }, HsStatus::NullPointer);
    let bad = [0usize, 2, 1];
    let (ci, vs) = ([0usize, 1], [1.0, 1.0]);
    assert_eq!(unsafe { hs_matrix_from_csr(2, 2, bad.as_ptr(), ci.as_ptr(), vs.as_ptr(), 0, &mut m) }, HsStatus::InvalidConfig);
    assert_eq!(unsafe { hs_matrix_from_csr(2, 2, bad.as_ptr(), ci.as_ptr(), vs.as_ptr(), 9, &mut m) }, HsStatus::InvalidConfig);
    // Success clears the message.
    let m = poisson(4);
    assert_eq!(last_error(), "");
    unsafe { hs_matrix_free(m) };
    // Null handles are harmless where documented.
    unsafe {
        hs_matrix_free(ptr::null_mut());
        hs_factor_free(ptr::null_mut());
        assert_eq!(hs_matrix_rows(ptr::null()), 0);
        assert_eq!(hs_last_error(ptr::null_mut(), 0), 0);
    }
}

#[test]
fn not_converged_and_dimension_mismatch() {
    let m = poisson(12);
    let n = unsafe { hs_matrix_rows(m) };
    let o = HsFactorOptions { rank: 1, ..opts() };
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hs_factor_new(m, &o, &mut f) }, HsStatus::Ok);
    let b = vec![1.0; n];
    let mut x = vec![0.0; n];
    let mut its = 0usize;
    let s = unsafe { hs_solve(m, f, HsMethod::Cg, 1e-14, 1, 50, b.as_ptr(), x.as_mut_ptr(), n, &mut its, ptr::null_mut()) };
    assert_eq!(s, HsStatus::NotConverged);
    assert_eq!(its, 1);
    let s = unsafe { hs_solve(m, f, HsMethod::Cg, 1e-8, 10, 50, b.as_ptr(), x.as_mut_ptr(), 3, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, HsStatus::InvalidConfig);
    unsafe {
        hs_factor_free(f);
        hs_matrix_free(m);
    }
}

#[test]
fn save_load_roundtrip_and_parallel_factor() {
    let m = poisson(12);
    let n = unsafe { hs_matrix_rows(m) };
    let mut seq = ptr::null_mut();
    assert_eq!(unsafe { hs_factor_new(m, &opts(), &mut seq) }, HsStatus::Ok);
    let mut par = ptr::null_mut();
    let o = HsFactorOptions { workers: 2, schedule: HsSchedule::Async, ..opts() };
    assert_eq!(unsafe { hs_factor_new(m, &o, &mut par) }, HsStatus::Ok, "{}", last_error());
    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("f.hsf").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hs_factor_save(seq, file.as_ptr()) }, HsStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { hs_factor_load(file.as_ptr(), &mut loaded) }, HsStatus::Ok);
    let b: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
    let apply = |f: *const HsFactor| {
        let mut x = vec![0.0; n];
        assert_eq!(unsafe { hs_factor_apply(f, b.as_ptr(), x.as_mut_ptr(), n) }, HsStatus::Ok);
        x
    };
    assert_eq!(apply(seq), apply(loaded));
    // The distributed order differs from the sequential one, so compare
    // them as preconditioners.
    let mut x = vec![0.0; n];
    let mut its = [0usize; 2];
    for (f, it) in [seq, par].into_iter().zip(its.iter_mut()) {
        let s = unsafe { hs_solve(m, f, HsMethod::Cg, 1e-10, 100, 50, b.as_ptr(), x.as_mut_ptr(), n, it, ptr::null_mut()) };
        assert_eq!(s, HsStatus::Ok);
    }
    assert!(its[1] <= 2 * its[0] + 2, "{its:?}");
    unsafe {
        hs_factor_free(seq);
        hs_factor_free(par);
        hs_factor_free(loaded);
        hs_matrix_free(m);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(hs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hsolve.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["HsStatus", "HsMatrix", "HsFactor", "HsFactorOptions"] {
        assert!(text.contains(ty));
    }
}

/// Compiles and runs the C example against the static library when a C
/// compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    let target = exe.parent().and_then(Path::parent).unwrap();
    let lib = target.join("libhsolve_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/c/solve.c");
    let build = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&out).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}");
    assert!(stdout.contains("status 0"));
}
