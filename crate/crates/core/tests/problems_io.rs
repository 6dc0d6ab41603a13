use hsolve::block::SymmetryFlag;
use hsolve::csr::CsrMatrix;
use hsolve::dense::cholesky;
use hsolve::problems::{
    gen_convdiff, gen_helmholtz, gen_poisson, gen_vc_field, gen_vc_poisson, read_matrix_market, read_matrix_market_str,
    write_matrix_market, write_matrix_market_string, FIELD_HI, FIELD_LO,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn smallest_eigenvalue(a: &CsrMatrix) -> f64 {
    let d = a.to_dense();
    let m = DMatrix::from_column_slice(d.rows(), d.cols(), d.as_slice());
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Negative eigenvalue count of a symmetric banded matrix via LDLᵀ without
/// pivoting (Sylvester's law of inertia).
fn negative_inertia(a: &CsrMatrix, bw: usize) -> usize {
    let n = a.rows();
    // band[i][k] = L(i, i - bw + k)·D or working entry, k = 0..=bw
    let mut band = vec![vec![0.0f64; bw + 1]; n];
    for (i, j, v) in a.triplets() {
        if j <= i {
            band[i][bw - (i - j)] = v;
        }
    }
    let mut d = vec![0.0; n];
    let mut neg = 0;
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..i {
            // band[i][j] currently holds A(i,j) − Σ_{k<j} L(i,k)·D(k)·L(j,k)
            let mut s = band[i][bw - (i - j)];
            for k in lo.max(j.saturating_sub(bw))..j {
                s -= band[i][bw - (i - k)] * d[k] * band[j][bw - (j - k)];
            }
            band[i][bw - (i - j)] = s / d[j];
        }
        let mut s = band[i][bw];
        for k in lo..i {
            let l = band[i][bw - (i - k)];
            s -= l * l * d[k];
        }
        assert!(s != 0.0);
        d[i] = s;
        if s < 0.0 {
            neg += 1;
        }
    }
    neg
}

#[test]
fn poisson_n8_is_positive_definite() {
    let a = gen_poisson(8);
    assert_eq!(a.rows(), 512);
    let lmin = smallest_eigenvalue(&a);
    let exact = 6.0 - 6.0 * (std::f64::consts::PI / 9.0).cos();
    assert!((lmin - exact).abs() < 1e-10, "{lmin} vs {exact}");
}

#[test]
fn poisson_row_sums_nonnegative_and_positive_on_boundary() {
    let n = 5;
    let a = gen_poisson(n);
    for i in 0..a.rows() {
        let s: f64 = a.row(i).map(|(_, v)| v).sum();
        let (x, y, z) = (i % n, (i / n) % n, i / (n * n));
        let boundary = [x, y, z].iter().any(|&c| c == 0 || c == n - 1);
        assert!(s >= 0.0);
        assert_eq!(s > 0.0, boundary);
    }
}

#[test]
fn field_values_are_quantized_and_reproducible() {
    let f = gen_vc_field(12, 3);
    assert!(f.iter().all(|&v| v == FIELD_HI || v == FIELD_LO));
    assert_eq!(f, gen_vc_field(12, 3));
    assert_ne!(f, gen_vc_field(12, 4));
}

#[test]
fn field_hi_fraction_band_over_20_seeds() {
    // Smoothing at 4 cells leaves only a few dozen independent blobs in 32³,
    // so single seeds scatter; the ensemble mean must sit in the band.
    let fracs: Vec<f64> = (0..20)
        .map(|seed| {
            let f = gen_vc_field(32, seed);
            f.iter().filter(|&&v| v == FIELD_HI).count() as f64 / f.len() as f64
        })
        .collect();
    let mean = fracs.iter().sum::<f64>() / 20.0;
    assert!((0.35..=0.65).contains(&mean), "{mean}");
    let inside = fracs.iter().filter(|f| (0.35..=0.65).contains(*f)).count();
    assert!(inside >= 18, "{fracs:?}");
}

#[test]
fn vc_poisson_symmetric_and_spd() {
    for n in [4, 8, 10] {
        let a = gen_vc_poisson(n, 1);
        assert!(a.is_symmetric(0.0));
        assert!(cholesky(&a.to_dense()).is_ok(), "n={n}");
    }
    for n in [4, 10] {
        assert!(cholesky(&gen_poisson(n).to_dense()).is_ok());
    }
}

#[test]
fn helmholtz_small_grid_is_indefinite() {
    let a = gen_helmholtz(8, 1.0);
    assert!(a.is_symmetric(0.0));
    assert!(smallest_eigenvalue(&a) < 0.0);
}

#[test]
fn helmholtz_16_inertia() {
    // f = 1/2 sits below the first Dirichlet eigenvalue at this grid size.
    assert_eq!(negative_inertia(&gen_helmholtz(16, 0.5), 256), 0);
    assert!(negative_inertia(&gen_helmholtz(16, 1.0), 256) >= 1);
}

#[test]
fn inertia_helper_agrees_with_eigenvalues() {
    let a = gen_helmholtz(6, 1.5);
    let d = a.to_dense();
    let m = DMatrix::from_column_slice(d.rows(), d.cols(), d.as_slice());
    let neg = m.symmetric_eigenvalues().iter().filter(|&&l| l < 0.0).count();
    assert_eq!(negative_inertia(&a, 36), neg);
}

#[test]
fn convdiff_has_symmetric_pattern_only() {
    let a = gen_convdiff(4, 0.5);
    assert!(a.pattern_asymmetry().is_none());
    let (_, flag) = read_matrix_market_str(&write_matrix_market_string(&a, false)).unwrap();
    assert_eq!(flag, SymmetryFlag::General);
}

#[test]
fn matrix_market_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (a, sym) in [(gen_vc_poisson(4, 2), true), (gen_convdiff(3, 0.3), false), (gen_helmholtz(3, 1.0), true)] {
        let path = dir.path().join("m.mtx");
        write_matrix_market(&path, &a, sym).unwrap();
        let (b, _) = read_matrix_market(&path).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(read_matrix_market("/nonexistent/x.mtx"), Err(hsolve::Error::Io(_))));
}

#[test]
fn trefethen_fixture_loads() {
    let (a, flag) = read_matrix_market(fixture("trefethen_200.mtx")).unwrap();
    assert_eq!(a.rows(), 200);
    assert_eq!(a.nnz(), 2 * 1545 - 200);
    assert_eq!(flag, SymmetryFlag::Spd);
    assert_eq!(a.get(0, 0), 2.0);
    assert_eq!(a.get(199, 199), 1223.0);
    assert_eq!(a.get(0, 64), 1.0);
    assert_eq!(a.get(0, 3), 0.0);
    assert!(cholesky(&a.to_dense()).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generators_are_deterministic(n in 2usize..7, seed in 0u64..100, f in 0.1f64..3.0) {
        prop_assert_eq!(gen_vc_poisson(n, seed), gen_vc_poisson(n, seed));
        prop_assert_eq!(gen_helmholtz(n, f), gen_helmholtz(n, f));
        prop_assert_eq!(gen_poisson(n), gen_poisson(n));
    }

    #[test]
    fn string_round_trip(n in 2usize..6, seed in 0u64..100, sym in proptest::bool::ANY) {
        let a = gen_vc_poisson(n, seed);
        let (b, flag) = read_matrix_market_str(&write_matrix_market_string(&a, sym)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(flag, SymmetryFlag::Spd);
    }
}
