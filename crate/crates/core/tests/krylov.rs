use hsolve::block::SymmetryFlag;
use hsolve::csr::CsrMatrix;
use hsolve::dense::RankPolicy;
use hsolve::factor::{factor_csr, FactorConfig, HierarchicalFactor};
use hsolve::krylov::{gmres, pcg, Identity, KrylovOptions, Operator};
use hsolve::problems::{gen_convdiff, gen_helmholtz, gen_poisson, gen_vc_poisson, read_matrix_market};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Mat<'a>(&'a CsrMatrix);

impl Operator for Mat<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.spmv(x)
    }
}

struct Prec<'a>(&'a HierarchicalFactor);

impl Operator for Prec<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.solve(x).unwrap()
    }
}

fn rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn opts(tol: f64) -> KrylovOptions {
    KrylovOptions { tol, maxit: 2000, restart: 50 }
}

fn factor(a: &CsrMatrix, flag: SymmetryFlag, policy: RankPolicy) -> HierarchicalFactor {
    factor_csr(a, flag, &FactorConfig::new(64, policy)).unwrap()
}

#[test]
fn identity_converges_in_one_iteration() {
    let a = CsrMatrix::identity(10);
    let b = rhs(10, 1);
    let (x, rep) = pcg(&Mat(&a), &Identity, &b, &opts(1e-12)).unwrap();
    assert_eq!(rep.iterations, 1);
    assert!(rep.converged);
    assert_eq!(x, b);
    let (x, rep) = gmres(&Mat(&a), &Identity, &b, &opts(1e-12)).unwrap();
    assert_eq!(rep.iterations, 1);
    assert!(x.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-15));
}

#[test]
fn zero_rhs_gives_zero() {
    let a = gen_poisson(3);
    let (x, rep) = pcg(&Mat(&a), &Identity, &[0.0; 27], &opts(1e-12)).unwrap();
    assert!(rep.converged && x.iter().all(|&v| v == 0.0));
    let (x, rep) = gmres(&Mat(&a), &Identity, &[0.0; 27], &opts(1e-12)).unwrap();
    assert!(rep.converged && x.iter().all(|&v| v == 0.0));
}

#[test]
fn exact_preconditioner_needs_at_most_two_iterations() {
    let (tref, _) =
        read_matrix_market(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trefethen_200.mtx"))
            .unwrap();
    let spd = [gen_poisson(16), gen_vc_poisson(10, 2), tref];
    for a in &spd {
        let f = factor(a, SymmetryFlag::Spd, RankPolicy::Tolerance(0.0));
        let b = rhs(a.rows(), 2);
        let (_, rep) = pcg(&Mat(a), &Prec(&f), &b, &opts(1e-12)).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{:?}", rep.residuals);
        let (_, rep) = gmres(&Mat(a), &Prec(&f), &b, &opts(1e-12)).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{:?}", rep.residuals);
    }
    for (a, flag) in [(gen_helmholtz(10, 1.0), SymmetryFlag::SymmetricIndefinite), (gen_convdiff(10, 0.5), SymmetryFlag::General)] {
        let f = factor(&a, flag, RankPolicy::Tolerance(0.0));
        let b = rhs(a.rows(), 3);
        let (_, rep) = gmres(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{flag:?} {:?}", rep.residuals);
    }
}

#[test]
fn fixed_rank_8_beats_plain_cg_on_poisson_16() {
    let a = gen_poisson(16);
    let f = factor(&a, SymmetryFlag::Spd, RankPolicy::FixedRank(8));
    let b = rhs(a.rows(), 4);
    let (_, pre) = pcg(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap();
    let (_, plain) = pcg(&Mat(&a), &Identity, &b, &opts(1e-12)).unwrap();
    assert!(pre.converged && plain.converged);
    assert!(pre.true_residual <= 1e-12);
    assert!(pre.iterations < plain.iterations, "{} vs {}", pre.iterations, plain.iterations);
}

#[test]
fn helmholtz_16_rank_32_gmres() {
    // Half the frequency of the 32³ run keeps 32 points per wavelength.
    let a = gen_helmholtz(16, 0.5);
    let f = factor(&a, SymmetryFlag::SymmetricIndefinite, RankPolicy::FixedRank(32));
    let b = rhs(a.rows(), 5);
    let (_, rep) = gmres(&Mat(&a), &Prec(&f), &b, &opts(1e-3)).unwrap();
    assert!(rep.converged, "{:?}", rep.residuals);
}

#[test]
fn convdiff_12_general_path_gmres() {
    let a = gen_convdiff(12, 0.5);
    let f = factor(&a, SymmetryFlag::General, RankPolicy::Tolerance(0.2));
    let b = rhs(a.rows(), 6);
    let (_, rep) = gmres(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap();
    assert!(rep.converged, "{:?}", rep.residuals);
    assert!(rep.true_residual <= 1e-10);
}

#[test]
fn gmres_residuals_do_not_increase() {
    let a = gen_convdiff(8, 0.8);
    let b = rhs(a.rows(), 7);
    let o = KrylovOptions { tol: 1e-10, maxit: 3000, restart: 10 };
    let (_, rep) = gmres(&Mat(&a), &Identity, &b, &o).unwrap();
    assert!(rep.converged);
    for w in rep.residuals.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-14) + 1e-14, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn cg_and_gmres_agree_on_spd() {
    let a = gen_vc_poisson(8, 5);
    let f = factor(&a, SymmetryFlag::Spd, RankPolicy::FixedRank(8));
    let b = rhs(a.rows(), 8);
    let (x1, r1) = pcg(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap();
    let (x2, r2) = gmres(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap();
    assert!(r1.converged && r2.converged);
    let num: f64 = x1.iter().zip(&x2).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let den: f64 = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(num / den <= 1e-8, "{}", num / den);
}

#[test]
fn smaller_epsilon_needs_no_more_iterations() {
    let a = gen_poisson(16);
    let b = rhs(a.rows(), 9);
    let its: Vec<usize> = [0.4, 0.05]
        .iter()
        .map(|&e| {
            let f = factor(&a, SymmetryFlag::Spd, RankPolicy::Tolerance(e));
            pcg(&Mat(&a), &Prec(&f), &b, &opts(1e-12)).unwrap().1.iterations
        })
        .collect();
    assert!(its[1] <= its[0], "{its:?}");
}

#[test]
fn indefinite_operator_breaks_cg() {
    let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, -1.0), (1, 1, -2.0)]).unwrap();
    assert!(matches!(pcg(&Mat(&a), &Identity, &[1.0, 1.0], &opts(1e-12)), Err(hsolve::Error::BreakdownIndefinite)));
}

#[test]
fn iteration_limit_is_reported() {
    let a = gen_poisson(8);
    let b = rhs(a.rows(), 10);
    let o = KrylovOptions { tol: 1e-12, maxit: 3, restart: 50 };
    for (x, rep) in [pcg(&Mat(&a), &Identity, &b, &o).unwrap(), gmres(&Mat(&a), &Identity, &b, &o).unwrap()] {
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert_eq!(x.len(), b.len());
        assert!(matches!(rep.check(), Err(hsolve::Error::MaxIterations(3))));
    }
}

#[test]
fn history_csv_has_one_row_per_residual() {
    let a = gen_poisson(4);
    let (_, rep) = pcg(&Mat(&a), &Identity, &rhs(64, 11), &opts(1e-10)).unwrap();
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,residual");
    assert_eq!(lines.len(), rep.residuals.len() + 1);
    assert!(lines[1].starts_with("0,1e0"));
}

#[test]
fn invalid_options_are_rejected() {
    let a = CsrMatrix::identity(2);
    let o = KrylovOptions { tol: 0.0, ..opts(1.0) };
    assert!(matches!(pcg(&Mat(&a), &Identity, &[1.0, 1.0], &o), Err(hsolve::Error::InvalidConfig(_))));
}
