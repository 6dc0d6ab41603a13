use hsolve::block::{assemble, block_pattern, BlockMatrix, ClusterPartition, SymmetryFlag};
use hsolve::csr::CsrMatrix;
use hsolve::dense::{DenseMatrix, RankPolicy};
use hsolve::factor::{
    apply_solve, factor_csr, hierarchical_factor, low_rank_eliminate, read_factor, read_factor_from, write_factor,
    write_factor_to, FactorConfig, OperatorKind,
};
use hsolve::partition::{partition_graph, PartitionConfig};
use hsolve::problems::{gen_convdiff, gen_helmholtz, gen_poisson, gen_vc_poisson, read_matrix_market};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(d: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(d.rows(), d.cols(), d.as_slice())
}

fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    to_na(&a.to_dense()).lu().solve(&DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
}

fn rel_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.spmv(x);
    let num: f64 = r.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    num / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    num / y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn random_rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn exact() -> RankPolicy {
    RankPolicy::Tolerance(0.0)
}

fn laplace_2d(n: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let i = x + n * y;
            t.push((i, i, 4.0));
            if x + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if y + 1 < n {
                t.push((i, i + n, -1.0));
                t.push((i + n, i, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n * n, n * n, &t).unwrap()
}

fn random_partition(n: usize, m: usize, rng: &mut ChaCha8Rng) -> ClusterPartition {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut labels = vec![0; n];
    for (k, &d) in perm.iter().enumerate() {
        labels[d] = if k < m { k } else { rng.gen_range(0..m) };
    }
    let clusters = (0..m).map(|c| (0..n).filter(|&d| labels[d] == c).collect()).collect();
    ClusterPartition::new(n, clusters).unwrap()
}

#[test]
fn identity_operator_is_trivial() {
    let part = ClusterPartition::contiguous(6, 2);
    let mut a = assemble(&CsrMatrix::identity(6), &part, SymmetryFlag::Spd).unwrap();
    let before = a.clone();
    let pattern = block_pattern(&a);
    let op = low_rank_eliminate(&mut a, &pattern, 1, exact()).unwrap();
    assert_eq!(op.kind, OperatorKind::Eliminated);
    assert_eq!((op.coarse_size, op.fine_size()), (0, 2));
    assert_eq!(op.v, DenseMatrix::identity(2));
    assert_eq!(a.size(1), 0);
    assert!(a.row(1).is_empty());
    for s in [0, 2] {
        assert_eq!(a.get(s, s), before.get(s, s));
    }
}

#[test]
fn first_cluster_is_one_block_cholesky_step() {
    let csr = gen_vc_poisson(6, 3);
    let part = partition_graph(&csr.graph(), &PartitionConfig::with_target(24));
    let mut a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
    let dense = to_na(&a.to_dense());
    let pattern = block_pattern(&a);
    let op = low_rank_eliminate(&mut a, &pattern, 0, exact()).unwrap();
    assert_eq!(op.coarse_size, 0);
    // Oracle: Schur complement of the leading block of the cluster-major matrix.
    let m = part.cluster(0).len();
    let n = dense.nrows();
    let s_oracle = dense.view((m, m), (n - m, n - m)) - dense.view((m, 0), (n - m, m))
        * dense.view((0, 0), (m, m)).clone_owned().cholesky().unwrap().inverse()
        * dense.view((0, m), (m, n - m));
    let rest = a.to_dense();
    let scale = s_oracle.amax();
    let diff = (to_na(&rest) - &s_oracle).amax();
    assert!(diff <= 1e-12 * scale, "{diff}");
}

#[test]
fn laplace_2d_four_clusters_exact() {
    let csr = laplace_2d(8);
    let labels: Vec<usize> = (0..64).map(|i| (i % 8) / 4 + 2 * ((i / 8) / 4)).collect();
    let part = ClusterPartition::from_labels(&labels);
    let a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
    let cfg = FactorConfig { cluster_size: 16, policy: exact(), stop_threshold: Some(8), check_fill: true };
    let f = hierarchical_factor(a, part, &cfg).unwrap();
    assert!(!f.levels.is_empty());
    let b = random_rhs(64, 1);
    let x = apply_solve(&f, &b).unwrap();
    assert!(rel_residual(&csr, &x, &b) <= 1e-10);
    assert!(rel_diff(&x, &dense_solve(&csr, &b)) <= 1e-10);
    assert_eq!(f.stats.fill_violations, 0);
}

#[test]
fn one_by_one_is_top_factor_only() {
    let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, 5.0)]).unwrap();
    let f = factor_csr(&a, SymmetryFlag::Spd, &FactorConfig::new(64, exact())).unwrap();
    assert!(f.levels.is_empty());
    assert_eq!(f.top_dim, 1);
    assert_eq!(f.solve(&[10.0]).unwrap(), vec![2.0]);
}

#[test]
fn identity_factor_returns_rhs() {
    let a = CsrMatrix::identity(300);
    let f = factor_csr(&a, SymmetryFlag::Spd, &FactorConfig::new(32, RankPolicy::FixedRank(4))).unwrap();
    let b = random_rhs(300, 9);
    assert_eq!(f.solve(&b).unwrap(), b);
}

#[test]
fn poisson_8_exact_manufactured_solution() {
    let a = gen_poisson(8);
    let f = factor_csr(&a, SymmetryFlag::Spd, &FactorConfig::new(64, exact())).unwrap();
    let b = a.spmv(&vec![1.0; 512]);
    let x = f.solve(&b).unwrap();
    assert!(x.iter().all(|v| (v - 1.0).abs() <= 1e-9));
    let b = random_rhs(512, 2);
    let x = f.solve(&b).unwrap();
    assert!(rel_residual(&a, &x, &b) <= 1e-10);
    assert!(rel_diff(&x, &dense_solve(&a, &b)) <= 1e-10);
}

#[test]
fn exactness_across_spd_suite() {
    let (tref, _) =
        read_matrix_market(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trefethen_200.mtx"))
            .unwrap();
    let cases = [(gen_poisson(12), 64), (gen_vc_poisson(10, 4), 48), (tref, 32), (laplace_2d(30), 40)];
    for (a, r) in cases {
        let cfg = FactorConfig { stop_threshold: Some(r), ..FactorConfig::new(r, exact()) };
        let f = factor_csr(&a, SymmetryFlag::Spd, &cfg).unwrap();
        assert!(!f.levels.is_empty());
        let b = random_rhs(a.rows(), 5);
        let x = f.solve(&b).unwrap();
        let res = rel_residual(&a, &x, &b);
        assert!(res <= 1e-10, "n={} res={res}", a.rows());
        assert_eq!(f.stats.fill_violations, 0);
    }
}

#[test]
fn indefinite_and_general_paths_are_exact_without_truncation() {
    let h = gen_helmholtz(8, 1.0);
    let c = gen_convdiff(8, 0.5);
    for (a, flag) in [(h, SymmetryFlag::SymmetricIndefinite), (c, SymmetryFlag::General)] {
        let cfg = FactorConfig { stop_threshold: Some(64), ..FactorConfig::new(32, exact()) };
        let f = factor_csr(&a, flag, &cfg).unwrap();
        assert!(f.levels.len() >= 2);
        let b = random_rhs(a.rows(), 6);
        let x = f.solve(&b).unwrap();
        assert!(rel_residual(&a, &x, &b) <= 1e-10, "{flag:?}");
        assert!(rel_diff(&x, &dense_solve(&a, &b)) <= 1e-8, "{flag:?}");
    }
}

/// Unpreconditioned CG to a tight tolerance, as an independent oracle for
/// `A⁻¹b` on matrices too large for a dense solve in a test.
fn cg_oracle(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * rr;
    for _ in 0..10 * n {
        let ap = a.spmv(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr2 = dot(&r, &r);
        if rr2 <= stop {
            break;
        }
        for i in 0..n {
            p[i] = r[i] + rr2 / rr * p[i];
        }
        rr = rr2;
    }
    x
}

#[test]
fn fixed_rank_8_poisson_16_is_a_useful_approximation() {
    let a = gen_poisson(16);
    let f = factor_csr(&a, SymmetryFlag::Spd, &FactorConfig::new(64, RankPolicy::FixedRank(8))).unwrap();
    let b = random_rhs(a.rows(), 7);
    let x = f.solve(&b).unwrap();
    let err = rel_diff(&x, &cg_oracle(&a, &b));
    assert!(err <= 0.5, "{err}");
    assert!(f.stats.levels.iter().all(|l| l.max_rank <= 8));
    assert!(f.top_dim <= f.config.stop());
}

#[test]
fn level_dofs_chain_and_top_threshold() {
    for (n, pol) in [(16, RankPolicy::FixedRank(8)), (12, exact()), (16, RankPolicy::Tolerance(0.1))] {
        let f = factor_csr(&gen_poisson(n), SymmetryFlag::Spd, &FactorConfig::new(64, pol)).unwrap();
        for w in f.levels.windows(2) {
            assert_eq!(w[0].coarse_dofs(), w[1].dofs());
        }
        assert_eq!(f.levels.last().unwrap().coarse_dofs(), f.top_dim);
        assert!(f.top_dim <= f.config.stop());
        for level in &f.levels {
            let mut order = level.order();
            order.sort_unstable();
            assert_eq!(order, (0..level.partition.num_clusters()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn fill_property_with_random_partitions() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let csr = gen_vc_poisson(8, seed);
        let m = rng.gen_range(6..20);
        let part = random_partition(512, m, &mut rng);
        let a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
        let cfg = FactorConfig { stop_threshold: Some(64), ..FactorConfig::new(48, RankPolicy::Tolerance(1e-3)) };
        let f = hierarchical_factor(a, part, &cfg).unwrap();
        assert_eq!(f.stats.fill_violations, 0, "seed {seed}");
    }
}

#[test]
fn hsf1_round_trip() {
    let a = gen_convdiff(7, 0.4);
    let cfg = FactorConfig { stop_threshold: Some(40), ..FactorConfig::new(24, RankPolicy::Tolerance(1e-2)) };
    let f = factor_csr(&a, SymmetryFlag::General, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.hsf");
    write_factor(&f, &path).unwrap();
    let g = read_factor(&path).unwrap();
    assert_eq!(f, g);
    let b = random_rhs(a.rows(), 3);
    assert_eq!(f.solve(&b).unwrap(), g.solve(&b).unwrap());

    let mut buf = Vec::new();
    write_factor_to(&f, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"HSF1");
    assert!(matches!(read_factor_from(&mut &buf[..buf.len() / 2]), Err(hsolve::Error::Format(_))));
    buf[0] = b'X';
    assert!(matches!(read_factor_from(&mut &buf[..]), Err(hsolve::Error::Format(_))));
}

#[test]
fn solve_rejects_wrong_length() {
    let f = factor_csr(&gen_poisson(4), SymmetryFlag::Spd, &FactorConfig::new(16, exact())).unwrap();
    assert!(matches!(f.solve(&[1.0; 3]), Err(hsolve::Error::DimensionMismatch { .. })));
}

#[test]
fn singular_diagonal_block_is_reported() {
    // Cluster 1 = {2, 3} has a zero diagonal block and no compression.
    let mut t = vec![(0, 0, 4.0), (1, 1, 4.0), (0, 1, 1.0), (1, 0, 1.0)];
    t.extend([(1, 2, 1.0), (2, 1, 1.0), (4, 4, 1.0), (5, 5, 1.0)]);
    let csr = CsrMatrix::from_triplets(6, 6, &t).unwrap();
    let part = ClusterPartition::contiguous(6, 2);
    let mut a = assemble(&csr, &part, SymmetryFlag::SymmetricIndefinite).unwrap();
    let p = block_pattern(&a);
    assert!(matches!(low_rank_eliminate(&mut a, &p, 1, exact()), Err(hsolve::Error::SingularDiagonal(1))));
}

/// Eliminates every cluster of one level by hand and checks the per-step
/// invariants against the block state before each step.
fn check_level_invariants(csr: &CsrMatrix, part: &ClusterPartition, policy: RankPolicy) -> Result<(), TestCaseError> {
    let mut a: BlockMatrix = assemble(csr, part, SymmetryFlag::Spd).unwrap();
    let pattern = block_pattern(&a);
    let square = pattern.pattern_square();
    for s in 0..a.num_clusters() {
        let a_ss = a.get(s, s).unwrap().clone();
        let op = low_rank_eliminate(&mut a, &pattern, s, policy).unwrap();
        prop_assert_eq!(op.fine_size() + op.coarse_size, a_ss.rows());
        for (i, j, _) in a.blocks() {
            prop_assert!(square.contains(i, j), "block ({}, {}) outside pattern square", i, j);
        }
        for (i, j, b) in a.blocks() {
            let t = a.get(j, i).unwrap().transpose();
            let scale = b.max_abs().max(1e-300);
            prop_assert!(b.sub(&t).max_abs() <= 1e-11 * scale);
        }
        if op.kind != OperatorKind::Eliminated {
            continue;
        }
        let k = op.coarse_size;
        let na = to_na(&a_ss);
        let u = to_na(&op.u);
        let v = to_na(&op.v);
        if k > 0 {
            let e = (u.transpose() * &u - DMatrix::<f64>::identity(k, k)).amax();
            prop_assert!(e <= 1e-10, "UᵀU: {}", e);
            let ainv_u = na.clone().lu().solve(&u).unwrap();
            let c = (v.transpose() * &ainv_u).amax() / ainv_u.amax();
            prop_assert!(c <= 1e-9, "VᵀA⁻¹U: {}", c);
        }
        let e = (v.transpose() * &v - DMatrix::<f64>::identity(v.ncols(), v.ncols())).amax();
        prop_assert!(e <= 1e-10, "VᵀV: {}", e);
        if let Some(hsolve::dense::SquareFactor::Cholesky(c)) = &op.fine_factor {
            let l = c.l();
            for j in 0..l.cols() {
                prop_assert!(l[(j, j)] > 0.0);
                for i in 0..j {
                    prop_assert_eq!(l[(i, j)], 0.0);
                }
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn per_step_invariants(seed in 0u64..1000, m in 4usize..12, k in 1usize..6, tol in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let csr = gen_vc_poisson(6, seed);
        let part = random_partition(216, m, &mut rng);
        let policy = match tol {
            0 => RankPolicy::FixedRank(k),
            1 => RankPolicy::Tolerance(0.0),
            _ => RankPolicy::Tolerance(0.05),
        };
        check_level_invariants(&csr, &part, policy)?;
    }

    #[test]
    fn exact_mode_random_partition_residual(seed in 0u64..1000, m in 3usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let csr = gen_poisson(6);
        let part = random_partition(216, m, &mut rng);
        let a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
        let cfg = FactorConfig { stop_threshold: Some(32), ..FactorConfig::new(24, exact()) };
        let f = hierarchical_factor(a, part, &cfg).unwrap();
        let b = random_rhs(216, seed);
        let x = f.solve(&b).unwrap();
        prop_assert!(rel_residual(&csr, &x, &b) <= 1e-10);
        prop_assert_eq!(f.stats.fill_violations, 0);
    }
}
