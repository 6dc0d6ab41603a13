use hsolve::block::{assemble, block_pattern, BlockPattern, ClusterPartition, SymmetryFlag};
use hsolve::csr::CsrMatrix;
use hsolve::partition::{partition_graph, PartitionConfig};
use hsolve::problems::gen_poisson;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laplace_1d(n: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
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
fn block_diagonal_pattern() {
    let part = ClusterPartition::contiguous(6, 2);
    let a = assemble(&CsrMatrix::identity(6), &part, SymmetryFlag::Spd).unwrap();
    let p = block_pattern(&a);
    assert_eq!(p.pairs().collect::<Vec<_>>(), vec![(0, 0), (1, 1), (2, 2)]);
    for i in 0..3 {
        assert!(p.neighbors(i).is_empty());
        assert_eq!(a.get(i, i).unwrap(), &hsolve::dense::DenseMatrix::identity(2));
    }
}

#[test]
fn laplacian_pairs_are_tridiagonal() {
    let part = ClusterPartition::contiguous(6, 2);
    let p = block_pattern(&assemble(&laplace_1d(6), &part, SymmetryFlag::Spd).unwrap());
    for i in 0..3usize {
        for j in 0..3usize {
            assert_eq!(p.contains(i, j), i.abs_diff(j) <= 1);
        }
    }
    assert_eq!(p.neighbors(1), vec![0, 2]);
}

#[test]
fn grid_of_clusters_interior_neighbors() {
    // 2D 5-point stencil on 8×8, clusters of 2×2 points: a 4×4 cluster grid.
    let n = 8;
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
    let csr = CsrMatrix::from_triplets(n * n, n * n, &t).unwrap();
    let labels: Vec<usize> = (0..n * n).map(|i| (i % n) / 2 + 4 * ((i / n) / 2)).collect();
    let part = ClusterPartition::from_labels(&labels);
    let p = block_pattern(&assemble(&csr, &part, SymmetryFlag::Spd).unwrap());
    // Cluster (1,1) in the cluster grid has id 5.
    assert_eq!(p.neighbors(5), vec![1, 4, 6, 9]);
}

#[test]
fn poisson_round_trip_through_blocks() {
    let csr = gen_poisson(8);
    let part = partition_graph(&csr.graph(), &PartitionConfig::with_target(32));
    assert_eq!(part.num_clusters(), 16);
    let a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
    assert_eq!(a.to_csr(&part), csr);
    let stored: usize = a.blocks().map(|(_, _, b)| b.as_slice().iter().filter(|v| **v != 0.0).count()).sum();
    assert_eq!(stored, csr.nnz());
}

#[test]
fn asymmetric_structure_is_rejected_unless_general() {
    let csr = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let part = ClusterPartition::contiguous(2, 1);
    assert!(matches!(assemble(&csr, &part, SymmetryFlag::Spd), Err(hsolve::Error::AsymmetricPattern(..))));
    assert!(assemble(&csr, &part, SymmetryFlag::General).is_ok());
    assert!(matches!(
        assemble(&csr, &ClusterPartition::contiguous(3, 1), SymmetryFlag::General),
        Err(hsolve::Error::DimensionMismatch { .. })
    ));
}

#[test]
fn random_sparse_pattern_matches_entry_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let n = 64;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 1.0));
        for j in 0..i {
            if rng.gen_bool(0.03) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    let csr = CsrMatrix::from_triplets(n, n, &t).unwrap();
    let part = random_partition(n, 8, &mut rng);
    let p = block_pattern(&assemble(&csr, &part, SymmetryFlag::SymmetricIndefinite).unwrap());
    let dense = csr.to_dense();
    for a in 0..8 {
        for b in 0..8 {
            let scan = a == b
                || part.cluster(a).iter().any(|&i| part.cluster(b).iter().any(|&j| dense[(i, j)] != 0.0));
            assert_eq!(p.contains(a, b), scan, "({a},{b})");
        }
    }
}

#[test]
fn random_pattern_square_matches_boolean_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let m = 20;
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if rng.gen_bool(0.1) {
                pairs.push((i, j));
            }
        }
    }
    let p = BlockPattern::from_pairs(m, pairs);
    let sq = p.pattern_square();
    for i in 0..m {
        for j in 0..m {
            let oracle = (0..m).any(|k| p.contains(i, k) && p.contains(k, j));
            assert_eq!(sq.contains(i, j), oracle);
        }
    }
}

#[test]
fn dense_pattern_is_fixed_by_square() {
    let p = BlockPattern::from_pairs(4, (0..4).flat_map(|i| (0..4).map(move |j| (i, j))));
    assert_eq!(p.pattern_square(), p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn assembled_pattern_is_symmetric(seed in 0u64..10_000, n in 2usize..50, m in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = m.min(n);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            for j in 0..i {
                if rng.gen_bool(0.1) {
                    t.push((i, j, 1.0));
                    t.push((j, i, 1.0));
                }
            }
        }
        let csr = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let part = random_partition(n, m, &mut rng);
        let a = assemble(&csr, &part, SymmetryFlag::Spd).unwrap();
        for (i, j, b) in a.blocks() {
            let mirror = a.get(j, i);
            prop_assert!(mirror.is_some());
            prop_assert_eq!(&mirror.unwrap().transpose(), b);
        }
        let p = block_pattern(&a);
        for (i, j) in p.pairs() {
            prop_assert!(p.contains(j, i));
        }
        prop_assert_eq!(a.to_csr(&part), csr);
    }
}
