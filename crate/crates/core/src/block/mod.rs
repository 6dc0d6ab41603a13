//! Cluster partitions, block sparsity patterns and block-sparse matrices.

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryFlag {
    Spd,
    SymmetricIndefinite,
    General,
}

impl SymmetryFlag {
    pub fn is_symmetric(self) -> bool {
        self != SymmetryFlag::General
    }

    pub fn code(self) -> u8 {
        match self {
            SymmetryFlag::Spd => 0,
            SymmetryFlag::SymmetricIndefinite => 1,
            SymmetryFlag::General => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SymmetryFlag::Spd),
            1 => Some(SymmetryFlag::SymmetricIndefinite),
            2 => Some(SymmetryFlag::General),
            _ => None,
        }
    }
}

/// Disjoint cover of `0..num_dofs` by nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    num_dofs: usize,
    clusters: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
}

impl ClusterPartition {
    pub fn new(num_dofs: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut cluster_of = vec![usize::MAX; num_dofs];
        for (c, members) in clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidConfig(format!("cluster {c} is empty")));
            }
            for &d in members {
                if d >= num_dofs {
                    return Err(Error::DimensionMismatch { expected: num_dofs, got: d + 1 });
                }
                if cluster_of[d] != usize::MAX {
                    return Err(Error::InvalidConfig(format!("dof {d} assigned twice")));
                }
                cluster_of[d] = c;
            }
        }
        if let Some(d) = cluster_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidConfig(format!("dof {d} is not assigned")));
        }
        Ok(ClusterPartition { num_dofs, clusters, cluster_of })
    }

    /// Builds from a cluster label per DOF; labels are renumbered densely in
    /// order of first appearance of each label value.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = BTreeMap::new();
        for &l in labels {
            let next = map.len();
            map.entry(l).or_insert(next);
        }
        let mut clusters = vec![Vec::new(); map.len()];
        for (d, l) in labels.iter().enumerate() {
            clusters[map[l]].push(d);
        }
        ClusterPartition::new(labels.len(), clusters).expect("labels form a partition")
    }

    /// Consecutive runs of `size` DOFs.
    pub fn contiguous(num_dofs: usize, size: usize) -> Self {
        let clusters = (0..num_dofs).collect::<Vec<_>>().chunks(size.max(1)).map(|c| c.to_vec()).collect();
        ClusterPartition::new(num_dofs, clusters).expect("contiguous partition")
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, c: usize) -> &[usize] {
        &self.clusters[c]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster_of(&self, dof: usize) -> usize {
        self.cluster_of[dof]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    /// Position of each DOF inside its cluster.
    pub fn local_index(&self) -> Vec<usize> {
        let mut local = vec![0; self.num_dofs];
        for members in &self.clusters {
            for (p, &d) in members.iter().enumerate() {
                local[d] = p;
            }
        }
        local
    }
}

/// Symmetric boolean block pattern; the diagonal is always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    adj: Vec<Vec<usize>>,
}

impl BlockPattern {
    /// Symmetrizes `pairs` and adds the diagonal.
    pub fn from_pairs(m: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        for (i, j) in pairs {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        BlockPattern { adj }
    }

    pub fn m(&self) -> usize {
        self.adj.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Row `i` including the diagonal.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.adj[i].iter().copied().filter(|&j| j != i).collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub fn nnz(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn pattern_square(&self) -> BlockPattern {
        let m = self.m();
        let mut mark = vec![usize::MAX; m];
        let mut adj = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::new();
            for &k in &self.adj[i] {
                for &j in &self.adj[k] {
                    if mark[j] != i {
                        mark[j] = i;
                        row.push(j);
                    }
                }
            }
            row.sort_unstable();
            adj.push(row);
        }
        BlockPattern { adj }
    }

    /// Hop distances from `src`, `usize::MAX` for unreachable clusters.
    pub fn distances_from(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.m()];
        let mut queue = VecDeque::from([src]);
        dist[src] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Adjacency lists without self loops, for graph algorithms.
    pub fn graph(&self) -> Vec<Vec<usize>> {
        (0..self.m()).map(|i| self.neighbors(i)).collect()
    }
}

/// Sparse matrix of dense blocks keyed by cluster pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    sizes: Vec<usize>,
    flag: SymmetryFlag,
    rows: Vec<BTreeMap<usize, DenseMatrix>>,
}

impl BlockMatrix {
    /// Empty matrix with zero diagonal blocks.
    pub fn new(sizes: Vec<usize>, flag: SymmetryFlag) -> Self {
        let rows = sizes.iter().enumerate().map(|(i, &s)| BTreeMap::from([(i, DenseMatrix::zeros(s, s))])).collect();
        BlockMatrix { sizes, flag, rows }
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn flag(&self) -> SymmetryFlag {
        self.flag
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&DenseMatrix> {
        self.rows[i].get(&j)
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> Option<&mut DenseMatrix> {
        self.rows[i].get_mut(&j)
    }

    pub fn insert(&mut self, i: usize, j: usize, block: DenseMatrix) {
        debug_assert_eq!(block.shape(), (self.sizes[i], self.sizes[j]));
        self.rows[i].insert(j, block);
    }

    pub fn remove(&mut self, i: usize, j: usize) -> Option<DenseMatrix> {
        self.rows[i].remove(&j)
    }

    /// Drops every block in row and column `i` and changes its size.
    pub fn reset_node(&mut self, i: usize, size: usize) {
        let cols: Vec<usize> = self.rows[i].keys().copied().collect();
        for j in cols {
            if j != i {
                self.rows[j].remove(&i);
            }
        }
        self.rows[i].clear();
        self.sizes[i] = size;
    }

    pub fn row(&self, i: usize) -> &BTreeMap<usize, DenseMatrix> {
        &self.rows[i]
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize, &DenseMatrix)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |(&j, b)| (i, j, b)))
    }

    pub fn num_blocks(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    pub fn bytes(&self) -> usize {
        self.blocks().map(|(_, _, b)| b.bytes()).sum()
    }

    /// Flattens back to CSR over the DOF numbering of `partition`, keeping
    /// only nonzero entries.
    pub fn to_csr(&self, partition: &ClusterPartition) -> CsrMatrix {
        let mut t = Vec::new();
        for (i, j, b) in self.blocks() {
            let (ri, cj) = (partition.cluster(i), partition.cluster(j));
            for q in 0..b.cols() {
                for p in 0..b.rows() {
                    if b[(p, q)] != 0.0 {
                        t.push((ri[p], cj[q], b[(p, q)]));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(partition.num_dofs(), partition.num_dofs(), &t).expect("in-range flatten")
    }

    /// Dense matrix in cluster-major ordering (cluster 0's DOFs first).
    pub fn to_dense(&self) -> DenseMatrix {
        let mut offset = vec![0; self.sizes.len() + 1];
        for (i, s) in self.sizes.iter().enumerate() {
            offset[i + 1] = offset[i] + s;
        }
        let mut d = DenseMatrix::zeros(self.dim(), self.dim());
        for (i, j, b) in self.blocks() {
            d.set_block(offset[i], offset[j], b);
        }
        d
    }
}

/// Stored blocks, symmetrized; explicit zeros in the input count as entries.
pub fn block_pattern(a: &BlockMatrix) -> BlockPattern {
    BlockPattern::from_pairs(a.num_clusters(), a.blocks().map(|(i, j, _)| (i, j)))
}

/// Scatters `csr` into blocks of `partition`.
pub fn assemble(csr: &CsrMatrix, partition: &ClusterPartition, flag: SymmetryFlag) -> Result<BlockMatrix> {
    let n = partition.num_dofs();
    if csr.rows() != n || csr.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: if csr.rows() != n { csr.rows() } else { csr.cols() } });
    }
    if flag.is_symmetric() {
        if let Some((i, j)) = csr.pattern_asymmetry() {
            return Err(Error::AsymmetricPattern(i, j));
        }
    }
    let local = partition.local_index();
    let mut a = BlockMatrix::new(partition.sizes(), flag);
    for (i, j, v) in csr.triplets() {
        let (ci, cj) = (partition.cluster_of(i), partition.cluster_of(j));
        let (si, sj) = (a.sizes[ci], a.sizes[cj]);
        let block = a.rows[ci].entry(cj).or_insert_with(|| DenseMatrix::zeros(si, sj));
        block[(local[i], local[j])] = v;
    }
    if flag == SymmetryFlag::General {
        // Keep the stored structure symmetric so column blocks can be found
        // from row keys.
        let pairs: Vec<(usize, usize)> = a.blocks().map(|(i, j, _)| (i, j)).collect();
        for (i, j) in pairs {
            if !a.rows[j].contains_key(&i) {
                let b = DenseMatrix::zeros(a.sizes[j], a.sizes[i]);
                a.rows[j].insert(i, b);
            }
        }
    }
    Ok(a)
}
