//! Hierarchical factorization: per-level low-rank elimination of every
//! cluster, recursion on the coarse DOFs, and the matching solve.

mod eliminate;
mod io;

pub use eliminate::{
    apply_effect, apply_elimination, eliminate_cluster, low_rank_eliminate, BlockEffect, ClusterOperator,
    ClusterView, Coupling, Elimination, OperatorKind,
};
pub use io::{read_factor, read_factor_from, write_factor, write_factor_to, FACTOR_MAGIC};

use crate::block::{assemble, block_pattern, BlockMatrix, BlockPattern, ClusterPartition, SymmetryFlag};
use crate::csr::CsrMatrix;
use crate::dense::{flops, DenseMatrix, RankPolicy, SquareFactor};
use crate::error::{Error, Result};
use crate::partition::{coarse_partition, partition_graph, PartitionConfig};
use serde::{Deserialize, Serialize};

/// Fraction of level DOFs at or above which a level counts as not shrinking.
pub const OVERFLOW_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    /// Target cluster size `r`.
    pub cluster_size: usize,
    pub policy: RankPolicy,
    /// Dense factorization once the level dimension is at most this; defaults
    /// to `max(2r, 128)`.
    pub stop_threshold: Option<usize>,
    /// Count blocks created outside the square of the level pattern.
    pub check_fill: bool,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig { cluster_size: 64, policy: RankPolicy::FixedRank(8), stop_threshold: None, check_fill: true }
    }
}

impl FactorConfig {
    pub fn new(cluster_size: usize, policy: RankPolicy) -> Self {
        FactorConfig { cluster_size, policy, ..Default::default() }
    }

    pub fn stop(&self) -> usize {
        self.stop_threshold.unwrap_or((2 * self.cluster_size).max(128))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_size == 0 {
            return Err(Error::InvalidConfig("cluster size must be >= 1".into()));
        }
        self.policy.validate()
    }
}

/// Chooses the elimination order of a level and the grouping of survivors
/// into next-level clusters.
pub trait LevelPlanner {
    fn order(&mut self, level: usize, pattern: &BlockPattern, sizes: &[usize]) -> Vec<usize>;

    /// `nodes` are the surviving cluster ids in ascending order; `pattern`
    /// and `weights` are indexed by survivor position and the returned
    /// groups hold survivor positions.
    fn coarse_groups(
        &mut self,
        level: usize,
        nodes: &[usize],
        pattern: &BlockPattern,
        weights: &[usize],
        target: usize,
    ) -> Vec<Vec<usize>>;
}

/// Cluster-id order and plain weighted bisection of the coarse graph.
#[derive(Debug, Default, Clone, Copy)]
pub struct SequentialPlanner;

impl LevelPlanner for SequentialPlanner {
    fn order(&mut self, _level: usize, pattern: &BlockPattern, _sizes: &[usize]) -> Vec<usize> {
        (0..pattern.m()).collect()
    }

    fn coarse_groups(
        &mut self,
        _level: usize,
        _nodes: &[usize],
        pattern: &BlockPattern,
        weights: &[usize],
        target: usize,
    ) -> Vec<Vec<usize>> {
        coarse_partition(pattern, weights, &PartitionConfig::with_target(target))
    }
}

/// One level of the factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Clusters over this level's DOFs.
    pub partition: ClusterPartition,
    /// Operators in elimination order.
    pub operators: Vec<ClusterOperator>,
    /// Surviving clusters in ascending id; their coarse DOFs, concatenated
    /// in this order, are the next level's DOFs.
    pub coarse_nodes: Vec<usize>,
    pub coarse_sizes: Vec<usize>,
}

impl Level {
    pub fn dofs(&self) -> usize {
        self.partition.num_dofs()
    }

    pub fn coarse_dofs(&self) -> usize {
        self.coarse_sizes.iter().sum()
    }

    pub fn order(&self) -> Vec<usize> {
        self.operators.iter().map(|o| o.cluster).collect()
    }

    fn gather(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.partition.clusters().iter().map(|c| c.iter().map(|&d| v[d]).collect()).collect()
    }

    fn scatter(&self, segs: &[Vec<f64>]) -> Vec<f64> {
        let mut v = vec![0.0; self.dofs()];
        for (c, seg) in self.partition.clusters().iter().zip(segs) {
            for (&d, &x) in c.iter().zip(seg) {
                v[d] = x;
            }
        }
        v
    }

    fn coarse_vector(&self, segs: &[Vec<f64>]) -> Vec<f64> {
        self.coarse_nodes.iter().flat_map(|&s| segs[s].iter().copied()).collect()
    }

    fn set_coarse(&self, segs: &mut [Vec<f64>], xc: &[f64]) {
        let mut off = 0;
        for (&s, &k) in self.coarse_nodes.iter().zip(&self.coarse_sizes) {
            segs[s] = xc[off..off + k].to_vec();
            off += k;
        }
    }

    /// Forward sweep; returns the segments and the fine parts per operator.
    pub fn forward(&self, v: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut segs = self.gather(v);
        let fines = self.operators.iter().map(|op| op.forward(&mut segs)).collect();
        let coarse = self.coarse_vector(&segs);
        (segs, fines, coarse)
    }

    pub fn backward(&self, mut segs: Vec<Vec<f64>>, fines: &[Vec<f64>], xc: &[f64]) -> Vec<f64> {
        self.set_coarse(&mut segs, xc);
        for (op, fine) in self.operators.iter().zip(fines).rev() {
            op.backward(&mut segs, fine);
        }
        self.scatter(&segs)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub dofs: usize,
    pub clusters: usize,
    pub coarse_dofs: usize,
    pub max_cluster_size: usize,
    pub max_rank: usize,
    pub eliminated: usize,
    pub passthrough: usize,
    pub skipped: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorStats {
    pub levels: Vec<LevelStats>,
    /// Blocks created outside the square of the level-initial pattern.
    pub fill_violations: usize,
    /// `(level, cluster)` pairs recorded as CompressionSkipped.
    pub skipped: Vec<(usize, usize)>,
    pub flops: u64,
}

/// The complete factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalFactor {
    pub n: usize,
    pub flag: SymmetryFlag,
    pub config: FactorConfig,
    pub levels: Vec<Level>,
    pub top_dim: usize,
    pub top: Option<SquareFactor>,
    pub stats: FactorStats,
}

impl HierarchicalFactor {
    /// Stored operator and top factor payload, in bytes.
    pub fn memory_bytes(&self) -> usize {
        let ops: usize = self.levels.iter().flat_map(|l| &l.operators).map(ClusterOperator::bytes).sum();
        ops + self.top.as_ref().map_or(0, eliminate::factor_bytes)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        apply_solve(self, b)
    }
}

/// Partitions `a`, assembles blocks and factors.
pub fn factor_csr(a: &CsrMatrix, flag: SymmetryFlag, config: &FactorConfig) -> Result<HierarchicalFactor> {
    factor_csr_with(a, flag, config, &mut SequentialPlanner)
}

pub fn factor_csr_with(
    a: &CsrMatrix,
    flag: SymmetryFlag,
    config: &FactorConfig,
    planner: &mut dyn LevelPlanner,
) -> Result<HierarchicalFactor> {
    config.validate()?;
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let partition = if a.rows() <= config.stop() {
        ClusterPartition::contiguous(a.rows(), a.rows().max(1))
    } else {
        partition_graph(&a.graph(), &PartitionConfig::with_target(config.cluster_size))
    };
    let blocks = assemble(a, &partition, flag)?;
    hierarchical_factor_with(blocks, partition, config, planner)
}

pub fn hierarchical_factor(a: BlockMatrix, partition: ClusterPartition, config: &FactorConfig) -> Result<HierarchicalFactor> {
    hierarchical_factor_with(a, partition, config, &mut SequentialPlanner)
}

pub fn hierarchical_factor_with(
    mut a: BlockMatrix,
    mut partition: ClusterPartition,
    config: &FactorConfig,
    planner: &mut dyn LevelPlanner,
) -> Result<HierarchicalFactor> {
    config.validate()?;
    if partition.num_dofs() != a.dim() || partition.num_clusters() != a.num_clusters() {
        return Err(Error::DimensionMismatch { expected: partition.num_dofs(), got: a.dim() });
    }
    let n = a.dim();
    let flag = a.flag();
    let stop = config.stop();
    let mut levels = Vec::new();
    let mut stats = FactorStats::default();
    let mut stalled = 0;
    while a.dim() > stop {
        let li = levels.len();
        let pattern = block_pattern(&a);
        let square = config.check_fill.then(|| pattern.pattern_square());
        let order = planner.order(li, &pattern, a.sizes());
        let mut lstats = LevelStats {
            dofs: a.dim(),
            clusters: a.num_clusters(),
            max_cluster_size: a.sizes().iter().copied().max().unwrap_or(0),
            ..Default::default()
        };
        let flops0 = flops::read();
        let mut operators = Vec::with_capacity(order.len());
        for &s in &order {
            let elim = eliminate_cluster(&ClusterView::gather(&a, &pattern, s)?, flag, config.policy)?;
            let op = elim.op.clone();
            stats.fill_violations += apply_elimination(&mut a, elim, square.as_ref());
            record(&mut lstats, &mut stats, li, &op);
            operators.push(op);
        }
        lstats.flops = flops::read().wrapping_sub(flops0);
        let (next, next_partition, level) = close_level(&a, partition, operators, li, config, planner);
        lstats.coarse_dofs = level.coarse_dofs();
        stats.flops += lstats.flops;
        stats.levels.push(lstats);
        check_overflow(&level, li, &mut stalled)?;
        levels.push(level);
        a = next;
        partition = next_partition;
    }
    let (top_dim, top) = top_factor(&a, &partition)?;
    Ok(HierarchicalFactor { n, flag, config: *config, levels, top_dim, top, stats })
}

pub(crate) fn record(lstats: &mut LevelStats, stats: &mut FactorStats, level: usize, op: &ClusterOperator) {
    match op.kind {
        OperatorKind::Eliminated => {
            lstats.eliminated += 1;
            lstats.max_rank = lstats.max_rank.max(op.coarse_size);
        }
        OperatorKind::Passthrough => lstats.passthrough += 1,
        OperatorKind::CompressionSkipped => {
            lstats.skipped += 1;
            stats.skipped.push((level, op.cluster));
        }
    }
}

pub(crate) fn check_overflow(level: &Level, li: usize, stalled: &mut usize) -> Result<()> {
    let (dofs, coarse) = (level.dofs(), level.coarse_dofs());
    if coarse as f64 >= OVERFLOW_FRACTION * dofs as f64 {
        *stalled += 1;
        if *stalled >= 2 {
            return Err(Error::LevelOverflow { level: li, dofs, coarse });
        }
    } else {
        *stalled = 0;
    }
    Ok(())
}

/// Surviving nodes of an eliminated level, their sizes and the block
/// pattern among them.
pub(crate) fn survivors(a: &BlockMatrix) -> (Vec<usize>, Vec<usize>, BlockPattern) {
    let nodes: Vec<usize> = (0..a.num_clusters()).filter(|&s| a.size(s) > 0).collect();
    let sizes: Vec<usize> = nodes.iter().map(|&s| a.size(s)).collect();
    let mut pos = vec![usize::MAX; a.num_clusters()];
    for (t, &s) in nodes.iter().enumerate() {
        pos[s] = t;
    }
    let pairs = nodes.iter().flat_map(|&s| a.row(s).keys().map(move |&j| (s, j))).map(|(s, j)| (pos[s], pos[j]));
    let pattern = BlockPattern::from_pairs(nodes.len(), pairs.collect::<Vec<_>>());
    (nodes, sizes, pattern)
}

/// Records the level and assembles the next one from the survivors.
pub(crate) fn close_level(
    a: &BlockMatrix,
    partition: ClusterPartition,
    operators: Vec<ClusterOperator>,
    li: usize,
    config: &FactorConfig,
    planner: &mut dyn LevelPlanner,
) -> (BlockMatrix, ClusterPartition, Level) {
    let (nodes, sizes, pattern) = survivors(a);
    let level = Level { partition, operators, coarse_nodes: nodes.clone(), coarse_sizes: sizes.clone() };
    let groups = if nodes.is_empty() {
        Vec::new()
    } else {
        planner.coarse_groups(li, &nodes, &pattern, &sizes, config.cluster_size)
    };
    let (next, next_partition) = assemble_groups(a, &nodes, &sizes, &groups);
    (next, next_partition, level)
}

/// Builds the next-level block matrix whose clusters are `groups` of
/// survivor positions.
pub(crate) fn assemble_groups(
    a: &BlockMatrix,
    nodes: &[usize],
    sizes: &[usize],
    groups: &[Vec<usize>],
) -> (BlockMatrix, ClusterPartition) {
    let mut offset = vec![0; nodes.len() + 1];
    for t in 0..nodes.len() {
        offset[t + 1] = offset[t] + sizes[t];
    }
    let mut group_of = vec![(0usize, 0usize); a.num_clusters()];
    let mut clusters = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        let mut local = 0;
        let mut dofs = Vec::new();
        for &t in members {
            group_of[nodes[t]] = (g, local);
            local += sizes[t];
            dofs.extend(offset[t]..offset[t + 1]);
        }
        clusters.push(dofs);
    }
    let gsizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let mut next = BlockMatrix::new(gsizes.clone(), a.flag());
    for &s in nodes {
        let (gi, li) = group_of[s];
        for (&j, b) in a.row(s) {
            let (gj, lj) = group_of[j];
            if next.get(gi, gj).is_none() {
                next.insert(gi, gj, DenseMatrix::zeros(gsizes[gi], gsizes[gj]));
            }
            next.get_mut(gi, gj).unwrap().set_block(li, lj, b);
        }
    }
    let partition = ClusterPartition::new(offset[nodes.len()], clusters).expect("groups cover survivors");
    (next, partition)
}

pub(crate) fn top_factor(a: &BlockMatrix, partition: &ClusterPartition) -> Result<(usize, Option<SquareFactor>)> {
    let dim = a.dim();
    if dim == 0 {
        return Ok((0, None));
    }
    // Dense matrix in level-DOF order.
    let mut d = DenseMatrix::zeros(dim, dim);
    for (i, j, b) in a.blocks() {
        let (ri, cj) = (partition.cluster(i), partition.cluster(j));
        for q in 0..b.cols() {
            for p in 0..b.rows() {
                d[(ri[p], cj[q])] = b[(p, q)];
            }
        }
    }
    if a.flag().is_symmetric() {
        d.symmetrize();
    }
    Ok((dim, Some(SquareFactor::new(&d, a.flag().is_symmetric())?)))
}

/// Applies the inverse of the factorization to `b`.
pub fn apply_solve(f: &HierarchicalFactor, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, got: b.len() });
    }
    let mut v = b.to_vec();
    let mut saved = Vec::with_capacity(f.levels.len());
    for level in &f.levels {
        let (segs, fines, coarse) = level.forward(&v);
        saved.push((segs, fines));
        v = coarse;
    }
    if let Some(top) = &f.top {
        top.solve_in_place(&mut v);
    }
    for (level, (segs, fines)) in f.levels.iter().zip(saved).rev() {
        v = level.backward(segs, &fines, &v);
    }
    Ok(v)
}
