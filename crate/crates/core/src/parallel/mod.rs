//! Distributed factorization over a simulated message-passing runtime.
//!
//! Clusters are owned by workers, and each level is eliminated in the
//! canonical order: boundary clusters by color, then D2, then D3, ties by
//! cluster id. The BSP, asynchronous and threaded schedules only change the
//! interleaving, so all of them reproduce the sequential factorization that
//! uses [`ParallelPlanner`] bit for bit.

pub mod comm;
pub mod decomp;
mod engine;
pub mod metrics;
pub mod planner;
mod sched;
mod solve;

pub use comm::{CommLog, CostModel, MessageRecord, Phase, WorkerComm, WorkerTime};
pub use decomp::{coloring_violations, decompose, from_owners, ColoringMode, DomainDecomposition, NodeClass};
pub use metrics::{fit_slope, scaling_report, ScalingMetrics, TimingSample};
pub use planner::ParallelPlanner;
pub use solve::parallel_solve;

use crate::block::{assemble, block_pattern, BlockMatrix, BlockPattern, ClusterPartition, SymmetryFlag};
use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::factor::{
    check_overflow, factor_csr_with, record, top_factor, FactorConfig, FactorStats, HierarchicalFactor, Level, LevelPlanner,
    LevelStats,
};
use crate::partition::{partition_graph, PartitionConfig};
use engine::{LevelCtx, Store, Worker};
use sched::Sim;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    #[default]
    Bsp,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Single-threaded simulator on a virtual clock.
    #[default]
    Sim,
    /// One thread per worker with channel messaging; runs the asynchronous
    /// schedule on the wall clock.
    Concurrent,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Backend::Sim),
            "concurrent" => Ok(Backend::Concurrent),
            _ => Err(Error::InvalidConfig(format!("unknown backend {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelOptions {
    pub workers: usize,
    pub coloring: ColoringMode,
    pub cost: CostModel,
    pub backend: Backend,
    /// Owners of the first-level clusters; computed by partitioning when
    /// absent.
    pub owners: Option<Vec<usize>>,
}

impl ParallelOptions {
    pub fn new(workers: usize) -> Self {
        ParallelOptions {
            workers,
            coloring: ColoringMode::Strict,
            cost: CostModel::default(),
            backend: Backend::Sim,
            owners: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidConfig("worker count must be >= 1".into()));
        }
        Ok(())
    }
}

/// A factorization computed by the distributed runtime.
#[derive(Debug, Clone)]
pub struct ParallelFactor {
    pub factor: HierarchicalFactor,
    /// Decomposition of every level.
    pub decomps: Vec<DomainDecomposition>,
    pub log: CommLog,
    /// Level at which the problem moved to worker 0, with the ownership the
    /// gather was routed over. `levels.len()` when it happened just before
    /// the top factorization.
    pub gather: Option<(usize, DomainDecomposition)>,
}

impl ParallelFactor {
    pub fn workers(&self) -> usize {
        self.log.p
    }

    /// Messages whose endpoints are neither neighbors nor neighbors of
    /// neighbors in the ownership they were sent under.
    pub fn locality_violations(&self) -> Vec<&MessageRecord> {
        locality_violations(&self.log, &self.decomps, self.gather.as_ref())
    }
}

pub(crate) fn locality_violations<'a>(
    log: &'a CommLog,
    decomps: &[DomainDecomposition],
    gather: Option<&(usize, DomainDecomposition)>,
) -> Vec<&'a MessageRecord> {
    log.messages
        .iter()
        .filter(|m| {
            let d = match (m.phase, gather) {
                (Phase::CoarseSetup, Some((_, g))) => Some(g),
                _ => decomps.get(m.level),
            };
            match d {
                Some(d) => !d.is_local_pair(m.from, m.to),
                None => m.from != m.to,
            }
        })
        .collect()
}

fn initial_partition(a: &CsrMatrix, config: &FactorConfig) -> ClusterPartition {
    if a.rows() <= config.stop() {
        ClusterPartition::contiguous(a.rows(), a.rows().max(1))
    } else {
        partition_graph(&a.graph(), &PartitionConfig::with_target(config.cluster_size))
    }
}

/// The sequential factorization that the parallel schedules reproduce.
pub fn canonical_factor(
    a: &CsrMatrix,
    flag: SymmetryFlag,
    config: &FactorConfig,
    opts: &ParallelOptions,
) -> Result<(HierarchicalFactor, Vec<DomainDecomposition>)> {
    opts.validate()?;
    let mut planner = ParallelPlanner::new(opts.workers, opts.coloring, opts.owners.clone());
    let f = factor_csr_with(a, flag, config, &mut planner)?;
    if let Some(e) = planner.error.take() {
        return Err(e);
    }
    Ok((f, planner.decomps))
}

/// Bulk-synchronous factorization.
pub fn bsp_factor(a: &CsrMatrix, flag: SymmetryFlag, config: &FactorConfig, opts: &ParallelOptions) -> Result<ParallelFactor> {
    parallel_factor(a, flag, config, opts, Schedule::Bsp)
}

/// Asynchronous factorization.
pub fn async_factor(a: &CsrMatrix, flag: SymmetryFlag, config: &FactorConfig, opts: &ParallelOptions) -> Result<ParallelFactor> {
    parallel_factor(a, flag, config, opts, Schedule::Async)
}

pub fn parallel_factor(
    a: &CsrMatrix,
    flag: SymmetryFlag,
    config: &FactorConfig,
    opts: &ParallelOptions,
    schedule: Schedule,
) -> Result<ParallelFactor> {
    config.validate()?;
    opts.validate()?;
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let p = opts.workers;
    let n = a.rows();
    let stop = config.stop();
    let mut partition = initial_partition(a, config);
    let mut global = Some(assemble(a, &partition, flag)?);
    let mut pattern = block_pattern(global.as_ref().unwrap());
    let mut sizes = partition.sizes();
    let mut dim = n;
    let mut workers: Vec<Worker> = (0..p).map(|w| Worker::new(w, Store::new())).collect();
    let mut planner = ParallelPlanner::new(p, opts.coloring, opts.owners.clone());
    let mut log = CommLog::new(p);
    log.coloring = Some(opts.coloring);
    let mut clock = 0.0;
    let mut levels = Vec::new();
    let mut stats = FactorStats::default();
    let mut stalled = 0;
    let mut gather = None;

    while dim > stop {
        let li = levels.len();
        let prev_owners = planner.owners().to_vec();
        let was_gathered = planner.gathered();
        let order = planner.order(li, &pattern, &sizes);
        if let Some(e) = planner.error.take() {
            return Err(e);
        }
        let decomp = planner.decomps[li].clone();
        let mut sim = Sim { cost: opts.cost, log: &mut log, clock, level: li };
        if li == 0 {
            distribute(&mut workers, global.take().unwrap(), &decomp.owner);
        } else if planner.gathered() && !was_gathered {
            let route = from_owners(&pattern, p, prev_owners)?;
            gather_to_root(&mut workers, &route, &mut sim);
            gather = Some((li, route));
        }
        for w in workers.iter_mut() {
            w.start_level(pattern.m());
        }
        let ctx = LevelCtx::new(&pattern, &decomp, order.clone(), flag, config.policy);
        let mut run = match (opts.backend, schedule) {
            (Backend::Concurrent, _) if p > 1 => sched::run_threads(&mut workers, &ctx, sim.log, li)?,
            (_, Schedule::Bsp) => sched::run_bsp(&mut workers, &ctx, &mut sim)?,
            (_, Schedule::Async) => sched::run_async(&mut workers, &ctx, &mut sim)?,
        };
        clock = sim.clock;
        for w in workers.iter_mut() {
            w.flush_all();
        }

        let mut lstats = LevelStats {
            dofs: dim,
            clusters: pattern.m(),
            max_cluster_size: sizes.iter().copied().max().unwrap_or(0),
            flops: run.flops,
            ..Default::default()
        };
        let mut operators = Vec::with_capacity(order.len());
        for &s in &order {
            let op = run.ops[s].take().expect("every cluster eliminated");
            record(&mut lstats, &mut stats, li, &op);
            operators.push(op);
        }
        if config.check_fill {
            stats.fill_violations += run.violations;
        }

        // Survivors and the next level, assembled by each worker from the
        // blocks it holds.
        let owner = &decomp.owner;
        let nodes: Vec<usize> = (0..pattern.m()).filter(|&s| workers[owner[s]].blocks.contains_key(&(s, s))).collect();
        let node_sizes: Vec<usize> = nodes.iter().map(|&s| workers[owner[s]].blocks[&(s, s)].rows()).collect();
        let mut pos = vec![usize::MAX; pattern.m()];
        for (t, &s) in nodes.iter().enumerate() {
            pos[s] = t;
        }
        let pairs: Vec<(usize, usize)> = workers
            .iter()
            .flat_map(|w| w.blocks.keys().filter(|&&(i, _)| owner[i] == w.id).map(|&(i, j)| (pos[i], pos[j])))
            .collect();
        let spattern = BlockPattern::from_pairs(nodes.len(), pairs);
        let groups =
            if nodes.is_empty() { Vec::new() } else { planner.coarse_groups(li, &nodes, &spattern, &node_sizes, config.cluster_size) };
        let next_owner = planner.owners().to_vec();
        let level = Level { partition, operators, coarse_nodes: nodes.clone(), coarse_sizes: node_sizes.clone() };
        lstats.coarse_dofs = level.coarse_dofs();
        stats.flops += lstats.flops;
        stats.levels.push(lstats);
        check_overflow(&level, li, &mut stalled)?;
        levels.push(level);

        let mut offset = vec![0; nodes.len() + 1];
        for t in 0..nodes.len() {
            offset[t + 1] = offset[t] + node_sizes[t];
        }
        let mut group_of = vec![(0usize, 0usize); pattern.m()];
        let mut clusters = Vec::with_capacity(groups.len());
        let mut group_of_pos = vec![0; nodes.len()];
        for (g, members) in groups.iter().enumerate() {
            let mut local = 0;
            let mut dofs = Vec::new();
            for &t in members {
                group_of[nodes[t]] = (g, local);
                group_of_pos[t] = g;
                local += node_sizes[t];
                dofs.extend(offset[t]..offset[t + 1]);
            }
            clusters.push(dofs);
        }
        let gsizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        for w in workers.iter_mut() {
            let old = std::mem::take(&mut w.blocks);
            for ((i, j), b) in old {
                let ((gi, li_), (gj, lj)) = (group_of[i], group_of[j]);
                if next_owner[gi] != w.id && next_owner[gj] != w.id {
                    continue;
                }
                w.blocks
                    .entry((gi, gj))
                    .or_insert_with(|| DenseMatrix::zeros(gsizes[gi], gsizes[gj]))
                    .set_block(li_, lj, &b);
            }
        }
        pattern = BlockPattern::from_pairs(groups.len(), spattern.pairs().map(|(t, u)| (group_of_pos[t], group_of_pos[u])).collect::<Vec<_>>());
        partition = ClusterPartition::new(offset[nodes.len()], clusters).expect("groups cover survivors");
        sizes = gsizes;
        dim = partition.num_dofs();
    }

    let top_matrix = match global {
        Some(a) => a,
        None => {
            if p > 1 && !planner.gathered() && pattern.m() > 0 {
                let route = from_owners(&pattern, p, planner.owners().to_vec())?;
                let mut sim = Sim { cost: opts.cost, log: &mut log, clock, level: levels.len() };
                gather_to_root(&mut workers, &route, &mut sim);
                clock = sim.clock;
                gather = Some((levels.len(), route));
            }
            let mut m = BlockMatrix::new(sizes.clone(), flag);
            for ((i, j), b) in std::mem::take(&mut workers[0].blocks) {
                m.insert(i, j, b);
            }
            m
        }
    };
    let f0 = crate::dense::flops::read();
    let (top_dim, top) = top_factor(&top_matrix, &partition)?;
    let dt = opts.cost.compute(crate::dense::flops::read().wrapping_sub(f0));
    log.workers[0].busy += dt;
    for t in log.workers.iter_mut().skip(1) {
        t.idle += dt;
    }
    log.add_phase_time("top", dt);
    clock += dt;
    log.makespan = clock;
    let decomps = planner.decomps;
    let factor = HierarchicalFactor { n, flag, config: *config, levels, top_dim, top, stats };
    Ok(ParallelFactor { factor, decomps, log, gather })
}

/// Hands each worker the blocks it owns a row or column of.
fn distribute(workers: &mut [Worker], a: BlockMatrix, owner: &[usize]) {
    for (i, j, b) in a.blocks() {
        let (oi, oj) = (owner[i], owner[j]);
        workers[oi].blocks.insert((i, j), b.clone());
        if oj != oi {
            workers[oj].blocks.insert((i, j), b.clone());
        }
    }
}

/// Parent of each worker in a breadth-first tree over the neighbor graph,
/// rooted at worker 0, and the sends deepest first. Workers that are not
/// connected send straight to the root.
pub(crate) fn gather_tree(n1: &[BTreeSet<usize>]) -> Vec<(usize, usize)> {
    let p = n1.len();
    let mut depth = vec![usize::MAX; p];
    let mut parent = vec![0; p];
    depth[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &n1[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    for d in depth.iter_mut().skip(1) {
        if *d == usize::MAX {
            *d = 1;
        }
    }
    let mut sends: Vec<(usize, usize)> = (1..p).map(|w| (w, parent[w])).collect();
    sends.sort_by_key(|&(w, _)| (std::cmp::Reverse(depth[w]), w));
    sends
}

/// Moves every block to worker 0 along the gather tree.
fn gather_to_root(workers: &mut [Worker], route: &DomainDecomposition, sim: &mut Sim) {
    let start = sim.clock;
    let mut ready = vec![start; workers.len()];
    for (w, parent) in gather_tree(&route.n1) {
        let blocks = std::mem::take(&mut workers[w].blocks);
        let bytes: usize = blocks.values().map(|b| b.bytes() + 16).sum();
        sim.log.send(MessageRecord { from: w, to: parent, level: sim.level, phase: Phase::CoarseSetup, bytes, time: ready[w] });
        sim.log.deliver(parent, sim.level, bytes);
        let arrive = ready[w] + sim.cost.message(bytes);
        ready[parent] = ready[parent].max(arrive);
        workers[parent].blocks.extend(blocks);
    }
    let end = ready[0];
    for t in sim.log.workers.iter_mut() {
        t.idle += end - start;
    }
    sim.log.add_phase_time("coarse-setup", end - start);
    sim.clock = end;
}
