//! Worker state shared by the schedules.
//!
//! Every block `(i, j)` lives on the owners of `i` and of `j`. Eliminating a
//! cluster produces updates that are sent to those owners, tagged with the
//! cluster's rank in the canonical order. A worker applies the updates of a
//! key lazily and always in rank order, so each copy of a block sees exactly
//! the sequence of changes the sequential factorization applies.

use super::comm::Phase;
use super::decomp::{DomainDecomposition, NodeClass};
use crate::block::{BlockPattern, SymmetryFlag};
use crate::dense::{flops, DenseMatrix, RankPolicy};
use crate::error::{Error, Result};
use crate::factor::{eliminate_cluster, BlockEffect, ClusterOperator, ClusterView};
use std::collections::BTreeMap;

pub(crate) type Key = (usize, usize);
pub(crate) type Store = BTreeMap<Key, DenseMatrix>;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Sub(DenseMatrix),
    Set(DenseMatrix),
    Remove,
}

#[derive(Debug, Clone)]
pub(crate) struct Update {
    pub rank: usize,
    pub seq: usize,
    pub key: Key,
    pub op: Op,
}

impl Update {
    fn bytes(&self) -> usize {
        match &self.op {
            Op::Sub(m) | Op::Set(m) => m.bytes() + 16,
            Op::Remove => 16,
        }
    }
}

/// Updates and completion notices for one destination.
#[derive(Debug, Clone, Default)]
pub(crate) struct Payload {
    pub updates: Vec<Update>,
    pub done: Vec<usize>,
}

impl Payload {
    pub fn bytes(&self) -> usize {
        self.updates.iter().map(Update::bytes).sum::<usize>() + 8 * self.done.len()
    }

    pub fn merge(&mut self, other: Payload) {
        self.updates.extend(other.updates);
        self.done.extend(other.done);
    }
}

/// Read-only description of one level.
pub(crate) struct LevelCtx<'a> {
    pub pattern: &'a BlockPattern,
    pub square: BlockPattern,
    pub decomp: &'a DomainDecomposition,
    pub order: Vec<usize>,
    pub rank: Vec<usize>,
    /// Earlier clusters within distance two.
    pub preds: Vec<Vec<usize>>,
    /// Later clusters within distance two.
    pub dependents: Vec<Vec<usize>>,
    pub flag: SymmetryFlag,
    pub policy: RankPolicy,
}

impl<'a> LevelCtx<'a> {
    pub fn new(
        pattern: &'a BlockPattern,
        decomp: &'a DomainDecomposition,
        order: Vec<usize>,
        flag: SymmetryFlag,
        policy: RankPolicy,
    ) -> Self {
        let m = pattern.m();
        let mut rank = vec![0; m];
        for (r, &s) in order.iter().enumerate() {
            rank[s] = r;
        }
        let square = pattern.pattern_square();
        let mut preds = vec![Vec::new(); m];
        let mut dependents = vec![Vec::new(); m];
        for s in 0..m {
            for &t in square.row(s) {
                if rank[t] < rank[s] {
                    preds[s].push(t);
                } else if rank[t] > rank[s] {
                    dependents[s].push(t);
                }
            }
        }
        LevelCtx { pattern, square, decomp, order, rank, preds, dependents, flag, policy }
    }

    pub fn owner(&self, s: usize) -> usize {
        self.decomp.owner[s]
    }

    pub fn phase(&self, s: usize) -> Phase {
        match self.decomp.class[s] {
            NodeClass::D1 => Phase::D1Round(self.decomp.color[s].unwrap_or(0)),
            _ => Phase::D2Round,
        }
    }

    /// Scheduling priority: boundary clusters first, then D2, then D3.
    pub fn priority(&self, s: usize) -> (NodeClass, usize) {
        (self.decomp.class[s], self.rank[s])
    }
}

/// Result of eliminating one cluster on its owner.
pub(crate) struct Outcome {
    pub op: ClusterOperator,
    /// Payloads by destination worker, including the owner itself.
    pub payloads: BTreeMap<usize, Payload>,
    pub flops: u64,
    pub violations: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Worker {
    pub id: usize,
    pub blocks: Store,
    pending: BTreeMap<Key, Vec<(usize, usize, Op)>>,
    done: Vec<bool>,
}

impl Worker {
    pub fn new(id: usize, blocks: Store) -> Self {
        Worker { id, blocks, ..Default::default() }
    }

    pub fn start_level(&mut self, m: usize) {
        debug_assert!(self.pending.is_empty());
        self.done = vec![false; m];
    }

    pub fn receive(&mut self, p: Payload) {
        for u in p.updates {
            self.pending.entry(u.key).or_default().push((u.rank, u.seq, u.op));
        }
        for s in p.done {
            self.done[s] = true;
        }
    }

    pub fn ready(&self, ctx: &LevelCtx, s: usize) -> bool {
        ctx.preds[s].iter().all(|&t| self.done[t])
    }

    fn flush_key(&mut self, key: Key, limit: usize) {
        let Some(mut list) = self.pending.remove(&key) else { return };
        list.sort_by_key(|e| (e.0, e.1));
        let rest = list.split_off(list.partition_point(|e| e.0 < limit));
        for (_, _, op) in list {
            match op {
                Op::Sub(d) => match self.blocks.get_mut(&key) {
                    Some(b) => b.sub_assign(&d),
                    None => {
                        self.blocks.insert(key, d.neg());
                    }
                },
                Op::Set(b) => {
                    self.blocks.insert(key, b);
                }
                Op::Remove => {
                    self.blocks.remove(&key);
                }
            }
        }
        if !rest.is_empty() {
            self.pending.insert(key, rest);
        }
    }

    /// Applies everything received. Only valid once all messages of the
    /// level have arrived.
    pub fn flush_all(&mut self) {
        let keys: Vec<Key> = self.pending.keys().copied().collect();
        for k in keys {
            self.flush_key(k, usize::MAX);
        }
    }

    /// Eliminates `s`, which must be owned here and ready. The owner's own
    /// payload is returned with the others and not yet applied.
    pub fn eliminate(&mut self, ctx: &LevelCtx, s: usize) -> Result<Outcome> {
        let r = ctx.rank[s];
        let keys: Vec<Key> = self.pending.keys().filter(|&&(i, j)| i == s || j == s).copied().collect();
        for k in keys {
            self.flush_key(k, r);
        }
        let a_ss = self.blocks.get(&(s, s)).ok_or(Error::SingularDiagonal(s))?;
        let mut neighbors = Vec::new();
        let mut separated = Vec::new();
        let mut row_keys = Vec::new();
        for (&(_, j), a_sj) in self.blocks.range((s, 0)..=(s, usize::MAX)) {
            row_keys.push(j);
            if j == s {
                continue;
            }
            let a_js = self.blocks.get(&(j, s)).expect("stored structure is symmetric");
            if ctx.pattern.contains(s, j) {
                neighbors.push((j, a_sj, a_js));
            } else {
                separated.push((j, a_sj, a_js));
            }
        }
        let view = ClusterView { s, a_ss, neighbors, separated };
        let f0 = flops::read();
        let elim = eliminate_cluster(&view, ctx.flag, ctx.policy)?;
        let used = flops::read().wrapping_sub(f0);

        let mut updates = Vec::new();
        if elim.resize.is_some() {
            for &j in &row_keys {
                updates.push(((s, j), Op::Remove));
                if j != s {
                    updates.push(((j, s), Op::Remove));
                }
            }
        }
        let mut violations = 0;
        for e in elim.effects {
            let key = e.key();
            if !ctx.square.contains(key.0, key.1) {
                violations += 1;
            }
            let op = match e {
                BlockEffect::Sub { delta, .. } => Op::Sub(delta),
                BlockEffect::Set { block, .. } => Op::Set(block),
            };
            updates.push((key, op));
        }
        let mut payloads: BTreeMap<usize, Payload> = BTreeMap::new();
        payloads.entry(self.id).or_default().done.push(s);
        for &d in &ctx.dependents[s] {
            let w = ctx.owner(d);
            let p = payloads.entry(w).or_default();
            if p.done.last() != Some(&s) {
                p.done.push(s);
            }
        }
        for (seq, (key, op)) in updates.into_iter().enumerate() {
            let (oi, oj) = (ctx.owner(key.0), ctx.owner(key.1));
            if oi != oj {
                let u = Update { rank: r, seq, key, op: op.clone() };
                payloads.entry(oj).or_default().updates.push(u);
            }
            payloads.entry(oi).or_default().updates.push(Update { rank: r, seq, key, op });
        }
        Ok(Outcome { op: elim.op, payloads, flops: used, violations })
    }
}
