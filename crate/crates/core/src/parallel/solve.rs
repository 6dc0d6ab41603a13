//! Distributed application of a parallel factorization.

use super::comm::{CommLog, MessageRecord, Phase};
use super::{gather_tree, ParallelFactor};
use crate::error::{Error, Result};
use crate::factor::ClusterOperator;
use std::collections::BTreeMap;

/// Per-worker segments of one level. `segs[w][s]` is meaningful only on the
/// owner of `s`.
struct Segments {
    segs: Vec<Vec<Vec<f64>>>,
    owner: Vec<usize>,
    /// Bytes per (from, to) for the current sweep.
    traffic: BTreeMap<(usize, usize), usize>,
}

impl Segments {
    fn send(&mut self, from: usize, to: usize, len: usize) {
        if from != to {
            *self.traffic.entry((from, to)).or_default() += 8 * len;
        }
    }

    fn forward(&mut self, op: &ClusterOperator) -> Vec<f64> {
        if op.is_identity() {
            return Vec::new();
        }
        let s = op.cluster;
        let me = self.owner[s];
        let ys = std::mem::take(&mut self.segs[me][s]);
        let yf = op.fwd_fine.matvec(&ys);
        self.segs[me][s] = op.fwd_coarse.matvec(&ys);
        for c in &op.couplings {
            // The contribution is computed here and subtracted by the owner.
            let t = c.b.matvec(&yf);
            let to = self.owner[c.node];
            self.send(me, to, t.len());
            for (a, b) in self.segs[to][c.node].iter_mut().zip(&t) {
                *a -= b;
            }
        }
        yf
    }

    fn backward(&mut self, op: &ClusterOperator, fine: &[f64]) {
        if op.is_identity() {
            return;
        }
        let s = op.cluster;
        let me = self.owner[s];
        let mut xf = fine.to_vec();
        for c in &op.couplings {
            let from = self.owner[c.node];
            let xj = &self.segs[from][c.node];
            let len = xj.len();
            let t = c.c().tr_matvec(xj);
            self.send(from, me, len);
            for (a, b) in xf.iter_mut().zip(&t) {
                *a -= b;
            }
        }
        let mut x = op.bwd_fine.matvec(&xf);
        let xc = op.bwd_coarse.matvec(&self.segs[me][s]);
        for (a, b) in x.iter_mut().zip(&xc) {
            *a += b;
        }
        self.segs[me][s] = x;
    }

    fn flush(&mut self, log: &mut CommLog, level: usize) {
        for ((from, to), bytes) in std::mem::take(&mut self.traffic) {
            log.send(MessageRecord { from, to, level, phase: Phase::Solve, bytes, time: 0.0 });
            log.deliver(to, level, bytes);
        }
    }
}

/// Solves with a factorization from the parallel runtime, keeping each
/// cluster's segment on its owner. Returns the solution and the messages
/// the solve needed.
pub fn parallel_solve(pf: &ParallelFactor, b: &[f64]) -> Result<(Vec<f64>, CommLog)> {
    let f = &pf.factor;
    if b.len() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, got: b.len() });
    }
    let p = pf.workers();
    let mut log = CommLog::new(p);
    let mut v = b.to_vec();
    let mut saved = Vec::with_capacity(f.levels.len());
    for (li, level) in f.levels.iter().enumerate() {
        let owner = pf.decomps[li].owner.clone();
        let mut st = Segments { segs: vec![vec![Vec::new(); owner.len()]; p], owner, traffic: BTreeMap::new() };
        for (s, c) in level.partition.clusters().iter().enumerate() {
            st.segs[st.owner[s]][s] = c.iter().map(|&d| v[d]).collect();
        }
        if let Some((gl, route)) = &pf.gather {
            if *gl == li {
                let bytes = level.partition.clusters().iter().map(|c| 8 * c.len()).collect();
                gather_log(&mut log, route, li, bytes);
            }
        }
        let fines: Vec<Vec<f64>> = level.operators.iter().map(|op| st.forward(op)).collect();
        st.flush(&mut log, li);
        v = level.coarse_nodes.iter().flat_map(|&s| st.segs[st.owner[s]][s].iter().copied()).collect();
        saved.push((st, fines));
    }
    if let Some((gl, route)) = &pf.gather {
        if *gl == f.levels.len() {
            // Top-level cluster sizes are not kept; spread the vector evenly.
            let m = route.owner.len().max(1);
            let bytes = (0..m).map(|c| 8 * (v.len() * (c + 1) / m - v.len() * c / m)).collect();
            gather_log(&mut log, route, *gl, bytes);
        }
    }
    if let Some(top) = &f.top {
        top.solve_in_place(&mut v);
    }
    for (li, (level, (mut st, fines))) in f.levels.iter().zip(saved).enumerate().rev() {
        let mut off = 0;
        for (&s, &k) in level.coarse_nodes.iter().zip(&level.coarse_sizes) {
            let w = st.owner[s];
            st.segs[w][s] = v[off..off + k].to_vec();
            off += k;
        }
        for (op, fine) in level.operators.iter().zip(&fines).rev() {
            st.backward(op, fine);
        }
        st.flush(&mut log, li);
        let mut out = vec![0.0; level.dofs()];
        for (s, c) in level.partition.clusters().iter().enumerate() {
            for (&d, &x) in c.iter().zip(&st.segs[st.owner[s]][s]) {
                out[d] = x;
            }
        }
        v = out;
    }
    Ok((v, log))
}

/// Records the move of a vector to worker 0 along the gather tree, given the
/// bytes of each cluster under the pre-gather ownership.
fn gather_log(log: &mut CommLog, route: &super::DomainDecomposition, level: usize, cluster_bytes: Vec<usize>) {
    let mut carried = vec![0usize; route.p];
    for (s, b) in cluster_bytes.into_iter().enumerate() {
        carried[route.owner[s]] += b;
    }
    for (w, parent) in gather_tree(&route.n1) {
        let bytes = carried[w];
        carried[parent] += bytes;
        log.send(MessageRecord { from: w, to: parent, level, phase: Phase::CoarseSetup, bytes, time: 0.0 });
        log.deliver(parent, level, bytes);
    }
}
