//! Algebraic clustering by recursive BFS bisection.

use crate::block::{BlockPattern, ClusterPartition};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Target cluster size `r` (in DOFs).
    pub target_size: usize,
    pub max_imbalance: f64,
    /// Accepted for interface stability; the algorithm is deterministic and
    /// does not draw random numbers.
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { target_size: 64, max_imbalance: 1.5, seed: 0 }
    }
}

impl PartitionConfig {
    pub fn with_target(r: usize) -> Self {
        PartitionConfig { target_size: r, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::InvalidConfig("cluster size must be >= 1".into()));
        }
        if !(self.max_imbalance >= 1.0) {
            return Err(Error::InvalidConfig("max_imbalance must be >= 1".into()));
        }
        Ok(())
    }
}

/// Partitions the scalar graph `adj` (symmetric, no self loops required).
pub fn partition_graph(adj: &[Vec<usize>], config: &PartitionConfig) -> ClusterPartition {
    let weights = vec![1; adj.len()];
    let groups = partition_weighted(adj, &weights, config.target_size);
    ClusterPartition::new(adj.len(), groups).expect("bisection yields a partition")
}

/// Groups the clusters of a coarse level. `weights[i]` is the number of
/// coarse DOFs carried by node `i`; `target` is measured in DOFs.
pub fn coarse_partition(pattern: &BlockPattern, weights: &[usize], config: &PartitionConfig) -> Vec<Vec<usize>> {
    partition_weighted(&pattern.graph(), weights, config.target_size)
}

/// Recursive bisection into exactly `parts` pieces of about equal weight
/// (fewer only when there are fewer vertices). Disconnected graphs are
/// bisected as a whole.
pub fn partition_k(adj: &[Vec<usize>], weights: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut bis = Bisector {
        adj,
        weights,
        target: 1,
        member: vec![0; n],
        seen: vec![0; n],
        dist: vec![0; n],
        set_stamp: 0,
        bfs_stamp: 0,
    };
    let mut out = Vec::new();
    if n > 0 {
        bis.split_into((0..n).collect(), parts.clamp(1, n), &mut out, true);
    }
    for p in out.iter_mut() {
        p.sort_unstable();
    }
    out
}

/// Recursive bisection of a vertex-weighted graph into parts of weight about
/// `target`. Parts are returned in bisection-tree order.
pub fn partition_weighted(adj: &[Vec<usize>], weights: &[usize], target: usize) -> Vec<Vec<usize>> {
    let n = adj.len();
    let target = target.max(1);
    let mut bis = Bisector {
        adj,
        weights,
        target,
        member: vec![0; n],
        seen: vec![0; n],
        dist: vec![0; n],
        set_stamp: 0,
        bfs_stamp: 0,
    };
    let mut parts = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut pending_w = 0;
    for comp in components(adj) {
        let w: usize = comp.iter().map(|&v| weights[v].max(1)).sum();
        if w > target {
            bis.split(comp, &mut parts);
            continue;
        }
        // Small components are packed greedily in discovery order.
        if pending_w + w > target && !pending.is_empty() {
            parts.push(std::mem::take(&mut pending));
            pending_w = 0;
        }
        pending.extend(comp);
        pending_w += w;
    }
    if !pending.is_empty() {
        parts.push(pending);
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    parts
}

fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

const LANDMARKS: usize = 8;

struct Bisector<'a> {
    adj: &'a [Vec<usize>],
    weights: &'a [usize],
    target: usize,
    member: Vec<usize>,
    seen: Vec<usize>,
    dist: Vec<usize>,
    set_stamp: usize,
    bfs_stamp: usize,
}

impl Bisector<'_> {
    fn weight(&self, set: &[usize]) -> usize {
        set.iter().map(|&v| self.weights[v].max(1)).sum()
    }

    fn split(&mut self, set: Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let q = self.weight(&set).div_ceil(self.target);
        self.split_into(set, q, out, false);
    }

    /// Splits `set` into `q` parts. With `exact` the part count is fixed by
    /// `q` rather than re-derived from the target at each step.
    fn split_into(&mut self, set: Vec<usize>, q: usize, out: &mut Vec<Vec<usize>>, exact: bool) {
        let w = self.weight(&set);
        if q <= 1 || set.len() <= 1 {
            out.push(set);
            return;
        }
        let q1 = first_share(q);
        let goal = (w as f64 * q1 as f64 / q as f64).round() as usize;
        let (order, cut) = self.best_split(&set, goal);
        let mut left = order[..cut].to_vec();
        let mut right = order[cut..].to_vec();
        left.sort_unstable();
        right.sort_unstable();
        // Orient each split so the half holding the smaller id comes first.
        let left_first = left[0] < right[0];
        if !left_first {
            std::mem::swap(&mut left, &mut right);
        }
        if exact {
            // Keep the part counts with the halves they were sized for.
            let (ql, qr) = if left_first { (q1, q - q1) } else { (q - q1, q1) };
            let (ql, qr) = (ql.min(left.len()), qr.min(right.len()));
            self.split_into(left, ql, out, true);
            self.split_into(right, qr, out, true);
        } else {
            self.split(left, out);
            self.split(right, out);
        }
    }

    fn induced_degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&u| self.member[u] == self.set_stamp).count()
    }

    /// Prefix length of `order` whose weight is closest to `goal`.
    fn cut_point(&self, order: &[usize], goal: usize) -> usize {
        let mut acc = 0;
        let mut cut = 0;
        for (p, &v) in order.iter().enumerate() {
            let wv = self.weights[v].max(1);
            if acc + wv > goal && (acc + wv - goal) > (goal - acc) {
                break;
            }
            acc += wv;
            cut = p + 1;
            if acc >= goal {
                break;
            }
        }
        cut.clamp(1, order.len() - 1)
    }

    fn cut_edges(&mut self, order: &[usize], cut: usize) -> usize {
        self.bfs_stamp += 1;
        for &v in &order[..cut] {
            self.seen[v] = self.bfs_stamp;
        }
        let mut edges = 0;
        for &u in &order[..cut] {
            for &v in &self.adj[u] {
                if self.member[v] == self.set_stamp && self.seen[v] != self.bfs_stamp {
                    edges += 1;
                }
            }
        }
        edges
    }

    /// Tries the plain level ordering and orderings by distance differences
    /// between pairs of peripheral landmarks; keeps the smallest cut.
    fn best_split(&mut self, set: &[usize], goal: usize) -> (Vec<usize>, usize) {
        let base = self.level_order(set);
        let base_cut = self.cut_point(&base, goal);
        if base.len() < 8 || base.len() >= 1 << 21 {
            return (base, base_cut);
        }
        self.set_stamp += 1;
        for &v in set {
            self.member[v] = self.set_stamp;
        }
        // Landmarks maximize the summed distance to the previous ones, starting
        // at a pseudo-peripheral vertex; ties go to low degree.
        let first = self.pseudo_peripheral(set[0]);
        let mut landmarks = vec![first];
        let mut dists: Vec<Vec<usize>> = Vec::with_capacity(LANDMARKS);
        let mut total = vec![0usize; set.len()];
        loop {
            let l = *landmarks.last().unwrap();
            let order = self.bfs(l);
            if order.len() != set.len() {
                // Disconnected subgraph: keep the component-aware ordering.
                return (base, base_cut);
            }
            let d: Vec<usize> = set.iter().map(|&v| self.dist[v]).collect();
            for (t, &x) in total.iter_mut().zip(&d) {
                *t += x;
            }
            dists.push(d);
            if landmarks.len() == LANDMARKS {
                break;
            }
            let next = (0..set.len())
                .filter(|&i| !landmarks.contains(&set[i]))
                .max_by_key(|&i| (total[i], std::cmp::Reverse(self.induced_degree(set[i])), std::cmp::Reverse(set[i])));
            match next {
                Some(i) => landmarks.push(set[i]),
                None => break,
            }
        }
        // Cuts that split a level set of their ordering are charged 3/2 of
        // their edges: on structured meshes they leave ragged clusters with
        // extra neighbors further down the tree.
        let mut best_cost = 3 * self.cut_edges(&base, base_cut);
        let mut best = (base, base_cut);
        for a in 0..landmarks.len() {
            for b in 0..landmarks.len() {
                if a == b {
                    continue;
                }
                // Key: (d_a − d_b, d_a, position) packed into one integer.
                let offset = set.len() as u64;
                let mut keys: Vec<u64> = (0..set.len())
                    .map(|i| {
                        let diff = dists[a][i] as u64 + offset - dists[b][i] as u64;
                        (diff << 42) | ((dists[a][i] as u64) << 21) | i as u64
                    })
                    .collect();
                keys.sort_unstable();
                let order: Vec<usize> = keys.iter().map(|&k| set[(k & ((1 << 21) - 1)) as usize]).collect();
                let cut = self.cut_point(&order, goal);
                let aligned = keys[cut - 1] >> 42 != keys[cut] >> 42;
                let cost = self.cut_edges(&order, cut) * if aligned { 2 } else { 3 };
                if cost < best_cost {
                    best_cost = cost;
                    best = (order, cut);
                }
            }
        }
        best
    }

    /// BFS ordering of `set` (restricted to the induced subgraph) from a
    /// pseudo-peripheral vertex; disconnected pieces follow in id order.
    fn level_order(&mut self, set: &[usize]) -> Vec<usize> {
        self.set_stamp += 1;
        for &v in set {
            self.member[v] = self.set_stamp;
        }
        let mut order = Vec::with_capacity(set.len());
        for &seed in set {
            if self.member[seed] != self.set_stamp {
                continue;
            }
            let start = self.pseudo_peripheral(seed);
            let piece = self.bfs(start);
            for &v in &piece {
                self.member[v] = 0;
            }
            order.extend(piece);
        }
        order
    }

    fn bfs(&mut self, start: usize) -> Vec<usize> {
        self.bfs_stamp += 1;
        let mut order = vec![start];
        self.seen[start] = self.bfs_stamp;
        self.dist[start] = 0;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &v in &self.adj[u] {
                if self.member[v] == self.set_stamp && self.seen[v] != self.bfs_stamp {
                    self.seen[v] = self.bfs_stamp;
                    self.dist[v] = self.dist[u] + 1;
                    order.push(v);
                }
            }
        }
        order
    }

    fn pseudo_peripheral(&mut self, seed: usize) -> usize {
        let mut root = seed;
        let mut ecc = 0;
        for _ in 0..8 {
            let order = self.bfs(root);
            let far_dist = self.dist[*order.last().unwrap()];
            // Among the last level, choose the smallest degree, then the smallest id.
            let far = order
                .iter()
                .copied()
                .filter(|&v| self.dist[v] == far_dist)
                .min_by_key(|&v| (self.induced_degree(v), v))
                .unwrap();
            if far_dist <= ecc {
                break;
            }
            ecc = far_dist;
            root = far;
        }
        root
    }
}

/// Part count of the first half when splitting into `q`. Odd composite
/// counts split along their smallest prime factor so a 27-way split becomes
/// 9 + 18 rather than 13 + 14, which keeps cuts planar on regular grids.
fn first_share(q: usize) -> usize {
    if q % 2 == 0 {
        return q / 2;
    }
    match (3..).step_by(2).take_while(|s| s * s <= q).find(|s| q % s == 0) {
        Some(s) => q / s * (s / 2),
        None => q / 2,
    }
}

/// Edge cut of a partition on a scalar graph.
pub fn edge_cut(adj: &[Vec<usize>], part: &ClusterPartition) -> usize {
    let mut cut = 0;
    for (u, row) in adj.iter().enumerate() {
        for &v in row {
            if u < v && part.cluster_of(u) != part.cluster_of(v) {
                cut += 1;
            }
        }
    }
    cut
}

/// Largest hop diameter of any cluster, measured inside its induced subgraph.
pub fn max_cluster_diameter(adj: &[Vec<usize>], part: &ClusterPartition) -> usize {
    let mut best = 0;
    let mut dist = vec![usize::MAX; adj.len()];
    for c in 0..part.num_clusters() {
        let members = part.cluster(c);
        for &s in members {
            let mut queue = VecDeque::from([s]);
            dist[s] = 0;
            let mut touched = vec![s];
            while let Some(u) = queue.pop_front() {
                best = best.max(dist[u]);
                for &v in &adj[u] {
                    if dist[v] == usize::MAX && part.cluster_of(v) == c {
                        dist[v] = dist[u] + 1;
                        touched.push(v);
                        queue.push_back(v);
                    }
                }
            }
            for v in touched {
                dist[v] = usize::MAX;
            }
        }
    }
    best
}
