//! Ownership of clusters, boundary classes and boundary coloring.

use crate::block::BlockPattern;
use crate::error::{Error, Result};
use crate::partition::partition_k;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    /// Boundary cluster: has a neighbor on another worker.
    D1,
    /// Local neighbor of a boundary cluster.
    D2,
    D3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColoringMode {
    /// Distance-2 coloring of all boundary clusters.
    #[default]
    Strict,
    /// Only pairs on different workers need different colors.
    OwnerAware,
    /// Every boundary cluster gets color 0. Invalid whenever two workers
    /// have boundary clusters within distance 2; the bulk-synchronous
    /// schedule then stops with `DeadlockDetected`.
    Trivial,
}

impl std::str::FromStr for ColoringMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ColoringMode::Strict),
            "owner-aware" => Ok(ColoringMode::OwnerAware),
            "trivial" => Ok(ColoringMode::Trivial),
            _ => Err(Error::InvalidConfig(format!("unknown coloring mode {s:?}"))),
        }
    }
}

/// Assignment of the clusters of one level to workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDecomposition {
    pub p: usize,
    pub owner: Vec<usize>,
    pub class: Vec<NodeClass>,
    pub n1: Vec<BTreeSet<usize>>,
    pub n2: Vec<BTreeSet<usize>>,
    /// Color of each boundary cluster; `None` elsewhere.
    pub color: Vec<Option<usize>>,
    pub mode: ColoringMode,
}

/// Splits the quotient graph into `p` parts of balanced DOF weight.
pub fn decompose(pattern: &BlockPattern, sizes: &[usize], p: usize) -> Result<DomainDecomposition> {
    let m = pattern.m();
    if p == 0 || (p > m && m > 0) {
        return Err(Error::InvalidConfig(format!("worker count {p} must be in 1..={m}")));
    }
    let parts = partition_k(&pattern.graph(), sizes, p);
    let mut owner = vec![0; m];
    for (w, part) in parts.iter().enumerate() {
        for &c in part {
            owner[c] = w;
        }
    }
    from_owners(pattern, p, owner)
}

/// Decomposition with explicitly assigned owners.
pub fn from_owners(pattern: &BlockPattern, p: usize, owner: Vec<usize>) -> Result<DomainDecomposition> {
    if owner.len() != pattern.m() {
        return Err(Error::DimensionMismatch { expected: pattern.m(), got: owner.len() });
    }
    if p == 0 || owner.iter().any(|&w| w >= p) {
        return Err(Error::InvalidConfig("owner out of range".into()));
    }
    let m = pattern.m();
    let d1: Vec<bool> = (0..m).map(|s| pattern.neighbors(s).iter().any(|&j| owner[j] != owner[s])).collect();
    let class = (0..m)
        .map(|s| {
            if d1[s] {
                NodeClass::D1
            } else if pattern.neighbors(s).iter().any(|&j| d1[j]) {
                NodeClass::D2
            } else {
                NodeClass::D3
            }
        })
        .collect();
    let mut n1 = vec![BTreeSet::new(); p];
    for (i, j) in pattern.pairs() {
        if owner[i] != owner[j] {
            n1[owner[i]].insert(owner[j]);
        }
    }
    let n2 = (0..p)
        .map(|w| {
            let mut set: BTreeSet<usize> = n1[w].iter().flat_map(|&q| n1[q].iter().copied()).collect();
            set.remove(&w);
            set
        })
        .collect();
    Ok(DomainDecomposition { p, owner, class, n1, n2, color: vec![None; m], mode: ColoringMode::Strict })
}

impl DomainDecomposition {
    pub fn num_colors(&self) -> usize {
        self.color.iter().flatten().map(|c| c + 1).max().unwrap_or(0)
    }

    /// Whether `from` may message `to`.
    pub fn is_local_pair(&self, from: usize, to: usize) -> bool {
        from == to || self.n1[from].contains(&to) || self.n2[from].contains(&to)
    }

    /// Clusters owned by `w` in ascending id.
    pub fn owned(&self, w: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&s| self.owner[s] == w).collect()
    }

    /// Elimination order: boundary clusters by color, then D2, then D3,
    /// ties by cluster id.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.owner.len()).collect();
        order.sort_by_key(|&s| {
            let rank = match self.class[s] {
                NodeClass::D1 => self.color[s].expect("boundary clusters are colored"),
                NodeClass::D2 => usize::MAX - 1,
                NodeClass::D3 => usize::MAX,
            };
            (rank, s)
        });
        order
    }

    /// Colors the boundary clusters and stores the result.
    pub fn color_d1(&mut self, pattern: &BlockPattern, mode: ColoringMode) {
        let strict = greedy_coloring(self, pattern, ColoringMode::Strict);
        self.color = match mode {
            ColoringMode::Trivial => (0..pattern.m()).map(|s| (self.class[s] == NodeClass::D1).then_some(0)).collect(),
            ColoringMode::Strict => strict,
            ColoringMode::OwnerAware => {
                // Greedy on a subset of constraints may still come out worse.
                let relaxed = greedy_coloring(self, pattern, ColoringMode::OwnerAware);
                let count = |c: &[Option<usize>]| c.iter().flatten().map(|x| x + 1).max().unwrap_or(0);
                if count(&relaxed) <= count(&strict) {
                    relaxed
                } else {
                    strict
                }
            }
        };
        self.mode = mode;
    }
}

/// Boundary clusters within distance 2 of `s`.
fn ball2(pattern: &BlockPattern, s: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for &a in pattern.row(s) {
        out.insert(a);
        out.extend(pattern.row(a).iter().copied());
    }
    out.remove(&s);
    out
}

fn greedy_coloring(d: &DomainDecomposition, pattern: &BlockPattern, mode: ColoringMode) -> Vec<Option<usize>> {
    let m = pattern.m();
    let mut color = vec![None; m];
    for s in 0..m {
        if d.class[s] != NodeClass::D1 {
            continue;
        }
        let used: BTreeSet<usize> = ball2(pattern, s)
            .into_iter()
            .filter(|&t| mode == ColoringMode::Strict || d.owner[t] != d.owner[s])
            .filter_map(|t| color[t])
            .collect();
        color[s] = Some((0..).find(|c| !used.contains(c)).unwrap());
    }
    color
}

/// Same-colored boundary pairs on different workers within distance 2,
/// found by scanning all pairs.
pub fn coloring_violations(d: &DomainDecomposition, pattern: &BlockPattern) -> Vec<(usize, usize)> {
    let d1: Vec<usize> = (0..pattern.m()).filter(|&s| d.class[s] == NodeClass::D1).collect();
    let mut bad = Vec::new();
    for (x, &s) in d1.iter().enumerate() {
        let dist = pattern.distances_from(s);
        for &t in &d1[x + 1..] {
            if d.owner[s] != d.owner[t] && dist[t] <= 2 && d.color[s] == d.color[t] {
                bad.push((s, t));
            }
        }
    }
    bad
}
