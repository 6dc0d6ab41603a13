//! Level planner that follows worker ownership.

use super::decomp::{decompose, from_owners, ColoringMode, DomainDecomposition};
use crate::block::BlockPattern;
use crate::error::Result;
use crate::factor::LevelPlanner;
use crate::partition::partition_weighted;

/// Orders each level canonically (colors, then D2, then D3, ties by id) and
/// groups survivors only with survivors of the same worker, so coarse
/// clusters inherit the owner of their fine parents. Once a level has fewer
/// than `4p` clusters everything moves to worker 0.
#[derive(Debug, Clone)]
pub struct ParallelPlanner {
    pub p: usize,
    pub mode: ColoringMode,
    initial: Option<Vec<usize>>,
    owners: Vec<usize>,
    pub decomps: Vec<DomainDecomposition>,
    /// First level run on worker 0 alone.
    pub gathered_at: Option<usize>,
    pub error: Option<crate::error::Error>,
}

impl ParallelPlanner {
    pub fn new(p: usize, mode: ColoringMode, initial_owners: Option<Vec<usize>>) -> Self {
        ParallelPlanner {
            p,
            mode,
            initial: initial_owners,
            owners: Vec::new(),
            decomps: Vec::new(),
            gathered_at: None,
            error: None,
        }
    }

    pub fn gathered(&self) -> bool {
        self.gathered_at.is_some()
    }

    fn plan(&mut self, level: usize, pattern: &BlockPattern, sizes: &[usize]) -> Result<DomainDecomposition> {
        let m = pattern.m();
        if self.p > 1 && !self.gathered() && m < 4 * self.p {
            self.gathered_at = Some(level);
        }
        let owners = if self.gathered() || self.p == 1 {
            vec![0; m]
        } else if level == 0 {
            match self.initial.take() {
                Some(o) => o,
                None => return decompose(pattern, sizes, self.p),
            }
        } else {
            std::mem::take(&mut self.owners)
        };
        from_owners(pattern, self.p, owners)
    }

    pub fn owners(&self) -> &[usize] {
        &self.owners
    }
}

impl LevelPlanner for ParallelPlanner {
    fn order(&mut self, level: usize, pattern: &BlockPattern, sizes: &[usize]) -> Vec<usize> {
        let mut d = match self.plan(level, pattern, sizes) {
            Ok(d) => d,
            Err(e) => {
                // The trait cannot fail; fall back to one worker and keep the error.
                self.error = Some(e);
                from_owners(pattern, self.p.max(1), vec![0; pattern.m()]).expect("single owner is valid")
            }
        };
        d.color_d1(pattern, self.mode);
        let order = d.canonical_order();
        self.owners = d.owner.clone();
        self.decomps.push(d);
        order
    }

    fn coarse_groups(
        &mut self,
        _level: usize,
        nodes: &[usize],
        pattern: &BlockPattern,
        weights: &[usize],
        target: usize,
    ) -> Vec<Vec<usize>> {
        let owner_of: Vec<usize> = nodes.iter().map(|&s| self.owners[s]).collect();
        let mut groups = Vec::new();
        let mut next_owners = Vec::new();
        for w in 0..self.p {
            let members: Vec<usize> = (0..nodes.len()).filter(|&t| owner_of[t] == w).collect();
            if members.is_empty() {
                continue;
            }
            let mut local = vec![usize::MAX; nodes.len()];
            for (x, &t) in members.iter().enumerate() {
                local[t] = x;
            }
            let adj: Vec<Vec<usize>> = members
                .iter()
                .map(|&t| pattern.row(t).iter().filter(|&&j| j != t && local[j] != usize::MAX).map(|&j| local[j]).collect())
                .collect();
            let wts: Vec<usize> = members.iter().map(|&t| weights[t]).collect();
            for g in partition_weighted(&adj, &wts, target) {
                groups.push(g.into_iter().map(|x| members[x]).collect());
                next_owners.push(w);
            }
        }
        self.owners = next_owners;
        groups
    }
}
