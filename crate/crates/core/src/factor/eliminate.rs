//! Low-rank elimination of a single cluster.
//!
//! The elimination is split into a pure computation ([`eliminate_cluster`]),
//! which reads the blocks of one cluster and returns the operator plus a
//! list of block effects, and the application of those effects to a block
//! store. Sequential and distributed drivers share the computation, so the
//! arithmetic is identical however the effects are routed.

use crate::block::{BlockMatrix, BlockPattern, SymmetryFlag};
use crate::dense::{
    complement_basis_with, lu_pp, truncated_lowrank, DenseMatrix, RankPolicy, SquareFactor,
};
use crate::error::{Error, Result};

/// What happened to a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// Fine DOFs eliminated, `k` coarse DOFs kept.
    Eliminated,
    /// Fill-in has full rank; the cluster moves to the next level unchanged.
    Passthrough,
    /// The compressed elimination was numerically unsafe, so the whole
    /// cluster moves to the next level unchanged.
    CompressionSkipped,
}

impl OperatorKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            OperatorKind::Eliminated => 0,
            OperatorKind::Passthrough => 1,
            OperatorKind::CompressionSkipped => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(OperatorKind::Eliminated),
            1 => Some(OperatorKind::Passthrough),
            2 => Some(OperatorKind::CompressionSkipped),
            _ => None,
        }
    }
}

/// Coupling of the eliminated fine DOFs of `s` to neighbor `node`.
///
/// `b` is `A_js·A_ss⁻¹·V_R·R⁻¹` (used on the forward sweep) and `c` is
/// `A_sjᵀ·A_ss⁻ᵀ·V_L·L⁻ᵀ` (backward sweep). On the symmetric path with a
/// Cholesky fine factor the two coincide and `c` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub node: usize,
    pub b: DenseMatrix,
    pub c: Option<DenseMatrix>,
}

impl Coupling {
    pub fn c(&self) -> &DenseMatrix {
        self.c.as_ref().unwrap_or(&self.b)
    }
}

/// The low-rank elimination operator `W_s` of one cluster.
///
/// The solve only needs the four dense maps below; `u`, `v` and
/// `fine_factor` are kept for inspection and invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOperator {
    pub cluster: usize,
    pub kind: OperatorKind,
    /// `|π_s|` at the time of elimination.
    pub size: usize,
    /// `k`, the number of coarse DOFs kept.
    pub coarse_size: usize,
    /// Coarse basis `U` (`m×k`, orthonormal columns).
    pub u: DenseMatrix,
    /// Fine basis `V` (`m×(m−k)`, orthonormal, `V ⊥ A_ss⁻¹U`).
    pub v: DenseMatrix,
    /// Factor of `F = Vᵀ A_ss⁻¹ V`.
    pub fine_factor: Option<SquareFactor>,
    /// `L⁻¹ V_Lᵀ A_ss⁻¹`, `(m−k)×m`.
    pub fwd_fine: DenseMatrix,
    /// `Uᵀ A_ss⁻¹`, `k×m`.
    pub fwd_coarse: DenseMatrix,
    /// `A_ss⁻¹ V_R R⁻¹`, `m×(m−k)`.
    pub bwd_fine: DenseMatrix,
    /// `A_ss⁻¹ U`, `m×k`.
    pub bwd_coarse: DenseMatrix,
    pub couplings: Vec<Coupling>,
    /// First discarded singular value of the fill-in.
    pub epsilon: f64,
}

impl ClusterOperator {
    pub fn fine_size(&self) -> usize {
        self.size - self.coarse_size
    }

    fn identity(cluster: usize, size: usize, kind: OperatorKind, epsilon: f64) -> Self {
        ClusterOperator {
            cluster,
            kind,
            size,
            coarse_size: size,
            u: DenseMatrix::zeros(0, 0),
            v: DenseMatrix::zeros(0, 0),
            fine_factor: None,
            fwd_fine: DenseMatrix::zeros(0, 0),
            fwd_coarse: DenseMatrix::zeros(0, 0),
            bwd_fine: DenseMatrix::zeros(0, 0),
            bwd_coarse: DenseMatrix::zeros(0, 0),
            couplings: Vec::new(),
            epsilon,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.kind != OperatorKind::Eliminated
    }

    /// Bytes held by the dense payloads.
    pub fn bytes(&self) -> usize {
        let mats = [&self.u, &self.v, &self.fwd_fine, &self.fwd_coarse, &self.bwd_fine, &self.bwd_coarse];
        let coup: usize = self.couplings.iter().map(|c| c.b.bytes() + c.c.as_ref().map_or(0, DenseMatrix::bytes)).sum();
        mats.iter().map(|m| m.bytes()).sum::<usize>() + coup + self.fine_factor.as_ref().map_or(0, factor_bytes)
    }

    /// Forward step on a vector held as per-node segments. Returns the fine
    /// part, which no later operator touches.
    pub fn forward(&self, segs: &mut [Vec<f64>]) -> Vec<f64> {
        if self.is_identity() {
            return Vec::new();
        }
        let ys = &segs[self.cluster];
        let yf = self.fwd_fine.matvec(ys);
        let yc = self.fwd_coarse.matvec(ys);
        segs[self.cluster] = yc;
        for c in &self.couplings {
            let t = c.b.matvec(&yf);
            sub_in_place(&mut segs[c.node], &t);
        }
        yf
    }

    /// Backward step: rebuilds the segment of `s` in its original basis from
    /// the fine part and the (already solved) coarse and neighbor segments.
    pub fn backward(&self, segs: &mut [Vec<f64>], fine: &[f64]) {
        if self.is_identity() {
            return;
        }
        let mut xf = fine.to_vec();
        for c in &self.couplings {
            let t = c.c().tr_matvec(&segs[c.node]);
            sub_in_place(&mut xf, &t);
        }
        let mut x = self.bwd_fine.matvec(&xf);
        let xc = self.bwd_coarse.matvec(&segs[self.cluster]);
        for (a, b) in x.iter_mut().zip(&xc) {
            *a += b;
        }
        segs[self.cluster] = x;
    }
}

pub(crate) fn factor_bytes(f: &SquareFactor) -> usize {
    match f {
        SquareFactor::Cholesky(c) => c.l().bytes(),
        SquareFactor::Lu(l) => l.packed().bytes() + l.perm().len() * 8,
    }
}

pub(crate) fn sub_in_place(y: &mut [f64], t: &[f64]) {
    for (a, b) in y.iter_mut().zip(t) {
        *a -= b;
    }
}

/// A change to one block of the working matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockEffect {
    /// `A_ij -= delta`, creating the block if absent.
    Sub { i: usize, j: usize, delta: DenseMatrix },
    /// `A_ij = block`.
    Set { i: usize, j: usize, block: DenseMatrix },
}

impl BlockEffect {
    pub fn key(&self) -> (usize, usize) {
        match self {
            BlockEffect::Sub { i, j, .. } | BlockEffect::Set { i, j, .. } => (*i, *j),
        }
    }

    pub fn bytes(&self) -> usize {
        match self {
            BlockEffect::Sub { delta: m, .. } | BlockEffect::Set { block: m, .. } => m.bytes() + 16,
        }
    }
}

/// Result of eliminating one cluster.
#[derive(Debug, Clone)]
pub struct Elimination {
    pub op: ClusterOperator,
    /// New size of the cluster's node when its blocks are replaced; `None`
    /// when the node is left untouched.
    pub resize: Option<usize>,
    /// `Set` effects come first (all in row/column `s`), then `Sub` effects
    /// between neighbors, in a fixed order.
    pub effects: Vec<BlockEffect>,
}

/// Read-only view of the blocks touching cluster `s`.
pub struct ClusterView<'a> {
    pub s: usize,
    pub a_ss: &'a DenseMatrix,
    /// `(j, A_sj, A_js)` for pattern neighbors, ascending `j`.
    pub neighbors: Vec<(usize, &'a DenseMatrix, &'a DenseMatrix)>,
    /// `(w, A_sw, A_ws)` for stored blocks outside the pattern, ascending `w`.
    pub separated: Vec<(usize, &'a DenseMatrix, &'a DenseMatrix)>,
}

impl<'a> ClusterView<'a> {
    /// Collects the view from a block store. `pattern` is the level-initial
    /// block pattern that defines neighbors.
    pub fn gather(a: &'a BlockMatrix, pattern: &BlockPattern, s: usize) -> Result<Self> {
        let a_ss = a.get(s, s).ok_or(Error::SingularDiagonal(s))?;
        let mut neighbors = Vec::new();
        let mut separated = Vec::new();
        for (&j, a_sj) in a.row(s) {
            if j == s {
                continue;
            }
            let a_js = a.get(j, s).expect("stored structure is symmetric");
            if pattern.contains(s, j) {
                neighbors.push((j, a_sj, a_js));
            } else {
                separated.push((j, a_sj, a_js));
            }
        }
        Ok(ClusterView { s, a_ss, neighbors, separated })
    }
}

/// Computes the low-rank elimination of the cluster described by `view`.
pub fn eliminate_cluster(view: &ClusterView, flag: SymmetryFlag, policy: RankPolicy) -> Result<Elimination> {
    let s = view.s;
    let a = view.a_ss;
    let m = a.rows();
    let symmetric = flag.is_symmetric();

    // Fill-in basis: one joint basis for all well-separated blocks.
    let (u, z, epsilon) = if view.separated.is_empty() {
        (DenseMatrix::zeros(m, 0), DenseMatrix::zeros(0, 0), 0.0)
    } else {
        let mut parts: Vec<&DenseMatrix> = view.separated.iter().map(|(_, sw, _)| *sw).collect();
        let transposed: Vec<DenseMatrix>;
        if !symmetric {
            transposed = view.separated.iter().map(|(_, _, ws)| ws.transpose()).collect();
            parts.extend(transposed.iter());
        }
        let mat = DenseMatrix::hstack(&parts, m);
        let basis = truncated_lowrank(&mat, policy);
        (basis.u, basis.z, basis.epsilon_achieved)
    };
    let k = u.cols();
    if k == m {
        return Ok(passthrough(s, m, OperatorKind::Passthrough, epsilon));
    }

    let f_ss = SquareFactor::new(a, symmetric).map_err(|_| Error::SingularDiagonal(s))?;
    let skip = || Ok(passthrough(s, m, OperatorKind::CompressionSkipped, epsilon));

    let (v_l, ainv_u) = match complement_basis_with(&f_ss, a, &u, false) {
        Ok(r) => r,
        Err(Error::IllConditioned(_)) => return skip(),
        Err(e) => return Err(e),
    };
    let (v_r, ainvt_u) = if symmetric {
        (None, None)
    } else {
        match complement_basis_with(&f_ss, a, &u, true) {
            Ok((v, x)) => (Some(v), Some(x)),
            Err(Error::IllConditioned(_)) => return skip(),
            Err(e) => return Err(e),
        }
    };
    let v_r_ref = v_r.as_ref().unwrap_or(&v_l);

    // F = V_Lᵀ A⁻¹ V_R
    let y = f_ss.solve_mat(v_r_ref);
    let mut f = v_l.tr_matmul(&y);
    if symmetric {
        f.symmetrize();
    }
    let fine_factor = match SquareFactor::new(&f, symmetric) {
        Ok(ff) => ff,
        Err(_) => return skip(),
    };
    if k > 0 {
        // [V U] must stay a basis; otherwise the coarse block is singular.
        let d_probe = if symmetric { u.tr_matmul(&ainv_u) } else { ainvt_u.as_ref().unwrap().tr_matmul(&u) };
        if lu_pp(&d_probe).is_err() {
            return skip();
        }
    }

    // Forward/backward maps of the fine part.
    let x = if symmetric { y.clone() } else { f_ss.solve_tr_mat(&v_l) };
    let mut fwd_fine = x.transpose();
    for j in 0..fwd_fine.cols() {
        fine_factor.apply_left_inv(fwd_fine.col_mut(j));
    }
    let shared = symmetric && fine_factor.is_symmetric();
    let bwd_fine = if shared {
        fwd_fine.transpose()
    } else {
        let mut t = y.transpose();
        for j in 0..t.cols() {
            fine_factor.apply_right_inv_tr(t.col_mut(j));
        }
        t.transpose()
    };
    let fwd_coarse = match &ainvt_u {
        Some(x) => x.transpose(),
        None => ainv_u.transpose(),
    };
    let bwd_coarse = ainv_u;

    let couplings: Vec<Coupling> = view
        .neighbors
        .iter()
        .map(|&(j, a_sj, a_js)| {
            let b = a_js.matmul(&bwd_fine);
            let c = if shared { None } else { Some(fwd_fine.matmul(a_sj).transpose()) };
            Coupling { node: j, b, c }
        })
        .collect();

    let mut effects = Vec::new();
    if k > 0 {
        let mut d = fwd_coarse.matmul(&u);
        if symmetric {
            d.symmetrize();
        }
        // Row and column blocks of the coarse part of s.
        for &(j, a_sj, a_js) in &view.neighbors {
            let row = fwd_coarse.matmul(a_sj);
            let col = if symmetric { row.transpose() } else { a_js.matmul(&bwd_coarse) };
            effects.push(BlockEffect::Set { i: s, j, block: row });
            effects.push(BlockEffect::Set { i: j, j: s, block: col });
        }
        let mut off = 0;
        let nrow: usize = view.separated.iter().map(|(_, sw, _)| sw.cols()).sum();
        for &(w, a_sw, a_ws) in &view.separated {
            let cols = a_sw.cols();
            let row = d.matmul(&z.select_cols(off..off + cols));
            let col = if symmetric {
                row.transpose()
            } else {
                // Y_w = A_ws U, the transposed tail of Z.
                let zt = z.select_cols(nrow + off..nrow + off + a_ws.rows());
                zt.tr_matmul(&d)
            };
            off += cols;
            effects.push(BlockEffect::Set { i: s, j: w, block: row });
            effects.push(BlockEffect::Set { i: w, j: s, block: col });
        }
        effects.push(BlockEffect::Set { i: s, j: s, block: d });
    }

    // Schur complement among neighbors.
    for (p, ci) in couplings.iter().enumerate() {
        let start = if symmetric { p } else { 0 };
        for cj in &couplings[start..] {
            let delta = ci.b.matmul_tr(cj.c());
            if symmetric && ci.node != cj.node {
                effects.push(BlockEffect::Sub { i: cj.node, j: ci.node, delta: delta.transpose() });
            }
            effects.push(BlockEffect::Sub { i: ci.node, j: cj.node, delta });
        }
    }

    let op = ClusterOperator {
        cluster: s,
        kind: OperatorKind::Eliminated,
        size: m,
        coarse_size: k,
        u,
        v: v_l,
        fine_factor: Some(fine_factor),
        fwd_fine,
        fwd_coarse,
        bwd_fine,
        bwd_coarse,
        couplings,
        epsilon,
    };
    Ok(Elimination { op, resize: Some(k), effects })
}

fn passthrough(s: usize, m: usize, kind: OperatorKind, epsilon: f64) -> Elimination {
    Elimination { op: ClusterOperator::identity(s, m, kind, epsilon), resize: None, effects: Vec::new() }
}

/// Applies one effect. Returns `true` when a block was created.
pub fn apply_effect(a: &mut BlockMatrix, effect: BlockEffect) -> bool {
    match effect {
        BlockEffect::Sub { i, j, delta } => match a.get_mut(i, j) {
            Some(b) => {
                b.sub_assign(&delta);
                false
            }
            None => {
                a.insert(i, j, delta.neg());
                true
            }
        },
        BlockEffect::Set { i, j, block } => {
            let created = a.get(i, j).is_none();
            a.insert(i, j, block);
            created
        }
    }
}

/// Applies an elimination to the working matrix. Blocks landing outside
/// `allowed` are counted and returned.
pub fn apply_elimination(a: &mut BlockMatrix, elim: Elimination, allowed: Option<&BlockPattern>) -> usize {
    if let Some(k) = elim.resize {
        a.reset_node(elim.op.cluster, k);
    }
    let mut violations = 0;
    for e in elim.effects {
        let (i, j) = e.key();
        if let Some(p) = allowed {
            if !p.contains(i, j) {
                violations += 1;
            }
        }
        apply_effect(a, e);
    }
    violations
}

/// Eliminates cluster `s` of `a` in place. Neighbors are taken from
/// `pattern`, the block pattern at the start of the current level.
pub fn low_rank_eliminate(
    a: &mut BlockMatrix,
    pattern: &BlockPattern,
    s: usize,
    policy: RankPolicy,
) -> Result<ClusterOperator> {
    let elim = eliminate_cluster(&ClusterView::gather(a, pattern, s)?, a.flag(), policy)?;
    let op = elim.op.clone();
    apply_elimination(a, elim, None);
    Ok(op)
}
