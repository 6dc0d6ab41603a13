//! Versioned little-endian binary format for factorizations.
//!
//! Layout: magic `HSF1`, `u32` version, header, `u64` level count, per level
//! the partition, operators and coarse map, then the top factor and a JSON
//! statistics blob. Every matrix is written as `rows`, `cols` (`u64`) and
//! column-major `f64` data.

use super::{ClusterOperator, Coupling, FactorConfig, FactorStats, HierarchicalFactor, Level, OperatorKind};
use crate::block::{ClusterPartition, SymmetryFlag};
use crate::dense::{Cholesky, DenseMatrix, Lu, RankPolicy, SquareFactor};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const FACTOR_MAGIC: &[u8; 4] = b"HSF1";
const VERSION: u32 = 1;

struct W<'a>(&'a mut dyn Write);

impl W<'_> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(Error::from)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn usizes(&mut self, v: &[usize]) -> Result<()> {
        self.usize(v.len())?;
        v.iter().try_for_each(|&x| self.usize(x))
    }
    fn mat(&mut self, m: &DenseMatrix) -> Result<()> {
        self.usize(m.rows())?;
        self.usize(m.cols())?;
        let mut buf = Vec::with_capacity(m.as_slice().len() * 8);
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.bytes(&buf)
    }
    fn opt_mat(&mut self, m: Option<&DenseMatrix>) -> Result<()> {
        match m {
            None => self.u8(0),
            Some(m) => {
                self.u8(1)?;
                self.mat(m)
            }
        }
    }
    fn factor(&mut self, f: Option<&SquareFactor>) -> Result<()> {
        match f {
            None => self.u8(0),
            Some(SquareFactor::Cholesky(c)) => {
                self.u8(1)?;
                self.mat(c.l())
            }
            Some(SquareFactor::Lu(l)) => {
                self.u8(2)?;
                self.mat(l.packed())?;
                self.usizes(l.perm())
            }
        }
    }
}

struct R<'a>(&'a mut dyn Read);

impl R<'_> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0; n];
        self.0.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).ok().filter(|&x| x < 1 << 40).ok_or_else(|| Error::Format(format!("bad length {v}")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.usize()?;
        (0..n).map(|_| self.usize()).collect()
    }
    fn mat(&mut self) -> Result<DenseMatrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).filter(|&n| n < 1 << 32).ok_or_else(|| Error::Format("matrix too large".into()))?;
        let raw = self.bytes(n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        DenseMatrix::from_col_major(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
    }
    fn opt_mat(&mut self) -> Result<Option<DenseMatrix>> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.mat().map(Some),
            t => Err(Error::Format(format!("bad option tag {t}"))),
        }
    }
    fn factor(&mut self) -> Result<Option<SquareFactor>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(SquareFactor::Cholesky(Cholesky::from_factor(self.mat()?)))),
            2 => {
                let packed = self.mat()?;
                let perm = self.usizes()?;
                if perm.len() != packed.rows() || perm.iter().any(|&p| p >= perm.len()) {
                    return Err(Error::Format("bad permutation".into()));
                }
                Ok(Some(SquareFactor::Lu(Lu::from_parts(packed, perm))))
            }
            t => Err(Error::Format(format!("bad factor tag {t}"))),
        }
    }
}

fn write_policy(w: &mut W, p: RankPolicy) -> Result<()> {
    match p {
        RankPolicy::FixedRank(k) => {
            w.u8(0)?;
            w.usize(k)
        }
        RankPolicy::Tolerance(e) => {
            w.u8(1)?;
            w.f64(e)
        }
        RankPolicy::RelativeTolerance(e) => {
            w.u8(2)?;
            w.f64(e)
        }
    }
}

fn read_policy(r: &mut R) -> Result<RankPolicy> {
    match r.u8()? {
        0 => Ok(RankPolicy::FixedRank(r.usize()?)),
        1 => Ok(RankPolicy::Tolerance(r.f64()?)),
        2 => Ok(RankPolicy::RelativeTolerance(r.f64()?)),
        t => Err(Error::Format(format!("bad policy tag {t}"))),
    }
}

fn write_operator(w: &mut W, op: &ClusterOperator) -> Result<()> {
    w.usize(op.cluster)?;
    w.u8(op.kind.code())?;
    w.usize(op.size)?;
    w.usize(op.coarse_size)?;
    w.f64(op.epsilon)?;
    for m in [&op.u, &op.v, &op.fwd_fine, &op.fwd_coarse, &op.bwd_fine, &op.bwd_coarse] {
        w.mat(m)?;
    }
    w.factor(op.fine_factor.as_ref())?;
    w.usize(op.couplings.len())?;
    for c in &op.couplings {
        w.usize(c.node)?;
        w.mat(&c.b)?;
        w.opt_mat(c.c.as_ref())?;
    }
    Ok(())
}

fn read_operator(r: &mut R) -> Result<ClusterOperator> {
    let cluster = r.usize()?;
    let kind = OperatorKind::from_code(r.u8()?).ok_or_else(|| Error::Format("bad operator kind".into()))?;
    let size = r.usize()?;
    let coarse_size = r.usize()?;
    let epsilon = r.f64()?;
    let mut mats = (0..6).map(|_| r.mat()).collect::<Result<Vec<_>>>()?.into_iter();
    let mut next = || mats.next().unwrap();
    let (u, v, fwd_fine, fwd_coarse, bwd_fine, bwd_coarse) = (next(), next(), next(), next(), next(), next());
    let fine_factor = r.factor()?;
    let nc = r.usize()?;
    let mut couplings = Vec::with_capacity(nc.min(1024));
    for _ in 0..nc {
        let node = r.usize()?;
        let b = r.mat()?;
        let c = r.opt_mat()?;
        couplings.push(Coupling { node, b, c });
    }
    if coarse_size > size {
        return Err(Error::Format("coarse size exceeds cluster size".into()));
    }
    Ok(ClusterOperator {
        cluster,
        kind,
        size,
        coarse_size,
        u,
        v,
        fine_factor,
        fwd_fine,
        fwd_coarse,
        bwd_fine,
        bwd_coarse,
        couplings,
        epsilon,
    })
}

/// Serializes a factorization.
pub fn write_factor_to(f: &HierarchicalFactor, out: &mut dyn Write) -> Result<()> {
    let mut w = W(out);
    w.bytes(FACTOR_MAGIC)?;
    w.bytes(&VERSION.to_le_bytes())?;
    w.usize(f.n)?;
    w.u8(f.flag.code())?;
    w.usize(f.config.cluster_size)?;
    write_policy(&mut w, f.config.policy)?;
    w.u64(f.config.stop_threshold.map_or(u64::MAX, |s| s as u64))?;
    w.u8(f.config.check_fill as u8)?;
    w.usize(f.levels.len())?;
    for level in &f.levels {
        w.usize(level.partition.num_dofs())?;
        w.usize(level.partition.num_clusters())?;
        for c in level.partition.clusters() {
            w.usizes(c)?;
        }
        w.usize(level.operators.len())?;
        for op in &level.operators {
            write_operator(&mut w, op)?;
        }
        w.usizes(&level.coarse_nodes)?;
        w.usizes(&level.coarse_sizes)?;
    }
    w.usize(f.top_dim)?;
    w.factor(f.top.as_ref())?;
    let stats = serde_json::to_vec(&f.stats).map_err(|e| Error::Format(e.to_string()))?;
    w.usize(stats.len())?;
    w.bytes(&stats)
}

pub fn read_factor_from(input: &mut dyn Read) -> Result<HierarchicalFactor> {
    let mut r = R(input);
    if r.bytes(4)? != FACTOR_MAGIC {
        return Err(Error::Format("missing HSF1 magic".into()));
    }
    let version = u32::from_le_bytes(r.bytes(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = r.usize()?;
    let flag = SymmetryFlag::from_code(r.u8()?).ok_or_else(|| Error::Format("bad symmetry flag".into()))?;
    let cluster_size = r.usize()?;
    let policy = read_policy(&mut r)?;
    let stop = r.u64()?;
    let check_fill = r.u8()? != 0;
    let config = FactorConfig {
        cluster_size,
        policy,
        stop_threshold: (stop != u64::MAX).then_some(stop as usize),
        check_fill,
    };
    let nlevels = r.usize()?;
    let mut levels = Vec::with_capacity(nlevels.min(64));
    for _ in 0..nlevels {
        let dofs = r.usize()?;
        let nc = r.usize()?;
        let clusters = (0..nc).map(|_| r.usizes()).collect::<Result<Vec<_>>>()?;
        let partition = ClusterPartition::new(dofs, clusters).map_err(|e| Error::Format(e.to_string()))?;
        let nops = r.usize()?;
        let operators = (0..nops).map(|_| read_operator(&mut r)).collect::<Result<Vec<_>>>()?;
        let coarse_nodes = r.usizes()?;
        let coarse_sizes = r.usizes()?;
        if coarse_nodes.len() != coarse_sizes.len() || operators.iter().any(|o| o.cluster >= nc) {
            return Err(Error::Format("inconsistent level".into()));
        }
        levels.push(Level { partition, operators, coarse_nodes, coarse_sizes });
    }
    let top_dim = r.usize()?;
    let top = r.factor()?;
    let len = r.usize()?;
    let stats: FactorStats = serde_json::from_slice(&r.bytes(len)?).map_err(|e| Error::Format(e.to_string()))?;
    Ok(HierarchicalFactor { n, flag, config, levels, top_dim, top, stats })
}

pub fn write_factor(f: &HierarchicalFactor, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_factor_to(f, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn read_factor(path: impl AsRef<Path>) -> Result<HierarchicalFactor> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_factor_from(&mut file)
}
