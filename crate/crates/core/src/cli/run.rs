use super::{KrylovMethod, Output, RunConfig};
use crate::block::SymmetryFlag;
use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::factor::{factor_csr, write_factor, HierarchicalFactor};
use crate::krylov::{gmres, pcg, SolveReport};
use crate::parallel::{parallel_factor, CommLog};
use crate::problems::write_matrix_market;
use serde_json::json;
use std::time::Instant;

pub(crate) fn gen(cfg: &RunConfig) -> Result<Output> {
    let Some(spec) = cfg.problem else {
        return Err(Error::InvalidConfig("gen needs --problem".into()));
    };
    let out = cfg.out.as_ref().ok_or_else(|| Error::InvalidConfig("gen needs --out".into()))?;
    let (a, flag) = spec.generate()?;
    write_matrix_market(out, &a, flag.is_symmetric())?;
    Ok(Output::ok(json!({
        "rows": a.rows(),
        "nnz": a.nnz(),
        "symmetric": flag.is_symmetric(),
        "path": out.display().to_string(),
    })))
}

/// The factorization a configuration asks for, with the message log when it
/// ran on more than one worker.
pub(crate) struct Setup {
    pub factor: HierarchicalFactor,
    pub log: Option<CommLog>,
    pub seconds: f64,
}

pub(crate) fn setup(cfg: &RunConfig, a: &CsrMatrix, flag: SymmetryFlag) -> Result<Setup> {
    let t = Instant::now();
    let (factor, log) = if cfg.workers > 1 {
        let pf = parallel_factor(a, flag, &cfg.factor_config(), &cfg.parallel_options(), cfg.schedule)?;
        (pf.factor, Some(pf.log))
    } else {
        (factor_csr(a, flag, &cfg.factor_config())?, None)
    };
    Ok(Setup { factor, log, seconds: t.elapsed().as_secs_f64() })
}

pub(crate) fn comm_json(log: &CommLog) -> serde_json::Value {
    let max = log.max_per_worker();
    json!({
        "messages": log.messages.len(),
        "bytes": log.total_bytes(),
        "max_messages_per_worker": max.messages,
        "max_bytes_per_worker": max.bytes,
        "idle": log.total_idle(),
        "makespan": log.makespan,
        "phase_time": log.phase_time,
        "workers": log.workers,
    })
}

fn factor_json(s: &Setup) -> serde_json::Value {
    let f = &s.factor;
    json!({
        "n": f.n,
        "flag": format!("{:?}", f.flag),
        "levels": f.levels.len(),
        "top_dim": f.top_dim,
        "memory_bytes": f.memory_bytes(),
        "setup_seconds": s.seconds,
        "stats": f.stats,
        "comm": s.log.as_ref().map(comm_json),
    })
}

pub(crate) fn factor(cfg: &RunConfig) -> Result<Output> {
    let (a, flag) = cfg.load()?;
    let s = setup(cfg, &a, flag)?;
    if let Some(out) = &cfg.out {
        write_factor(&s.factor, out)?;
    }
    Ok(Output::ok(factor_json(&s)))
}

/// Runs the configured Krylov method preconditioned by `f`.
pub(crate) fn krylov(cfg: &RunConfig, a: &CsrMatrix, flag: SymmetryFlag, f: &HierarchicalFactor, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    match cfg.method_for(flag) {
        KrylovMethod::Cg => pcg(a, f, b, &cfg.solve),
        KrylovMethod::Gmres => gmres(a, f, b, &cfg.solve),
    }
}

/// Right-hand side for a solve: `A` times the all-ones vector.
pub(crate) fn rhs(a: &CsrMatrix) -> Vec<f64> {
    a.spmv(&vec![1.0; a.cols()])
}

pub(crate) fn solve(cfg: &RunConfig) -> Result<Output> {
    let (a, flag) = cfg.load()?;
    let s = setup(cfg, &a, flag)?;
    let b = rhs(&a);
    let (_, mut report) = krylov(cfg, &a, flag, &s.factor, &b)?;
    report.setup_seconds = s.seconds;
    if let Some(path) = &cfg.out_csv {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        report.write_csv(file)?;
    }
    let mut doc = factor_json(&s);
    doc["method"] = serde_json::to_value(cfg.method_for(flag)).unwrap();
    doc["converged"] = report.converged.into();
    doc["iterations"] = report.iterations.into();
    doc["residuals"] = serde_json::to_value(&report.residuals).unwrap();
    doc["true_residual"] = report.true_residual.into();
    doc["solve_seconds"] = report.solve_seconds.into();
    doc["total_seconds"] = (report.setup_seconds + report.solve_seconds).into();
    Ok(Output { json: doc, error: report.check().err() })
}
