use super::run::{comm_json, krylov, rhs};
use super::{Output, RunConfig, Sweep};
use crate::block::{assemble, block_pattern, SymmetryFlag};
use crate::csr::CsrMatrix;
use crate::dense::RankPolicy;
use crate::error::{Error, Result};
use crate::parallel::{
    canonical_factor, coloring_violations, decompose, parallel_factor, scaling_report, ColoringMode, CommLog, NodeClass,
    TimingSample,
};
use crate::partition::{partition_graph, PartitionConfig};
use crate::problems::{gen_poisson_box, ProblemKind};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;

/// One row of the bench table. Virtual times come from the simulator's cost
/// model; the others are wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub run: usize,
    /// Matrix rows.
    pub n: usize,
    pub p: usize,
    pub policy: String,
    pub iterations: usize,
    pub converged: bool,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub flops: u64,
    pub memory_bytes: usize,
    pub levels: usize,
    pub virtual_makespan: f64,
    pub d1_seconds: f64,
    pub d2_seconds: f64,
    pub d3_seconds: f64,
    /// Mean worker idle time.
    pub comm_seconds: f64,
    /// Makespan not spent in boundary or interior rounds.
    pub other_seconds: f64,
    pub bytes: usize,
    pub messages: usize,
    pub max_worker_bytes: usize,
    pub max_worker_messages: usize,
    pub failed: bool,
    pub error: String,
}

pub const BENCH_HEADER: &str = "run,n,p,policy,iterations,converged,factor_seconds,solve_seconds,total_seconds,flops,\
memory_bytes,levels,virtual_makespan,d1_seconds,d2_seconds,d3_seconds,comm_seconds,other_seconds,bytes,messages,\
max_worker_bytes,max_worker_messages,failed,error";

fn policy_label(p: RankPolicy) -> String {
    match p {
        RankPolicy::FixedRank(k) => format!("rank={k}"),
        RankPolicy::Tolerance(e) => format!("tol={e}"),
        RankPolicy::RelativeTolerance(e) => format!("rtol={e}"),
    }
}

/// The matrices and configurations of a sweep.
fn plan(cfg: &RunConfig) -> Result<Vec<(RunConfig, Option<(usize, usize, usize)>)>> {
    let mut runs = Vec::new();
    match cfg.sweep {
        Sweep::N => {
            let spec = cfg.problem.ok_or_else(|| Error::InvalidConfig("n sweep needs a generated problem".into()))?;
            for &n in &cfg.ns {
                let mut c = cfg.clone();
                c.problem = Some(crate::problems::ProblemSpec { n, ..spec });
                runs.push((c, None));
            }
        }
        Sweep::P => {
            for &p in &cfg.ps {
                let mut c = cfg.clone();
                c.workers = p;
                runs.push((c, None));
            }
        }
        Sweep::Eps => {
            for &e in &cfg.eps {
                let mut c = cfg.clone();
                c.policy = match cfg.policy {
                    RankPolicy::RelativeTolerance(_) => RankPolicy::RelativeTolerance(e),
                    _ => RankPolicy::Tolerance(e),
                };
                runs.push((c, None));
            }
        }
        Sweep::Weak => {
            let spec = cfg.problem.filter(|s| s.kind == ProblemKind::Poisson);
            let spec = spec.ok_or_else(|| Error::InvalidConfig("weak sweep runs on Poisson boxes".into()))?;
            for &p in &cfg.ps {
                if !p.is_power_of_two() {
                    return Err(Error::InvalidConfig(format!("weak sweep needs powers of two, got {p}")));
                }
                let mut dims = [spec.n; 3];
                for d in 0..p.trailing_zeros() as usize {
                    dims[d % 3] *= 2;
                }
                let mut c = cfg.clone();
                c.workers = p;
                runs.push((c, Some((dims[0], dims[1], dims[2]))));
            }
        }
    }
    Ok(runs)
}

fn phase_sum(log: &CommLog, prefix: &str) -> f64 {
    log.phase_time.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, v)| v).sum::<f64>() + 0.0
}

fn bench_one(c: &RunConfig, a: &CsrMatrix, flag: SymmetryFlag, row: &mut BenchRow) -> Result<Vec<usize>> {
    let t = Instant::now();
    let pf = parallel_factor(a, flag, &c.factor_config(), &c.parallel_options(), c.schedule)?;
    row.factor_seconds = t.elapsed().as_secs_f64();
    let (_, report) = krylov(c, a, flag, &pf.factor, &rhs(a))?;
    row.solve_seconds = report.solve_seconds;
    row.total_seconds = row.factor_seconds + row.solve_seconds;
    row.iterations = report.iterations;
    row.converged = report.converged;
    row.flops = pf.factor.stats.flops;
    row.memory_bytes = pf.factor.memory_bytes();
    row.levels = pf.factor.levels.len();
    let log = &pf.log;
    row.virtual_makespan = log.makespan;
    row.d1_seconds = phase_sum(log, "d1-round");
    row.d2_seconds = phase_sum(log, "d2-round");
    row.d3_seconds = phase_sum(log, "d3-round");
    row.comm_seconds = log.total_idle() / log.p as f64;
    row.other_seconds = (log.makespan - row.d1_seconds - row.d2_seconds - row.d3_seconds).max(0.0);
    row.bytes = log.total_bytes();
    row.messages = log.messages.len();
    let max = log.max_per_worker();
    row.max_worker_bytes = max.bytes;
    row.max_worker_messages = max.messages;
    if !report.converged {
        row.error = report.check().unwrap_err().to_string();
    }
    Ok(pf.factor.stats.levels.iter().map(|l| l.max_cluster_size).collect())
}

pub(crate) fn bench(cfg: &RunConfig) -> Result<Output> {
    let runs = plan(cfg)?;
    let mut writer = match &cfg.out_csv {
        Some(p) => Some(csv::Writer::from_path(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut level_sizes = Vec::new();
    let mut first_error = None;
    for (i, (c, dims)) in runs.iter().enumerate() {
        let mut row = BenchRow { run: i, p: c.workers, policy: policy_label(c.policy), ..Default::default() };
        let loaded = c.validate().and_then(|_| match dims {
            Some((x, y, z)) => Ok((gen_poisson_box(*x, *y, *z), SymmetryFlag::Spd)),
            None => c.load(),
        });
        let result = loaded.and_then(|(a, flag)| {
            row.n = a.rows();
            bench_one(c, &a, flag, &mut row)
        });
        match result {
            Ok(sizes) => {
                let parallel = matches!(cfg.sweep, Sweep::P | Sweep::Weak);
                samples.push(TimingSample {
                    n: row.n,
                    p: row.p,
                    time: if parallel { row.virtual_makespan } else { row.total_seconds },
                    volume: parallel.then_some(row.max_worker_bytes as f64),
                });
                level_sizes = sizes;
                if !row.converged && first_error.is_none() {
                    first_error = Some(Error::MaxIterations(row.iterations));
                }
            }
            Err(e) => {
                row.failed = true;
                row.error = e.to_string();
                first_error.get_or_insert(e);
            }
        }
        if let Some(w) = writer.as_mut() {
            w.serialize(&row).map_err(|e| Error::Io(e.to_string()))?;
            w.flush()?;
        }
        rows.push(row);
    }
    let scaling = scaling_report(&samples, &level_sizes).ok();
    Ok(Output { json: json!({ "rows": rows, "scaling": scaling }), error: first_error })
}

pub(crate) fn psim(cfg: &RunConfig) -> Result<Output> {
    let (a, flag) = cfg.load()?;
    let opts = cfg.parallel_options();
    let t = Instant::now();
    let pf = parallel_factor(&a, flag, &cfg.factor_config(), &opts, cfg.schedule)?;
    let seconds = t.elapsed().as_secs_f64();
    let (canon, _) = canonical_factor(&a, flag, &cfg.factor_config(), &opts)?;
    if let Some(path) = &cfg.out_csv {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        pf.log.write_csv(file)?;
    }
    let levels: Vec<_> = pf
        .decomps
        .iter()
        .enumerate()
        .map(|(l, d)| {
            let count = |c: NodeClass| d.class.iter().filter(|&&x| x == c).count();
            json!({
                "level": l,
                "clusters": d.owner.len(),
                "d1": count(NodeClass::D1),
                "d2": count(NodeClass::D2),
                "d3": count(NodeClass::D3),
                "colors": d.num_colors(),
            })
        })
        .collect();
    Ok(Output::ok(json!({
        "n": a.rows(),
        "workers": cfg.workers,
        "wall_seconds": seconds,
        "levels": levels,
        "gather_level": pf.gather.as_ref().map(|g| g.0),
        "comm": comm_json(&pf.log),
        "per_worker": pf.log.per_worker(),
        "locality_violations": pf.locality_violations().len(),
        "conservation_errors": pf.log.conservation_errors(),
        "matches_canonical": pf.factor.levels == canon.levels && pf.factor.top == canon.top,
    })))
}

pub(crate) fn color_check(cfg: &RunConfig) -> Result<Output> {
    let (a, flag) = cfg.load()?;
    let partition = partition_graph(&a.graph(), &PartitionConfig::with_target(cfg.cluster_size));
    let blocks = assemble(&a, &partition, flag)?;
    let pattern = block_pattern(&blocks);
    let mut d = decompose(&pattern, &partition.sizes(), cfg.workers)?;
    let mut colors = serde_json::Map::new();
    for (name, mode) in [("strict", ColoringMode::Strict), ("owner-aware", ColoringMode::OwnerAware)] {
        d.color_d1(&pattern, mode);
        colors.insert(name.into(), d.num_colors().into());
    }
    d.color_d1(&pattern, cfg.coloring);
    let bad = coloring_violations(&d, &pattern);
    let count = |c: NodeClass| d.class.iter().filter(|&&x| x == c).count();
    let error = (!bad.is_empty()).then(|| {
        Error::DeadlockDetected(format!("{} same-colored boundary pairs within distance 2", bad.len()))
    });
    Ok(Output {
        json: json!({
            "clusters": pattern.m(),
            "workers": cfg.workers,
            "d1": count(NodeClass::D1),
            "d2": count(NodeClass::D2),
            "d3": count(NodeClass::D3),
            "colors": d.num_colors(),
            "color_counts": colors,
            "violations": bad,
            "valid": bad.is_empty(),
        }),
        error,
    })
}
