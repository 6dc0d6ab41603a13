//! Command-line front end.
//!
//! Every subcommand prints one JSON document to stdout (and to `--out-json`
//! when given). Failures print `{"error": kind, "message": ...}` and exit with
//! 1 (not converged), 2 (I/O), 3 (invalid configuration) or 4 (numeric).

mod bench;
mod run;

use crate::block::SymmetryFlag;
use crate::csr::CsrMatrix;
use crate::dense::RankPolicy;
use crate::error::{Error, Result};
use crate::factor::FactorConfig;
use crate::krylov::KrylovOptions;
use crate::parallel::{Backend, ColoringMode, ParallelOptions, Schedule};
use crate::problems::{read_matrix_market, ProblemKind, ProblemSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::PathBuf;

pub use bench::{BenchRow, BENCH_HEADER};

#[derive(Parser, Debug)]
#[command(name = "hsolve", version, about = "Hierarchical low-rank sparse solver", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Write a model problem as a Matrix Market file (`--out`).
    Gen(Flags),
    /// Factor and report statistics; `--out` saves the factorization.
    Factor(Flags),
    /// Factor, then run preconditioned CG or GMRES.
    Solve(Flags),
    /// Sweep over n, p, ε or a weak-scaling series and tabulate.
    Bench(Flags),
    /// Run the distributed factorization on the simulator or on threads.
    Psim(Flags),
    /// Color the first-level boundary clusters and validate the coloring.
    ColorCheck(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Gen(f) => ("gen", f),
            Command::Factor(f) => ("factor", f),
            Command::Solve(f) => ("solve", f),
            Command::Bench(f) => ("bench", f),
            Command::Psim(f) => ("psim", f),
            Command::ColorCheck(f) => ("color-check", f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    Cg,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Grid size n over `--ns` at `--workers`.
    N,
    /// Worker count over `--ps` at fixed n.
    P,
    /// Absolute truncation tolerance over `--eps`.
    Eps,
    /// Poisson boxes doubling one axis per doubling of p, starting at n³.
    Weak,
}

#[derive(Args, Debug, Clone)]
struct Flags {
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    freq: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix Market input instead of a generated problem.
    #[arg(long, conflicts_with = "problem")]
    matrix: Option<PathBuf>,
    /// Fixed rank K (default 8).
    #[arg(long, conflicts_with = "tol")]
    rank: Option<usize>,
    /// Truncation tolerance ε.
    #[arg(long)]
    tol: Option<f64>,
    /// Interpret `--tol` relative to the largest singular value.
    #[arg(long)]
    relative: bool,
    #[arg(long, default_value_t = 64)]
    cluster_size: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "sim")]
    backend: Backend,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Bsp)]
    schedule: ScheduleArg,
    #[arg(long, default_value = "strict")]
    coloring: ColoringMode,
    /// CG for SPD input, GMRES otherwise, unless given.
    #[arg(long, value_enum)]
    krylov: Option<KrylovMethod>,
    #[arg(long, default_value_t = 1e-12)]
    solve_tol: f64,
    #[arg(long, default_value_t = 50)]
    restart: usize,
    #[arg(long, default_value_t = 1000)]
    maxit: usize,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Output file of `gen` and `factor`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Sweep::N)]
    sweep: Sweep,
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 24, 32])]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
    ps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.4, 0.2, 0.1, 0.05])]
    eps: Vec<f64>,
    /// key=value file of flags; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Bsp,
    Async,
}

/// Fully resolved run configuration, echoed in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: Option<ProblemSpec>,
    pub matrix: Option<PathBuf>,
    pub policy: RankPolicy,
    pub cluster_size: usize,
    pub workers: usize,
    pub backend: Backend,
    pub schedule: Schedule,
    pub coloring: ColoringMode,
    pub krylov: Option<KrylovMethod>,
    pub solve: KrylovOptions,
    pub seed: u64,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub sweep: Sweep,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub eps: Vec<f64>,
}

impl RunConfig {
    fn from_flags(f: &Flags) -> Result<Self> {
        let policy = match (f.rank, f.tol) {
            (Some(k), _) => RankPolicy::FixedRank(k),
            (None, Some(e)) if f.relative => RankPolicy::RelativeTolerance(e),
            (None, Some(e)) => RankPolicy::Tolerance(e),
            (None, None) => RankPolicy::FixedRank(8),
        };
        let problem = match (&f.matrix, f.problem) {
            (Some(_), _) => None,
            (None, Some(kind)) => Some(ProblemSpec { kind, n: f.n, seed: f.seed, freq: f.freq }),
            (None, None) => Some(ProblemSpec { kind: ProblemKind::Poisson, n: f.n, seed: f.seed, freq: f.freq }),
        };
        let cfg = RunConfig {
            problem,
            matrix: f.matrix.clone(),
            policy,
            cluster_size: f.cluster_size,
            workers: f.workers,
            backend: f.backend,
            schedule: match f.schedule {
                ScheduleArg::Bsp => Schedule::Bsp,
                ScheduleArg::Async => Schedule::Async,
            },
            coloring: f.coloring,
            krylov: f.krylov,
            solve: KrylovOptions { tol: f.solve_tol, maxit: f.maxit, restart: f.restart },
            seed: f.seed,
            out_json: f.out_json.clone(),
            out_csv: f.out_csv.clone(),
            out: f.out.clone(),
            sweep: f.sweep,
            ns: f.ns.clone(),
            ps: f.ps.clone(),
            eps: f.eps.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.problem {
            p.validate()?;
        }
        self.factor_config().validate()?;
        self.solve.validate()?;
        if self.workers == 0 {
            return Err(Error::InvalidConfig("worker count must be >= 1".into()));
        }
        if self.solve.maxit == 0 {
            return Err(Error::InvalidConfig("maxit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn factor_config(&self) -> FactorConfig {
        FactorConfig::new(self.cluster_size, self.policy)
    }

    pub fn parallel_options(&self) -> ParallelOptions {
        let mut o = ParallelOptions::new(self.workers);
        o.coloring = self.coloring;
        o.backend = self.backend;
        o
    }

    /// The matrix this configuration names.
    pub fn load(&self) -> Result<(CsrMatrix, SymmetryFlag)> {
        match (&self.matrix, &self.problem) {
            (Some(path), _) => read_matrix_market(path),
            (None, Some(p)) => p.generate(),
            (None, None) => Err(Error::InvalidConfig("no matrix source".into())),
        }
    }

    pub fn method_for(&self, flag: SymmetryFlag) -> KrylovMethod {
        self.krylov.unwrap_or(if flag == SymmetryFlag::Spd { KrylovMethod::Cg } else { KrylovMethod::Gmres })
    }

    /// Flags that reproduce this configuration.
    pub fn to_args(&self) -> Vec<String> {
        let mut a: Vec<String> = Vec::new();
        let mut push = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        match (&self.matrix, &self.problem) {
            (Some(m), _) => push("matrix", m.display().to_string()),
            (None, Some(p)) => {
                push("problem", p.kind.to_possible_value().unwrap().get_name().to_string());
                push("n", p.n.to_string());
                push("freq", p.freq.to_string());
            }
            (None, None) => {}
        }
        push("seed", self.seed.to_string());
        match self.policy {
            RankPolicy::FixedRank(k) => push("rank", k.to_string()),
            RankPolicy::Tolerance(e) => push("tol", e.to_string()),
            RankPolicy::RelativeTolerance(e) => push("tol", e.to_string()),
        }
        push("cluster-size", self.cluster_size.to_string());
        push("workers", self.workers.to_string());
        push("backend", if self.backend == Backend::Sim { "sim" } else { "concurrent" }.into());
        push("schedule", if self.schedule == Schedule::Bsp { "bsp" } else { "async" }.into());
        push(
            "coloring",
            match self.coloring {
                ColoringMode::Strict => "strict",
                ColoringMode::OwnerAware => "owner-aware",
                ColoringMode::Trivial => "trivial",
            }
            .into(),
        );
        if let Some(k) = self.krylov {
            push("krylov", k.to_possible_value().unwrap().get_name().to_string());
        }
        push("solve-tol", self.solve.tol.to_string());
        push("restart", self.solve.restart.to_string());
        push("maxit", self.solve.maxit.to_string());
        push("sweep", self.sweep.to_possible_value().unwrap().get_name().to_string());
        push("ns", join(&self.ns));
        push("ps", join(&self.ps));
        push("eps", join(&self.eps));
        if matches!(self.policy, RankPolicy::RelativeTolerance(_)) {
            a.push("--relative".into());
        }
        a
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Exit code and machine-readable kind of an error.
pub fn error_kind(e: &Error) -> (i32, &'static str) {
    match e {
        Error::MaxIterations(_) => (1, "not-converged"),
        Error::Io(_) | Error::Parse { .. } | Error::UnsupportedField(_) | Error::Format(_) => (2, "io"),
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::InsufficientSamples => (3, "invalid-config"),
        _ => (4, "numeric"),
    }
}

/// Inserts the flags of `--config` files right after the subcommand so that
/// explicit flags, which come later, take precedence.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.to_string_lossy())))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: ln + 1, msg: format!("expected key=value, got {line:?}") })?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        if k == "config" {
            continue;
        }
        if k == "relative" {
            if v == "true" {
                extra.push("--relative".into());
            }
            continue;
        }
        extra.push(format!("--{k}").into());
        extra.push(v.into());
    }
    let at = args.len().min(2);
    let mut out = args[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

/// Output of a command: the JSON document and an optional failure.
pub(crate) struct Output {
    pub json: serde_json::Value,
    pub error: Option<Error>,
}

impl Output {
    fn ok(json: serde_json::Value) -> Self {
        Output { json, error: None }
    }
}

/// Runs the CLI on `args` (program name first), writing the JSON document
/// to `stdout`. Returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let report = |stdout: &mut dyn std::io::Write, e: &Error, out_json: Option<&PathBuf>| {
        let (code, kind) = error_kind(e);
        let doc = serde_json::json!({ "error": kind, "message": e.to_string() });
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let _ = writeln!(stdout, "{text}");
        if let Some(p) = out_json {
            let _ = std::fs::write(p, &text);
        }
        code
    };
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => return report(stdout, &e, None),
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            eprint!("{e}");
            return report(stdout, &Error::InvalidConfig(e.kind().to_string()), None);
        }
    };
    let (name, flags) = cli.command.parts();
    let cfg = match RunConfig::from_flags(flags) {
        Ok(c) => c,
        Err(e) => return report(stdout, &e, flags.out_json.as_ref()),
    };
    let result = match name {
        "gen" => run::gen(&cfg),
        "factor" => run::factor(&cfg),
        "solve" => run::solve(&cfg),
        "bench" => bench::bench(&cfg),
        "psim" => bench::psim(&cfg),
        _ => bench::color_check(&cfg),
    };
    match result {
        Ok(Output { mut json, error }) => {
            json["command"] = name.into();
            json["version"] = env!("CARGO_PKG_VERSION").into();
            json["config"] = serde_json::to_value(&cfg).unwrap();
            json["args"] = serde_json::to_value(cfg.to_args()).unwrap();
            let code = match &error {
                Some(e) => {
                    let (code, kind) = error_kind(e);
                    json["error"] = kind.into();
                    json["message"] = e.to_string().into();
                    code
                }
                None => 0,
            };
            let text = serde_json::to_string_pretty(&json).unwrap();
            let _ = writeln!(stdout, "{text}");
            if let Some(p) = &cfg.out_json {
                if let Err(e) = std::fs::write(p, &text) {
                    return report(stdout, &Error::Io(format!("{}: {e}", p.display())), None);
                }
            }
            code
        }
        Err(e) => report(stdout, &e, cfg.out_json.as_ref()),
    }
}
