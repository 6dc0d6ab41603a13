use hsolve::cli::{run_with, BENCH_HEADER};
use hsolve::problems::read_matrix_market;
use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, Value) {
    let mut out = Vec::new();
    let code = run_with(std::iter::once("hsolve").chain(args.iter().copied()), &mut out);
    let text = String::from_utf8(out).unwrap();
    (code, serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}")))
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

#[test]
fn gen_poisson_writes_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "p.mtx");
    let (code, doc) = run(&["gen", "--problem", "poisson", "--n", "8", "--out", &path]);
    assert_eq!(code, 0);
    assert_eq!(doc["rows"], 512);
    assert_eq!(read_matrix_market(&path).unwrap().0.rows(), 512);
}

#[test]
fn gen_vcpoisson_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (tmp(&dir, "a.mtx"), tmp(&dir, "b.mtx"));
    for p in [&a, &b] {
        assert_eq!(run(&["gen", "--problem", "vcpoisson", "--n", "8", "--seed", "1", "--out", p]).0, 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gen_helmholtz_header_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "h.mtx");
    assert_eq!(run(&["gen", "--problem", "helmholtz", "--n", "32", "--freq", "1", "--out", &path]).0, 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().ends_with("symmetric"));
}

#[test]
fn solve_poisson_converges_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = (tmp(&dir, "s.json"), tmp(&dir, "s.csv"));
    let (code, doc) =
        run(&["solve", "--problem", "poisson", "--n", "16", "--rank", "8", "--solve-tol", "1e-12", "--out-json", &json, "--out-csv", &csv]);
    assert_eq!(code, 0);
    assert_eq!(doc["converged"], true);
    for key in ["iterations", "residuals", "setup_seconds", "solve_seconds", "total_seconds", "memory_bytes", "version", "config"] {
        assert!(!doc[key].is_null(), "{key}");
    }
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(saved["iterations"], doc["iterations"]);
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().next(), Some("iteration,residual"));
    assert_eq!(rows.lines().count(), doc["iterations"].as_u64().unwrap() as usize + 2);
}

#[test]
fn echoed_args_reproduce_the_run() {
    let (code, first) = run(&["solve", "--problem", "vcpoisson", "--n", "8", "--seed", "3", "--tol", "0.01", "--cluster-size", "32"]);
    assert_eq!(code, 0);
    let args: Vec<String> = first["args"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let mut again = vec!["solve"];
    again.extend(args.iter().map(String::as_str));
    let (code, second) = run(&again);
    assert_eq!(code, 0);
    assert_eq!(first["config"], second["config"]);
    assert_eq!(first["residuals"], second["residuals"]);
}

#[test]
fn not_converged_exits_one() {
    let (code, doc) = run(&["solve", "--n", "16", "--rank", "1", "--maxit", "1"]);
    assert_eq!(code, 1);
    assert_eq!(doc["error"], "not-converged");
    assert_eq!(doc["converged"], false);
}

#[test]
fn unreadable_input_exits_two() {
    let (code, doc) = run(&["solve", "--matrix", "/nonexistent/a.mtx"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"], "io");
}

#[test]
fn invalid_config_exits_three() {
    for args in [
        vec!["solve", "--workers", "0"],
        vec!["solve", "--solve-tol", "0"],
        vec!["solve", "--rank", "4", "--tol", "0.1"],
        vec!["solve", "--matrix", "a.mtx", "--problem", "poisson"],
        vec!["solve", "--coloring", "rainbow"],
        vec!["gen", "--problem", "poisson"],
    ] {
        let (code, doc) = run(&args);
        assert_eq!(code, 3, "{args:?}");
        assert_eq!(doc["error"], "invalid-config");
    }
}

#[test]
fn invalid_coloring_exits_four() {
    let (code, doc) = run(&["color-check", "--n", "16", "--workers", "4", "--coloring", "trivial"]);
    assert_eq!(code, 4);
    assert_eq!(doc["valid"], false);
    let (code, doc) = run(&["color-check", "--n", "16", "--workers", "4", "--coloring", "owner-aware"]);
    assert_eq!(code, 0);
    assert!(doc["color_counts"]["owner-aware"].as_u64() <= doc["color_counts"]["strict"].as_u64());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tmp(&dir, "run.cfg");
    std::fs::write(&cfg, "# desk run\nproblem = poisson\nn = 8\nrank = 4\ncluster_size = 32\n").unwrap();
    let (code, doc) = run(&["factor", "--config", &cfg, "--rank", "6"]);
    assert_eq!(code, 0);
    assert_eq!(doc["config"]["problem"]["n"], 8);
    assert_eq!(doc["config"]["cluster_size"], 32);
    assert_eq!(doc["config"]["policy"]["FixedRank"], 6);
    std::fs::write(&cfg, "n 8\n").unwrap();
    assert_eq!(run(&["factor", "--config", &cfg]).0, 2);
}

#[test]
fn factor_writes_factor_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "f.hsf");
    let (code, doc) = run(&["factor", "--n", "8", "--cluster-size", "32", "--out", &path]);
    assert_eq!(code, 0);
    let f = hsolve::factor::read_factor(&path).unwrap();
    assert_eq!(doc["levels"].as_u64().unwrap() as usize, f.levels.len());
}

#[test]
fn bench_rows_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tmp(&dir, "b.csv");
    let (code, doc) = run(&["bench", "--sweep", "p", "--n", "8", "--cluster-size", "32", "--ps", "1,2", "--out-csv", &csv]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(BENCH_HEADER));
    assert_eq!(text.lines().count(), 3);
    let strong = doc["scaling"]["strong"].as_array().unwrap();
    let row = strong.iter().find(|r| r["p"] == 2).unwrap();
    let t: Vec<f64> = doc["rows"].as_array().unwrap().iter().map(|r| r["virtual_makespan"].as_f64().unwrap()).collect();
    assert!((row["S"].as_f64().unwrap() - t[0] / t[1]).abs() < 1e-12);
}

#[test]
fn bench_flags_failed_rows_and_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tmp(&dir, "b.csv");
    let (code, doc) = run(&["bench", "--sweep", "n", "--ns", "1,8", "--cluster-size", "32", "--out-csv", &csv]);
    assert_eq!(code, 3);
    let rows = doc["rows"].as_array().unwrap();
    let failed: Vec<bool> = rows.iter().map(|r| r["failed"].as_bool().unwrap()).collect();
    assert_eq!(failed, vec![true, false]);
    assert_eq!(rows[1]["converged"], true);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn psim_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tmp(&dir, "p.csv");
    let (code, doc) = run(&["psim", "--n", "8", "--cluster-size", "32", "--workers", "2", "--out-csv", &csv]);
    assert_eq!(code, 0);
    assert_eq!(doc["matches_canonical"], true);
    assert_eq!(doc["locality_violations"], 0);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/psim_n8_p2.csv");
    assert_eq!(std::fs::read_to_string(csv).unwrap(), std::fs::read_to_string(golden).unwrap());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_hsolve");
    let status = Command::new(bin).args(["solve", "--matrix", "/nonexistent/a.mtx"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(bin).args(["solve", "--n", "8", "--cluster-size", "32"]).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let status = Command::new(bin).args(["--help"]).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
