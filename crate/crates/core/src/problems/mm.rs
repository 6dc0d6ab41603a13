use crate::block::SymmetryFlag;
use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const SYMMETRY_TOL: f64 = 1e-12;

/// Reads a real or integer coordinate Matrix Market file.
///
/// Symmetric and skew-symmetric storage is expanded to full storage and
/// duplicate entries are summed. The returned flag is `Spd` for symmetric
/// matrices with a positive diagonal, `SymmetricIndefinite` for other
/// symmetric ones and `General` otherwise.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<(CsrMatrix, SymmetryFlag)> {
    let text = std::fs::read_to_string(path)?;
    read_matrix_market_str(&text)
}

pub fn read_matrix_market_str(text: &str) -> Result<(CsrMatrix, SymmetryFlag)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: "missing %%MatrixMarket matrix header".into() });
    }
    if tokens[2] != "coordinate" {
        return Err(Error::UnsupportedField(format!("format {}", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedField(other.to_string())),
    }
    let storage = tokens[4].as_str();
    if !matches!(storage, "general" | "symmetric" | "skew-symmetric") {
        return Err(Error::UnsupportedField(storage.to_string()));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut read = 0usize;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(bad("expected `rows cols nnz`"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid size line"));
                size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
                triplets.reserve(2 * size.unwrap().2);
            }
            Some((rows, cols, _)) => {
                if parts.len() != 3 {
                    return Err(bad("expected `row col value`"));
                }
                let i: usize = parts[0].parse().map_err(|_| bad("invalid row index"))?;
                let j: usize = parts[1].parse().map_err(|_| bad("invalid column index"))?;
                let v: f64 = parts[2].parse().map_err(|_| bad("invalid value"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(bad("index out of range"));
                }
                if !v.is_finite() {
                    return Err(bad("non-finite value"));
                }
                let (i, j) = (i - 1, j - 1);
                read += 1;
                triplets.push((i, j, v));
                if i != j {
                    match storage {
                        "symmetric" => triplets.push((j, i, v)),
                        "skew-symmetric" => triplets.push((j, i, -v)),
                        _ => {}
                    }
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or(Error::Parse { line: 0, msg: "missing size line".into() })?;
    if read != nnz {
        return Err(Error::Parse { line: 0, msg: format!("expected {nnz} entries, found {read}") });
    }
    let csr = CsrMatrix::from_triplets(rows, cols, &triplets)?;
    let flag = classify(&csr, storage == "symmetric");
    Ok((csr, flag))
}

fn classify(a: &CsrMatrix, header_symmetric: bool) -> SymmetryFlag {
    if a.rows() != a.cols() {
        return SymmetryFlag::General;
    }
    if header_symmetric || a.is_symmetric(SYMMETRY_TOL) {
        if a.diagonal().iter().all(|&d| d > 0.0) {
            SymmetryFlag::Spd
        } else {
            SymmetryFlag::SymmetricIndefinite
        }
    } else {
        SymmetryFlag::General
    }
}

/// Writes `a` in coordinate format. With `symmetric`, only the lower triangle
/// is stored and the header says so.
pub fn write_matrix_market_string(a: &CsrMatrix, symmetric: bool) -> String {
    let entries: Vec<_> = a.triplets().filter(|&(i, j, _)| !symmetric || i >= j).collect();
    let mut s = String::with_capacity(32 * entries.len() + 64);
    let kind = if symmetric { "symmetric" } else { "general" };
    let _ = writeln!(s, "%%MatrixMarket matrix coordinate real {kind}");
    let _ = writeln!(s, "{} {} {}", a.rows(), a.cols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
    }
    s
}

pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix, symmetric: bool) -> Result<()> {
    std::fs::write(path, write_matrix_market_string(a, symmetric))?;
    Ok(())
}
