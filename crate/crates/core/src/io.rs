//! Problem directories on disk.
//!
//! A problem is a directory holding
//!
//! * `meta.json` — dimensions, block sizes, objective kinds, per-block
//!   strong convexity, generator seed;
//! * `A.mtx` — the constraint matrix in MatrixMarket form (coordinate for
//!   sparse storage, array for dense, both column-major order);
//! * `b.vec` — the right-hand side, one float per line;
//! * `x_star.vec` — the planted solution, when the instance has one.
//!
//! Floats are serialized with 17 significant digits in C-locale formatting,
//! which round-trips every f64 exactly, so regenerating a directory from the
//! same seed reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::block::{BlockData, BlockMatrix, CscBlock};
use crate::error::{Error, Result};
use crate::objective::{BlockObjective, SeparableObjective};
use crate::problem::Problem;

pub const META_FILE: &str = "meta.json";
pub const MATRIX_FILE: &str = "A.mtx";
pub const RHS_FILE: &str = "b.vec";
pub const X_STAR_FILE: &str = "x_star.vec";

/// 17 significant digits; parses back to the identical f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub m: usize,
    pub block_sizes: Vec<usize>,
    /// One of `half_sq_l2`, `l1`, `weighted_quadratic`, `custom_prox`.
    pub objective_kinds: Vec<String>,
    /// Per-block strong convexity; for `weighted_quadratic` this is the
    /// quadratic weight itself.
    pub mu: Vec<f64>,
    pub seed: u64,
}

fn kind_string(obj: &BlockObjective) -> &'static str {
    match obj {
        BlockObjective::HalfSquaredL2 => "half_sq_l2",
        BlockObjective::L1 => "l1",
        BlockObjective::WeightedQuadratic { .. } => "weighted_quadratic",
        BlockObjective::CustomProx { .. } => "custom_prox",
    }
}

fn kind_from_string(path: &Path, kind: &str, mu: f64) -> Result<BlockObjective> {
    match kind {
        "half_sq_l2" => {
            if (mu - 1.0).abs() > 1e-12 {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("half_sq_l2 must have mu = 1, got {mu}"),
                ));
            }
            Ok(BlockObjective::HalfSquaredL2)
        }
        "l1" => {
            if mu != 0.0 {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("l1 must have mu = 0, got {mu}"),
                ));
            }
            Ok(BlockObjective::L1)
        }
        "weighted_quadratic" => BlockObjective::weighted_quadratic(mu),
        "custom_prox" => Ok(BlockObjective::CustomProx { mu, prox: None }),
        other => Err(Error::parse(
            path.display().to_string(),
            format!("unknown objective kind `{other}`"),
        )),
    }
}

/// Write a problem directory. `x_star`, when given, lands in `x_star.vec`.
pub fn write_problem(
    dir: &Path,
    problem: &Problem,
    family: Option<&str>,
    seed: u64,
    x_star: Option<&[f64]>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let meta = ProblemMeta {
        family: family.map(str::to_owned),
        m: problem.row_dim(),
        block_sizes: problem.partition().sizes().to_vec(),
        objective_kinds: problem
            .objective()
            .terms()
            .iter()
            .map(|t| kind_string(t).to_owned())
            .collect(),
        mu: problem
            .objective()
            .terms()
            .iter()
            .map(|t| t.strong_convexity())
            .collect(),
        seed,
    };
    let meta_path = dir.join(META_FILE);
    let mut meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
    meta_json.push('\n');
    fs::write(&meta_path, meta_json).map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    let mtx_path = dir.join(MATRIX_FILE);
    fs::write(&mtx_path, matrix_market_string(problem.matrix()))
        .map_err(|e| Error::io(mtx_path.display().to_string(), e))?;

    write_vec(&dir.join(RHS_FILE), problem.rhs())?;
    if let Some(xs) = x_star {
        write_vec(&dir.join(X_STAR_FILE), xs)?;
    }
    Ok(())
}

/// Read a problem directory back; the planted solution is returned when
/// `x_star.vec` exists.
pub fn read_problem(dir: &Path) -> Result<(Problem, ProblemMeta, Option<Vec<f64>>)> {
    let meta_path = dir.join(META_FILE);
    let meta_raw =
        fs::read_to_string(&meta_path).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let meta: ProblemMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
    if meta.objective_kinds.len() != meta.block_sizes.len()
        || meta.mu.len() != meta.block_sizes.len()
    {
        return Err(Error::parse(
            meta_path.display().to_string(),
            "objective_kinds, mu, and block_sizes must have equal lengths",
        ));
    }

    let mtx_path = dir.join(MATRIX_FILE);
    let mtx_raw =
        fs::read_to_string(&mtx_path).map_err(|e| Error::io(mtx_path.display().to_string(), e))?;
    let a = parse_matrix_market(&mtx_path, &mtx_raw, meta.m, &meta.block_sizes)?;

    let b = read_vec(&dir.join(RHS_FILE))?;
    if b.len() != meta.m {
        return Err(Error::parse(
            dir.join(RHS_FILE).display().to_string(),
            format!("expected {} entries, found {}", meta.m, b.len()),
        ));
    }

    let terms = meta
        .objective_kinds
        .iter()
        .zip(&meta.mu)
        .map(|(kind, &mu)| kind_from_string(&meta_path, kind, mu))
        .collect::<Result<Vec<_>>>()?;
    let objective = SeparableObjective::new(terms)?;
    let problem = Problem::new(a, b, objective)?;

    let x_star_path = dir.join(X_STAR_FILE);
    let x_star = if x_star_path.exists() {
        let xs = read_vec(&x_star_path)?;
        if xs.len() != problem.col_dim() {
            return Err(Error::parse(
                x_star_path.display().to_string(),
                format!("expected {} entries, found {}", problem.col_dim(), xs.len()),
            ));
        }
        Some(xs)
    } else {
        None
    };
    Ok((problem, meta, x_star))
}

/// Plain text vector: one float per line.
pub fn write_vec(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 26);
    for v in values {
        out.push_str(&format_float(*v));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_vec(path: &Path) -> Result<Vec<f64>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
        })
        .collect()
}

/// Render the matrix in MatrixMarket form: coordinate when any block is
/// sparse, array when all blocks are dense. Entries stream in global
/// column-major order, 1-based in the coordinate case.
pub fn matrix_market_string(a: &BlockMatrix) -> String {
    let any_sparse = a
        .blocks()
        .iter()
        .any(|b| matches!(b, BlockData::Sparse(_)));
    let m = a.row_dim();
    let n = a.col_dim();
    let mut out = String::new();
    if any_sparse {
        let nnz: usize = a
            .blocks()
            .iter()
            .map(|b| match b {
                BlockData::Sparse(c) => c.nnz(),
                BlockData::Dense { values, .. } => values.iter().filter(|v| **v != 0.0).count(),
            })
            .sum();
        out.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{m} {n} {nnz}");
        let mut col0 = 0usize;
        for block in a.blocks() {
            match block {
                BlockData::Sparse(csc) => {
                    for c in 0..csc.cols {
                        for k in csc.col_ptr[c]..csc.col_ptr[c + 1] {
                            let _ = writeln!(
                                out,
                                "{} {} {}",
                                csc.row_idx[k] + 1,
                                col0 + c + 1,
                                format_float(csc.values[k])
                            );
                        }
                    }
                }
                BlockData::Dense { rows, cols, values } => {
                    for c in 0..*cols {
                        for r in 0..*rows {
                            let v = values[c * rows + r];
                            if v != 0.0 {
                                let _ = writeln!(
                                    out,
                                    "{} {} {}",
                                    r + 1,
                                    col0 + c + 1,
                                    format_float(v)
                                );
                            }
                        }
                    }
                }
            }
            col0 += block.cols();
        }
    } else {
        out.push_str("%%MatrixMarket matrix array real general\n");
        let _ = writeln!(out, "{m} {n}");
        for block in a.blocks() {
            if let BlockData::Dense { rows, cols, values } = block {
                for c in 0..*cols {
                    for r in 0..*rows {
                        out.push_str(&format_float(values[c * rows + r]));
                        out.push('\n');
                    }
                }
            }
        }
    }
    out
}

fn parse_matrix_market(
    path: &Path,
    raw: &str,
    expected_m: usize,
    block_sizes: &[usize],
) -> Result<BlockMatrix> {
    let p = || path.display().to_string();
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(p(), "empty file"))?;
    let header_lc = header.to_ascii_lowercase();
    if !header_lc.starts_with("%%matrixmarket matrix") {
        return Err(Error::parse(p(), "missing MatrixMarket header"));
    }
    let coordinate = header_lc.contains("coordinate");
    if !coordinate && !header_lc.contains("array") {
        return Err(Error::parse(p(), "expected coordinate or array format"));
    }
    if !header_lc.contains("real") || !header_lc.contains("general") {
        return Err(Error::parse(p(), "expected `real general` qualifier"));
    }
    let mut lines = lines.filter(|l| !l.trim_start().starts_with('%'));
    let size_line = lines
        .next()
        .ok_or_else(|| Error::parse(p(), "missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::parse(p(), e.to_string()))
        })
        .collect::<Result<_>>()?;

    let n_total: usize = block_sizes.iter().sum();
    let col_block = |col: usize| -> (usize, usize) {
        let mut acc = 0usize;
        for (j, &s) in block_sizes.iter().enumerate() {
            if col < acc + s {
                return (j, col - acc);
            }
            acc += s;
        }
        unreachable!("column bounds checked before lookup")
    };

    if coordinate {
        if dims.len() != 3 {
            return Err(Error::parse(p(), "coordinate size line needs `m n nnz`"));
        }
        let (m, n, nnz) = (dims[0], dims[1], dims[2]);
        if m != expected_m || n != n_total {
            return Err(Error::parse(
                p(),
                format!("matrix is {m}x{n}, meta says {expected_m}x{n_total}"),
            ));
        }
        let mut per_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); block_sizes.len()];
        let mut count = 0usize;
        for line in lines {
            let mut it = line.split_whitespace();
            let (r, c, v) = match (it.next(), it.next(), it.next()) {
                (Some(r), Some(c), Some(v)) => (r, c, v),
                _ => return Err(Error::parse(p(), format!("bad entry line `{line}`"))),
            };
            let r: usize = r.parse().map_err(|e: std::num::ParseIntError| {
                Error::parse(p(), e.to_string())
            })?;
            let c: usize = c.parse().map_err(|e: std::num::ParseIntError| {
                Error::parse(p(), e.to_string())
            })?;
            let v: f64 = v
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::parse(p(), e.to_string()))?;
            if r == 0 || c == 0 || r > m || c > n {
                return Err(Error::parse(p(), format!("entry ({r}, {c}) out of range")));
            }
            let (j, local) = col_block(c - 1);
            per_block[j].push((r - 1, local, v));
            count += 1;
        }
        if count != nnz {
            return Err(Error::parse(
                p(),
                format!("header promises {nnz} entries, found {count}"),
            ));
        }
        let blocks = per_block
            .iter()
            .zip(block_sizes)
            .map(|(trip, &cols)| {
                CscBlock::from_triplets(m, cols, trip).map(BlockData::Sparse)
            })
            .collect::<Result<Vec<_>>>()?;
        BlockMatrix::from_blocks(blocks)
    } else {
        if dims.len() != 2 {
            return Err(Error::parse(p(), "array size line needs `m n`"));
        }
        let (m, n) = (dims[0], dims[1]);
        if m != expected_m || n != n_total {
            return Err(Error::parse(
                p(),
                format!("matrix is {m}x{n}, meta says {expected_m}x{n_total}"),
            ));
        }
        let values: Vec<f64> = lines
            .flat_map(|l| l.split_whitespace())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(p(), e.to_string()))
            })
            .collect::<Result<_>>()?;
        if values.len() != m * n {
            return Err(Error::parse(
                p(),
                format!("expected {} values, found {}", m * n, values.len()),
            ));
        }
        let mut blocks = Vec::with_capacity(block_sizes.len());
        let mut col0 = 0usize;
        for &cols in block_sizes {
            let slice = values[col0 * m..(col0 + cols) * m].to_vec();
            blocks.push(BlockData::dense(m, cols, slice)?);
            col0 += cols;
        }
        BlockMatrix::from_blocks(blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{gen_l1, gen_l2, L1InstanceSpec, L2InstanceSpec};

    fn problems_equal(p1: &Problem, p2: &Problem) -> bool {
        if p1.rhs() != p2.rhs() || p1.partition() != p2.partition() {
            return false;
        }
        p1.matrix()
            .blocks()
            .iter()
            .zip(p2.matrix().blocks())
            .all(|(b1, b2)| b1.to_dense() == b2.to_dense())
    }

    #[test]
    fn sparse_problem_round_trips() {
        let spec = L2InstanceSpec::reduced(25, 5, 8);
        let problem = gen_l2(&spec, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_problem(dir.path(), &problem, Some("l2"), 17, None).unwrap();
        let (loaded, meta, x_star) = read_problem(dir.path()).unwrap();
        assert!(problems_equal(&problem, &loaded));
        assert_eq!(meta.seed, 17);
        assert_eq!(meta.family.as_deref(), Some("l2"));
        assert_eq!(meta.mu, vec![1.0; 5]);
        assert!(x_star.is_none());
        assert!(matches!(
            loaded.matrix().block(0),
            BlockData::Sparse(_)
        ));
    }

    #[test]
    fn dense_problem_round_trips_with_x_star() {
        let spec = L1InstanceSpec::reduced(12, 4, 3, 5);
        let (problem, x_star) = gen_l1(&spec, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_problem(dir.path(), &problem, Some("l1"), 9, Some(&x_star)).unwrap();
        let (loaded, meta, xs) = read_problem(dir.path()).unwrap();
        assert!(problems_equal(&problem, &loaded));
        assert_eq!(meta.objective_kinds, vec!["l1"; 4]);
        assert_eq!(xs.as_deref(), Some(&x_star[..]));
        assert!(matches!(loaded.matrix().block(0), BlockData::Dense { .. }));
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let spec = L2InstanceSpec::reduced(10, 3, 4);
        let problem = gen_l2(&spec, 3).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_problem(d1.path(), &problem, Some("l2"), 3, None).unwrap();
        write_problem(d2.path(), &problem, Some("l2"), 3, None).unwrap();
        for name in [META_FILE, MATRIX_FILE, RHS_FILE] {
            let f1 = std::fs::read(d1.path().join(name)).unwrap();
            let f2 = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(f1, f2, "{name} differs between identical writes");
        }
    }

    #[test]
    fn float_format_round_trips_exactly() {
        let samples = [
            0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1e-300,
            -3.3333333333333333e17,
            f64::MIN_POSITIVE,
            0.1 + 0.2,
        ];
        for &x in &samples {
            let s = format_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn missing_files_report_path() {
        let dir = tempfile::tempdir().unwrap();
        match read_problem(dir.path()) {
            Err(Error::Io { path, .. }) => assert!(path.contains("meta.json")),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
