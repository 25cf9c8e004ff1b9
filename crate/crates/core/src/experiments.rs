//! The two benchmark families (minimum-2-norm and basis-pursuit instances),
//! an independent KKT-based solution oracle, and the multi-run averaged
//! sweep driver behind the benchmark tables.
//!
//! Randomness is fully pinned: every instance comes from a ChaCha8 generator
//! keyed by the instance seed, with stream 1 feeding the constraint matrix
//! and stream 2 the planted vector (`z` resp. `x*`). A sweep derives the
//! seed of run `r` as `base_seed + r` (wrapping), so cell `r` sees the same
//! instance for every algorithm in the row.

use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{BlockData, BlockMatrix, BlockVector, CscBlock, Grouping};
use crate::engine::{self, InitKind, RunRefs, Schedule, SolverConfig, StopRule};
use crate::error::{Error, Result};
use crate::objective::{BlockObjective, SeparableObjective};
use crate::problem::Problem;
use crate::tau::{self, RegularizerPolicy, TauRule};

/// RNG stream carrying the constraint matrix entries.
pub const STREAM_MATRIX: u64 = 1;
/// RNG stream carrying the planted vector (`z` for l2, `x*` for l1).
pub const STREAM_SOLUTION: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minimum-2-norm family: sparse Gaussian constraints, feasible by
/// construction (`b := A z`), every term `  (1/2)||x_i||^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2InstanceSpec {
    pub m: usize,
    pub n_blocks: usize,
    pub block_size: usize,
    pub nnz_per_row: usize,
    pub rho: f64,
    pub gamma: f64,
    /// Stop: `(1/2)||Ax - b||^2 <= stop_tol`.
    pub stop_tol: f64,
    /// Group count for the hybrid schedule.
    pub hadmm_groups: usize,
}

impl Default for L2InstanceSpec {
    fn default() -> Self {
        Self {
            m: 3000,
            n_blocks: 100,
            block_size: 100,
            nnz_per_row: 20,
            rho: 0.1,
            gamma: 1.0,
            stop_tol: 1e-10,
            hadmm_groups: 10,
        }
    }
}

impl L2InstanceSpec {
    pub fn total_cols(&self) -> usize {
        self.n_blocks * self.block_size
    }

    /// Shrunk instance with the same geometry, for fast tests.
    pub fn reduced(scale_m: usize, n_blocks: usize, block_size: usize) -> Self {
        Self {
            m: scale_m,
            n_blocks,
            block_size,
            nnz_per_row: 20.min(n_blocks * block_size),
            ..Self::default()
        }
    }
}

/// Basis-pursuit family: dense Gaussian constraints, planted sparse signal,
/// every term `||x_i||_1`, `rho = rho_numerator / ||b||_1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1InstanceSpec {
    pub m: usize,
    pub n_blocks: usize,
    pub block_size: usize,
    pub sparsity_k: usize,
    pub rho_numerator: f64,
    pub gamma: f64,
    /// Stop: `||x - x*|| / ||x*|| <= stop_tol`.
    pub stop_tol: f64,
    pub hadmm_groups: usize,
}

impl Default for L1InstanceSpec {
    fn default() -> Self {
        Self {
            m: 300,
            n_blocks: 100,
            block_size: 10,
            sparsity_k: 60,
            rho_numerator: 10.0,
            gamma: 1.0,
            stop_tol: 1e-10,
            hadmm_groups: 25,
        }
    }
}

impl L1InstanceSpec {
    pub fn total_cols(&self) -> usize {
        self.n_blocks * self.block_size
    }

    pub fn reduced(m: usize, n_blocks: usize, block_size: usize, k: usize) -> Self {
        Self {
            m,
            n_blocks,
            block_size,
            sparsity_k: k,
            ..Self::default()
        }
    }

    pub fn rho_for(&self, b: &[f64]) -> f64 {
        let l1: f64 = b.iter().map(|v| v.abs()).sum();
        self.rho_numerator / l1
    }
}

/// Generate one l2 instance. The matrix carries exactly
/// `m * nnz_per_row` distinct nonzero positions sampled uniformly over the
/// whole grid — approximately `nnz_per_row` per row — with standard Gaussian
/// values drawn in sorted (column-major) position order.
pub fn gen_l2(spec: &L2InstanceSpec, seed: u64) -> Result<Problem> {
    let n_cols = spec.total_cols();
    if spec.nnz_per_row > n_cols {
        return Err(Error::InvalidParameter(format!(
            "nnz_per_row {} exceeds column count {n_cols}",
            spec.nnz_per_row
        )));
    }
    let mut rng_a = stream_rng(seed, STREAM_MATRIX);
    let mut per_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); spec.n_blocks];
    // Positions are linear indices in column-major order, so the sorted
    // draw order is the CSC storage order.
    let mut positions: Vec<usize> =
        rand::seq::index::sample(&mut rng_a, spec.m * n_cols, spec.m * spec.nnz_per_row)
            .into_vec();
    positions.sort_unstable();
    for pos in positions {
        let (row, col) = (pos % spec.m, pos / spec.m);
        let value: f64 = StandardNormal.sample(&mut rng_a);
        let block = col / spec.block_size;
        per_block[block].push((row, col % spec.block_size, value));
    }
    let blocks: Vec<BlockData> = per_block
        .iter()
        .map(|trip| {
            CscBlock::from_triplets(spec.m, spec.block_size, trip).map(BlockData::Sparse)
        })
        .collect::<Result<_>>()?;
    let a = BlockMatrix::from_blocks(blocks)?;

    let mut rng_z = stream_rng(seed, STREAM_SOLUTION);
    let z: Vec<f64> = (0..n_cols).map(|_| StandardNormal.sample(&mut rng_z)).collect();
    let zv = BlockVector::from_flat(a.partition().clone(), z)?;
    let b = a.full_apply(&zv)?;

    let objective = SeparableObjective::uniform(BlockObjective::HalfSquaredL2, spec.n_blocks)?;
    Problem::new(a, b, objective)
}

/// Generate one l1 instance plus its planted solution. `x*` has
/// `sparsity_k` uniformly located Gaussian nonzeros (positions sorted before
/// values are drawn) and `b := A x*`.
pub fn gen_l1(spec: &L1InstanceSpec, seed: u64) -> Result<(Problem, Vec<f64>)> {
    let n_cols = spec.total_cols();
    if spec.sparsity_k > n_cols {
        return Err(Error::InvalidParameter(format!(
            "sparsity {} exceeds column count {n_cols}",
            spec.sparsity_k
        )));
    }
    let mut rng_a = stream_rng(seed, STREAM_MATRIX);
    let blocks: Vec<BlockData> = (0..spec.n_blocks)
        .map(|_| {
            let values: Vec<f64> = (0..spec.m * spec.block_size)
                .map(|_| StandardNormal.sample(&mut rng_a))
                .collect();
            BlockData::dense(spec.m, spec.block_size, values)
        })
        .collect::<Result<_>>()?;
    let a = BlockMatrix::from_blocks(blocks)?;

    let mut rng_x = stream_rng(seed, STREAM_SOLUTION);
    let mut support: Vec<usize> =
        rand::seq::index::sample(&mut rng_x, n_cols, spec.sparsity_k).into_vec();
    support.sort_unstable();
    let mut x_star = vec![0.0; n_cols];
    for &pos in &support {
        x_star[pos] = StandardNormal.sample(&mut rng_x);
    }
    let xv = BlockVector::from_flat(a.partition().clone(), x_star.clone())?;
    let b = a.full_apply(&xv)?;

    let objective = SeparableObjective::uniform(BlockObjective::L1, spec.n_blocks)?;
    Ok((Problem::new(a, b, objective)?, x_star))
}

/// Reference solution of the l2 problem through its KKT system: with
/// `f = (1/2)||x||^2` stationarity reads `x* = A^T y*`, so `A A^T y* = b`.
/// Solved by a dense Cholesky factorization of `A A^T`; a rank-deficient
/// system falls back to the minimum-norm least-squares solution.
pub fn l2_kkt_oracle(a: &BlockMatrix, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = a.row_dim();
    if b.len() != m {
        return Err(Error::Shape(format!(
            "rhs has length {}, expected {m}",
            b.len()
        )));
    }
    let mut aat = nalgebra::DMatrix::<f64>::zeros(m, m);
    for block in a.blocks() {
        match block {
            BlockData::Sparse(csc) => {
                for c in 0..csc.cols {
                    let lo = csc.col_ptr[c];
                    let hi = csc.col_ptr[c + 1];
                    for k1 in lo..hi {
                        let (r1, v1) = (csc.row_idx[k1], csc.values[k1]);
                        for k2 in lo..hi {
                            aat[(r1, csc.row_idx[k2])] += v1 * csc.values[k2];
                        }
                    }
                }
            }
            BlockData::Dense { rows, cols, values } => {
                for c in 0..*cols {
                    let col = nalgebra::DVector::from_column_slice(&values[c * rows..(c + 1) * rows]);
                    aat.ger(1.0, &col, &col, 1.0);
                }
            }
        }
    }

    let rhs = nalgebra::DVector::from_column_slice(b);
    let y = match aat.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            log::warn!("A A^T is rank deficient; using minimum-norm least squares for y*");
            let svd = aat.svd(true, true);
            svd.solve(&rhs, 1e-12)
                .map_err(|e| Error::InvalidParameter(format!("SVD solve failed: {e}")))?
        }
    };
    let y_star = y.as_slice().to_vec();
    let x_star = a.full_apply_transpose(&y_star)?;
    Ok((x_star, y_star))
}

/// Benchmark family selector for sweeps and the problem-file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilySpec {
    L2(L2InstanceSpec),
    L1(L1InstanceSpec),
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::L2(_) => "l2",
            FamilySpec::L1(_) => "l1",
        }
    }

    pub fn hadmm_groups(&self) -> usize {
        match self {
            FamilySpec::L2(s) => s.hadmm_groups,
            FamilySpec::L1(s) => s.hadmm_groups,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            FamilySpec::L2(s) => s.gamma,
            FamilySpec::L1(s) => s.gamma,
        }
    }

    /// Generate the instance for one run.
    pub fn generate(&self, seed: u64) -> Result<GeneratedInstance> {
        match self {
            FamilySpec::L2(spec) => {
                let problem = gen_l2(spec, seed)?;
                Ok(GeneratedInstance {
                    rho: spec.rho,
                    gamma: spec.gamma,
                    stop: StopRule::ConstraintResidual { tol: spec.stop_tol },
                    x_star: None,
                    problem,
                })
            }
            FamilySpec::L1(spec) => {
                let (problem, x_star) = gen_l1(spec, seed)?;
                let rho = spec.rho_for(problem.rhs());
                Ok(GeneratedInstance {
                    rho,
                    gamma: spec.gamma,
                    stop: StopRule::RelativeError { tol: spec.stop_tol },
                    x_star: Some(x_star),
                    problem,
                })
            }
        }
    }
}

/// One generated benchmark instance with its run parameters.
pub struct GeneratedInstance {
    pub problem: Problem,
    pub x_star: Option<Vec<f64>>,
    pub rho: f64,
    pub gamma: f64,
    pub stop: StopRule,
}

/// The four update schedules by their benchmark names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Jadmm,
    Fadmm,
    Hadmm,
    Hadmm2,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Jadmm => "jadmm",
            Algorithm::Fadmm => "fadmm",
            Algorithm::Hadmm => "hadmm",
            Algorithm::Hadmm2 => "hadmm2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jadmm" => Ok(Algorithm::Jadmm),
            "fadmm" => Ok(Algorithm::Fadmm),
            "hadmm" => Ok(Algorithm::Hadmm),
            "hadmm2" => Ok(Algorithm::Hadmm2),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected jadmm|fadmm|hadmm|hadmm2)"
            ))),
        }
    }

    pub fn theory_rule(&self) -> TauRule {
        match self {
            Algorithm::Jadmm => TauRule::JadmmTheory,
            Algorithm::Fadmm => TauRule::FadmmTheory,
            Algorithm::Hadmm => TauRule::HadmmTheory,
            Algorithm::Hadmm2 => TauRule::Hadmm2Theory,
        }
    }

    /// Build the schedule for this algorithm on the given problem; `groups`
    /// is the hybrid group count.
    pub fn schedule(&self, problem: &Problem, groups: usize) -> Result<Schedule> {
        let partition = problem.partition().clone();
        Ok(match self {
            Algorithm::Jadmm => Schedule::Jacobi,
            Algorithm::Fadmm => Schedule::GaussSeidel,
            Algorithm::Hadmm => Schedule::Hybrid(Grouping::contiguous(partition, groups)?),
            Algorithm::Hadmm2 => Schedule::TwoGroup(Grouping::contiguous(partition, 2)?),
        })
    }

    /// Theory tau for this algorithm. `mu` is the strong convexity constant
    /// to feed the mu-dependent rules.
    pub fn theory_policy(
        &self,
        problem: &Problem,
        groups: usize,
        rho: f64,
        mu: f64,
        safety: f64,
    ) -> Result<RegularizerPolicy> {
        let a = problem.matrix();
        match self {
            Algorithm::Jadmm | Algorithm::Fadmm => {
                tau::tau_theory(self.theory_rule(), a, None, rho, mu, safety)
            }
            Algorithm::Hadmm => {
                let g = Grouping::contiguous(problem.partition().clone(), groups)?;
                tau::tau_theory(self.theory_rule(), a, Some(&g), rho, mu, safety)
            }
            Algorithm::Hadmm2 => {
                let g = Grouping::contiguous(problem.partition().clone(), 2)?;
                tau::tau_theory(self.theory_rule(), a, Some(&g), rho, mu, safety)
            }
        }
    }
}

/// Tau selection for a sweep: the per-algorithm theory rules, or a grid of
/// uniform values `c * (rho^2/2) ||A||^4`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TauGrid {
    Theory,
    UniformMultipliers(Vec<f64>),
}

/// A full sweep: (algorithm x tau-cell) grid averaged over seeded runs.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub family: FamilySpec,
    pub algorithms: Vec<Algorithm>,
    pub tau: TauGrid,
    pub runs_per_cell: usize,
    pub base_seed: u64,
    pub max_epochs: usize,
    /// Strong convexity constant assumed by the mu-dependent theory rules
    /// when the objective itself is merely convex (the l1 runs use 1.0, the
    /// value the strongly convex case would give).
    pub assumed_mu: Option<f64>,
    /// Scale of the seeded Gaussian primal start (zero start when 0). The
    /// benchmark protocol perturbs the start because the published
    /// divergence boundaries hold for generic starting points, and the zero
    /// start sits in an atypically stable basin near the edge of stability.
    pub init_scale: f64,
    /// When set, the sweep CSV is written here.
    pub output_path: Option<PathBuf>,
}

/// Default primal start perturbation used by the benchmark sweeps.
pub const DEFAULT_INIT_SCALE: f64 = 0.1;

impl SweepSpec {
    pub fn new(family: FamilySpec, algorithms: Vec<Algorithm>, tau: TauGrid) -> Self {
        Self {
            family,
            algorithms,
            tau,
            runs_per_cell: 20,
            base_seed: 1,
            max_epochs: 50_000,
            assumed_mu: None,
            init_scale: DEFAULT_INIT_SCALE,
            output_path: None,
        }
    }
}

/// Aggregated result of one (algorithm, tau) cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub family: String,
    pub algorithm: Algorithm,
    pub tau_rule: String,
    pub tau_multiplier: Option<f64>,
    pub runs: usize,
    pub converged_runs: usize,
    /// Mean/std epochs over converged runs only.
    pub mean_epochs: Option<f64>,
    pub std_epochs: Option<f64>,
    pub mean_half_sq_residual: Option<f64>,
    pub diverged_fraction: f64,
}

impl SweepCell {
    /// Matches the published tables' convention: a cell shows `---` when
    /// more than 10% of its runs diverged.
    pub fn is_diverged_cell(&self) -> bool {
        self.diverged_fraction > 0.1
    }
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, algorithm: Algorithm, multiplier: Option<f64>) -> Option<&SweepCell> {
        self.cells.iter().find(|c| {
            c.algorithm == algorithm
                && match (c.tau_multiplier, multiplier) {
                    (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                    (None, None) => true,
                    _ => false,
                }
        })
    }
}

struct CellOutcome {
    converged: bool,
    diverged: bool,
    epochs: usize,
    half_sq_residual: f64,
}

/// Execute the sweep. Runs execute in parallel; aggregation is ordered by
/// (run, algorithm) regardless of completion order, so results are
/// deterministic for a fixed spec and seed.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    if spec.runs_per_cell == 0 {
        return Err(Error::InvalidConfig("runs_per_cell must be >= 1".into()));
    }
    if spec.algorithms.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one algorithm".into(),
        ));
    }
    let multipliers: Vec<Option<f64>> = match &spec.tau {
        TauGrid::Theory => vec![None],
        TauGrid::UniformMultipliers(ms) => {
            if ms.is_empty() {
                return Err(Error::InvalidConfig(
                    "uniform tau sweep needs at least one multiplier".into(),
                ));
            }
            ms.iter().copied().map(Some).collect()
        }
    };

    // per_run[r][cell_index] with cells ordered (multiplier, algorithm).
    let per_run: Vec<Vec<CellOutcome>> = (0..spec.runs_per_cell)
        .into_par_iter()
        .map(|r| sweep_one_run(spec, &multipliers, spec.base_seed.wrapping_add(r as u64)))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (mi, mult) in multipliers.iter().enumerate() {
        for (ai, alg) in spec.algorithms.iter().enumerate() {
            let idx = mi * spec.algorithms.len() + ai;
            let outcomes: Vec<&CellOutcome> = per_run.iter().map(|r| &r[idx]).collect();
            let converged: Vec<&&CellOutcome> =
                outcomes.iter().filter(|o| o.converged).collect();
            let diverged = outcomes.iter().filter(|o| o.diverged).count();
            let mean_epochs = mean(converged.iter().map(|o| o.epochs as f64));
            let std_epochs = std_dev(converged.iter().map(|o| o.epochs as f64), mean_epochs);
            let mean_res = mean(converged.iter().map(|o| o.half_sq_residual));
            cells.push(SweepCell {
                family: spec.family.name().into(),
                algorithm: *alg,
                tau_rule: match &spec.tau {
                    TauGrid::Theory => alg.theory_rule().name().into(),
                    TauGrid::UniformMultipliers(_) => "uniform-manual".into(),
                },
                tau_multiplier: *mult,
                runs: outcomes.len(),
                converged_runs: converged.len(),
                mean_epochs,
                std_epochs,
                mean_half_sq_residual: mean_res,
                diverged_fraction: diverged as f64 / outcomes.len() as f64,
            });
        }
    }
    let table = SweepTable { cells };
    if let Some(path) = &spec.output_path {
        write_sweep_csv(path, &table)?;
    }
    Ok(table)
}

fn sweep_one_run(
    spec: &SweepSpec,
    multipliers: &[Option<f64>],
    seed: u64,
) -> Result<Vec<CellOutcome>> {
    let inst = spec.family.generate(seed)?;
    let problem = &inst.problem;
    let groups = spec.family.hadmm_groups();
    let mu = spec
        .assumed_mu
        .unwrap_or_else(|| problem.min_strong_convexity());

    // Uniform grids share one ||A|| estimate per instance.
    let base_uniform = match &spec.tau {
        TauGrid::Theory => None,
        TauGrid::UniformMultipliers(_) => {
            let norm = tau::full_matrix_norm(problem.matrix())?;
            Some(inst.rho * inst.rho / 2.0 * norm.powi(4))
        }
    };

    let mut out = Vec::with_capacity(multipliers.len() * spec.algorithms.len());
    for mult in multipliers {
        for alg in &spec.algorithms {
            let policy = match (mult, base_uniform) {
                (Some(c), Some(base)) => tau::tau_uniform(c * base, problem.block_count())?,
                _ => alg.theory_policy(problem, groups, inst.rho, mu, 1.0)?,
            };
            let schedule = alg.schedule(problem, groups)?;
            let init = if spec.init_scale > 0.0 {
                InitKind::GaussianPrimal {
                    seed,
                    scale: spec.init_scale,
                }
            } else {
                InitKind::Zero
            };
            let config = SolverConfig::new(inst.rho, inst.gamma, policy, schedule)?
                .with_max_epochs(spec.max_epochs)
                .with_stop(inst.stop.clone())
                .with_init(init);
            let refs = RunRefs {
                x_star: inst.x_star.as_deref(),
                u_star: None,
            };
            let run = engine::run(problem, &config, refs)?;
            out.push(CellOutcome {
                converged: run.report.converged(),
                diverged: run.report.diverged(),
                epochs: run.report.epochs,
                half_sq_residual: run.report.final_half_sq_residual,
            });
        }
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let count = values.clone().count();
    if count == 0 {
        None
    } else {
        Some(values.sum::<f64>() / count as f64)
    }
}

fn std_dev(values: impl Iterator<Item = f64> + Clone, mean: Option<f64>) -> Option<f64> {
    let mu = mean?;
    let count = values.clone().count();
    if count < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.map(|v| (v - mu) * (v - mu)).sum();
    Some((ss / (count as f64 - 1.0)).sqrt())
}

/// Write the sweep table as CSV with a fixed header; floats carry 17
/// significant digits.
pub fn write_sweep_csv(path: &std::path::Path, table: &SweepTable) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "family,algorithm,tau_rule,tau_multiplier,runs,mean_epochs,std_epochs,mean_half_sq_residual,diverged_fraction\n",
    );
    for c in &table.cells {
        let fmt_opt = |v: Option<f64>| v.map(crate::io::format_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.family,
            c.algorithm.name(),
            c.tau_rule,
            fmt_opt(c.tau_multiplier),
            c.runs,
            fmt_opt(c.mean_epochs),
            fmt_opt(c.std_epochs),
            fmt_opt(c.mean_half_sq_residual),
            crate::io::format_float(c.diverged_fraction),
        ));
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
