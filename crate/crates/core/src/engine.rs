//! The unified iteration engine.
//!
//! Every schedule repeats the same epoch shape: sweep all `n` blocks once
//! (the schedules differ only in which mixed residual each block solve
//! reads), then take one dual step `y <- y - gamma rho (Ax - b)`. The block
//! solves themselves are the shared prox reduction in [`crate::objective`].
//!
//! * Gauss-Seidel sweeps blocks one at a time against a running mixed sum
//!   `w`, updated incrementally after every block.
//! * Jacobi solves every block against the same stale residual.
//! * The hybrid schedule walks the groups Gauss-Seidel style; the blocks
//!   inside a group all read the group vector `v_i` and are independent of
//!   one another (order-independent by construction, so they can run in any
//!   order or in parallel without changing the result).
//! * The two-group schedule is the hybrid epoch specialized to two groups;
//!   it is the variant whose convergence holds for merely convex terms.
//!
//! Cached per-group products `g_i = G_i x_i` are refreshed with a fresh
//! product after each group update, and the residual is rebuilt from them in
//! ascending group order after every epoch, so `sum_i g_i - b = r` holds to
//! round-off throughout a run.

use std::time::Instant;

use serde::Serialize;

use crate::block::{BlockMatrix, BlockVector, Grouping};
use crate::error::{Error, Result};
use crate::objective::solve_block_subproblem;
use crate::problem::Problem;
use crate::tau::RegularizerPolicy;

/// Update schedule: which mixed residual each block solve reads.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// F-ADMM: all blocks sequentially, freshest information available.
    GaussSeidel,
    /// J-ADMM: all blocks against the stale epoch-start residual.
    Jacobi,
    /// H-ADMM: Gauss-Seidel over groups, Jacobi inside each group.
    Hybrid(Grouping),
    /// H-ADMM with exactly two groups (valid for merely convex objectives).
    TwoGroup(Grouping),
}

impl Schedule {
    pub fn name(&self) -> &'static str {
        match self {
            Schedule::GaussSeidel => "fadmm",
            Schedule::Jacobi => "jadmm",
            Schedule::Hybrid(_) => "hadmm",
            Schedule::TwoGroup(_) => "hadmm2",
        }
    }

    pub fn grouping(&self) -> Option<&Grouping> {
        match self {
            Schedule::Hybrid(g) | Schedule::TwoGroup(g) => Some(g),
            _ => None,
        }
    }

    /// Grouping used for the state's cached products.
    fn effective_grouping(&self, problem: &Problem) -> Result<Grouping> {
        match self {
            Schedule::GaussSeidel => Ok(Grouping::singletons(problem.partition().clone())),
            Schedule::Jacobi => Ok(Grouping::single_group(problem.partition().clone())),
            Schedule::Hybrid(g) => {
                self.check_partition(g, problem)?;
                Ok(g.clone())
            }
            Schedule::TwoGroup(g) => {
                self.check_partition(g, problem)?;
                if g.group_count() != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "two-group schedule needs exactly 2 groups, got {}",
                        g.group_count()
                    )));
                }
                Ok(g.clone())
            }
        }
    }

    fn check_partition(&self, g: &Grouping, problem: &Problem) -> Result<()> {
        if g.partition() != problem.partition() {
            return Err(Error::InvalidConfig(
                "schedule grouping does not match the problem partition".into(),
            ));
        }
        Ok(())
    }
}

/// Stopping rule checked after every epoch (and once before the first).
#[derive(Debug, Clone)]
pub enum StopRule {
    /// Stop when `(1/2) ||Ax - b||^2 <= tol`.
    ConstraintResidual { tol: f64 },
    /// Stop when `||x - x*|| / ||x*|| <= tol`; the reference is supplied via
    /// [`RunRefs`].
    RelativeError { tol: f64 },
    /// Run to the epoch cap.
    MaxEpochsOnly,
}

impl StopRule {
    fn describe(&self) -> String {
        match self {
            StopRule::ConstraintResidual { tol } => format!("half-sq-residual <= {tol:e}"),
            StopRule::RelativeError { tol } => format!("rel-error <= {tol:e}"),
            StopRule::MaxEpochsOnly => "max-epochs".into(),
        }
    }
}

pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e12;
/// Divergence is only declared after this many epochs.
pub const DIVERGENCE_MIN_EPOCHS: usize = 10;

/// RNG stream used for Gaussian starting points.
pub const STREAM_INIT: u64 = 3;

/// Starting point policy. Zero is the reproducible solver default; the
/// benchmark runs draw a seeded scaled-Gaussian primal start instead (dual
/// start stays zero). Near the edge of stability the zero start sits in an
/// atypically stable basin that a generic perturbation escapes, while a
/// full-size random start (or any random dual start, which gets amplified
/// by `1/rho` in the mixed residual) overshoots basins that should be
/// reachable; a modest primal perturbation reproduces the published
/// divergence boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zero,
    /// `x0 = scale * g` with `g` standard Gaussian from ChaCha8(seed) on
    /// [`STREAM_INIT`]; `y0 = 0`.
    GaussianPrimal { seed: u64, scale: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rho: f64,
    pub gamma: f64,
    pub policy: RegularizerPolicy,
    pub schedule: Schedule,
    pub max_epochs: usize,
    pub stop: StopRule,
    pub divergence_guard: f64,
    pub init: InitKind,
}

impl SolverConfig {
    pub fn new(
        rho: f64,
        gamma: f64,
        policy: RegularizerPolicy,
        schedule: Schedule,
    ) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be > 0, got {rho}")));
        }
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 2), got {gamma}"
            )));
        }
        Ok(Self {
            rho,
            gamma,
            policy,
            schedule,
            max_epochs: 100_000,
            stop: StopRule::ConstraintResidual { tol: 1e-10 },
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
            init: InitKind::Zero,
        })
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_init(mut self, init: InitKind) -> Self {
        self.init = init;
        self
    }
}

/// Scalar-only per-epoch history.
#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    pub half_sq_residual: Vec<f64>,
    /// `||u^k - u*||_G^2` when a reference KKT point was supplied.
    pub g_dist_to_ref: Vec<f64>,
    /// `||u^k - u^{k-1}||_G^2` when a reference KKT point was supplied.
    pub g_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub epoch: usize,
    x: BlockVector,
    y: Vec<f64>,
    grouping: Grouping,
    group_products: Vec<Vec<f64>>,
    residual: Vec<f64>,
    pub history: RunHistory,
}

impl SolverState {
    /// Zero-initialized state (`x = 0`, `y = 0`).
    pub fn init(problem: &Problem, schedule: &Schedule) -> Result<Self> {
        let grouping = schedule.effective_grouping(problem)?;
        let x = BlockVector::zeros(problem.partition().clone());
        let m = problem.row_dim();
        let group_products = vec![vec![0.0; m]; grouping.group_count()];
        let residual = problem.rhs().iter().map(|&bi| -bi).collect();
        Ok(Self {
            epoch: 0,
            x,
            y: vec![0.0; m],
            grouping,
            group_products,
            residual,
            history: RunHistory::default(),
        })
    }

    /// Seeded scaled-Gaussian primal start with a zero dual start.
    pub fn init_gaussian(
        problem: &Problem,
        schedule: &Schedule,
        seed: u64,
        scale: f64,
    ) -> Result<Self> {
        use rand_distr::Distribution;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init scale must be finite and >= 0, got {scale}"
            )));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rng.set_stream(STREAM_INIT);
        let x_data: Vec<f64> = (0..problem.col_dim())
            .map(|_| {
                let g: f64 = rand_distr::StandardNormal.sample(&mut rng);
                scale * g
            })
            .collect();
        let x = BlockVector::from_flat(problem.partition().clone(), x_data)?;
        Self::from_iterates(problem, schedule, x, vec![0.0; problem.row_dim()])
    }

    /// Start from explicit iterates (used by fixed-point and warm-start
    /// tests); the caches are rebuilt from scratch.
    pub fn from_iterates(
        problem: &Problem,
        schedule: &Schedule,
        x: BlockVector,
        y: Vec<f64>,
    ) -> Result<Self> {
        if y.len() != problem.row_dim() {
            return Err(Error::Shape(format!(
                "dual vector has length {}, expected {}",
                y.len(),
                problem.row_dim()
            )));
        }
        let mut state = Self::init(problem, schedule)?;
        if x.partition() != problem.partition() {
            return Err(Error::Shape(
                "starting point does not conform to the problem partition".into(),
            ));
        }
        state.x = x;
        state.y = y;
        for i in 0..state.grouping.group_count() {
            let mut g = vec![0.0; problem.row_dim()];
            problem
                .matrix()
                .group_apply_into(&state.grouping, i, &state.x, &mut g);
            state.group_products[i] = g;
        }
        state.refresh_residual(problem.rhs());
        Ok(state)
    }

    pub fn x(&self) -> &BlockVector {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn half_sq_residual(&self) -> f64 {
        0.5 * self.residual.iter().map(|r| r * r).sum::<f64>()
    }

    /// Rebuild `r = sum_i g_i - b` in ascending group order.
    fn refresh_residual(&mut self, b: &[f64]) {
        self.residual.fill(0.0);
        for g in &self.group_products {
            for (r, gi) in self.residual.iter_mut().zip(g) {
                *r += gi;
            }
        }
        for (r, bi) in self.residual.iter_mut().zip(b) {
            *r -= bi;
        }
    }

    /// How far the cached residual drifted from a fresh dense recomputation;
    /// used by the consistency checks.
    pub fn residual_drift(&self, problem: &Problem) -> f64 {
        let fresh = problem
            .matrix()
            .full_residual(&self.x, problem.rhs())
            .expect("state conforms to problem");
        self.residual
            .iter()
            .zip(&fresh)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One Gauss-Seidel sweep: block `i` sees blocks `1..i-1` fresh and
/// `i+1..n` stale through the running mixed sum `w`, which is advanced by
/// `g_new - g_old` after every block.
pub fn epoch_gauss_seidel(
    state: &mut SolverState,
    problem: &Problem,
    config: &SolverConfig,
) -> Result<()> {
    let a = problem.matrix();
    let obj = problem.objective();
    let tau = config.policy.tau();
    let rho = config.rho;
    let m = problem.row_dim();

    let mut w: Vec<f64> = state
        .residual
        .iter()
        .zip(&state.y)
        .map(|(r, y)| r - y / rho)
        .collect();
    let mut g_new = vec![0.0; m];
    for j in 0..problem.block_count() {
        let x_new = solve_block_subproblem(obj.term(j), a.block(j), state.x.segment(j), &w, rho, tau[j])?;
        a.block(j).apply_into(&x_new, &mut g_new);
        let g_old = &mut state.group_products[j];
        for ((wi, gn), go) in w.iter_mut().zip(&g_new).zip(g_old.iter()) {
            *wi += gn - go;
        }
        g_old.copy_from_slice(&g_new);
        state.x.segment_mut(j).copy_from_slice(&x_new);
    }
    state.refresh_residual(problem.rhs());
    Ok(())
}

/// One Jacobi sweep: every block solves against the same stale residual,
/// then the iterate is replaced wholesale.
pub fn epoch_jacobi(
    state: &mut SolverState,
    problem: &Problem,
    config: &SolverConfig,
) -> Result<()> {
    let a = problem.matrix();
    let obj = problem.objective();
    let tau = config.policy.tau();
    let rho = config.rho;

    let v: Vec<f64> = state
        .residual
        .iter()
        .zip(&state.y)
        .map(|(r, y)| r - y / rho)
        .collect();
    let new_segments: Vec<Vec<f64>> = (0..problem.block_count())
        .map(|j| solve_block_subproblem(obj.term(j), a.block(j), state.x.segment(j), &v, rho, tau[j]))
        .collect::<Result<_>>()?;
    for (j, seg) in new_segments.iter().enumerate() {
        state.x.segment_mut(j).copy_from_slice(seg);
    }
    let g = &mut state.group_products[0];
    g.fill(0.0);
    for j in 0..problem.block_count() {
        a.block(j).apply_add(state.x.segment(j), g);
    }
    state.refresh_residual(problem.rhs());
    Ok(())
}

/// One hybrid sweep: for each group in order, form
/// `v_i = sum_{q<i} g_q^new + sum_{s>=i} g_s^old - b - y/rho` from the cached
/// group products, solve the group's blocks independently against `v_i`, then
/// refresh `g_i` with a fresh product.
pub fn epoch_hybrid(
    state: &mut SolverState,
    problem: &Problem,
    config: &SolverConfig,
) -> Result<()> {
    let a = problem.matrix();
    let obj = problem.objective();
    let tau = config.policy.tau();
    let rho = config.rho;
    let m = problem.row_dim();
    let grouping = state.grouping.clone();

    // Running mixed sum over group products; starts as sum of stale products.
    let mut s = vec![0.0; m];
    for g in &state.group_products {
        for (si, gi) in s.iter_mut().zip(g) {
            *si += gi;
        }
    }
    let mut v = vec![0.0; m];
    let mut g_new = vec![0.0; m];
    for (i, set) in grouping.sets().iter().enumerate() {
        for ((vi, si), (bi, yi)) in v
            .iter_mut()
            .zip(&s)
            .zip(problem.rhs().iter().zip(&state.y))
        {
            *vi = si - bi - yi / rho;
        }
        // Block solves within the group read only v and their own old block;
        // they are independent and order-insensitive.
        let new_segments: Vec<Vec<f64>> = set
            .iter()
            .map(|&j| {
                solve_block_subproblem(obj.term(j), a.block(j), state.x.segment(j), &v, rho, tau[j])
            })
            .collect::<Result<_>>()?;
        for (&j, seg) in set.iter().zip(&new_segments) {
            state.x.segment_mut(j).copy_from_slice(seg);
        }
        g_new.fill(0.0);
        for &j in set {
            a.block(j).apply_add(state.x.segment(j), &mut g_new);
        }
        let g_old = &mut state.group_products[i];
        for ((si, gn), go) in s.iter_mut().zip(&g_new).zip(g_old.iter()) {
            *si += gn - go;
        }
        g_old.copy_from_slice(&g_new);
    }
    state.refresh_residual(problem.rhs());
    Ok(())
}

/// The two-group epoch written with its explicit update vectors:
/// `v_1 = g_1 + g_2 - b - y/rho` (both stale), then
/// `v_2 = g_1^new + g_2 - b - y/rho`.
pub fn epoch_two_group(
    state: &mut SolverState,
    problem: &Problem,
    config: &SolverConfig,
) -> Result<()> {
    let a = problem.matrix();
    let obj = problem.objective();
    let tau = config.policy.tau();
    let rho = config.rho;
    let m = problem.row_dim();
    let grouping = state.grouping.clone();
    debug_assert_eq!(grouping.group_count(), 2);

    let mut v = vec![0.0; m];
    let mut g_new = vec![0.0; m];
    for i in 0..2 {
        for t in 0..m {
            v[t] = state.group_products[0][t] + state.group_products[1][t]
                - problem.rhs()[t]
                - state.y[t] / rho;
        }
        let set = grouping.set(i);
        let new_segments: Vec<Vec<f64>> = set
            .iter()
            .map(|&j| {
                solve_block_subproblem(obj.term(j), a.block(j), state.x.segment(j), &v, rho, tau[j])
            })
            .collect::<Result<_>>()?;
        for (&j, seg) in set.iter().zip(&new_segments) {
            state.x.segment_mut(j).copy_from_slice(seg);
        }
        g_new.fill(0.0);
        for &j in set {
            a.block(j).apply_add(state.x.segment(j), &mut g_new);
        }
        state.group_products[i].copy_from_slice(&g_new);
    }
    state.refresh_residual(problem.rhs());
    Ok(())
}

/// Dual ascent step `y <- y - gamma rho (Ax - b)` on the refreshed residual.
pub fn dual_update(state: &mut SolverState, config: &SolverConfig) {
    let step = config.gamma * config.rho;
    for (yi, ri) in state.y.iter_mut().zip(&state.residual) {
        *yi -= step * ri;
    }
}

/// Squared G-norm distance between two primal/dual pairs:
/// `sum_i ||dx_i||^2_{P_i} + (1/(gamma rho)) ||dy||^2` with
/// `P_i = tau_i I - rho A_i^T A_i`.
///
/// A value below `-1e-10` means the regularizers are not positive
/// semidefinite and the metric is invalid.
pub fn g_metric(
    x: &BlockVector,
    y: &[f64],
    x_ref: &[f64],
    y_ref: &[f64],
    policy: &RegularizerPolicy,
    rho: f64,
    gamma: f64,
    a: &BlockMatrix,
) -> Result<f64> {
    if x.len() != x_ref.len() || y.len() != y_ref.len() {
        return Err(Error::Shape("g_metric: snapshot dimensions differ".into()));
    }
    let tau = policy.tau();
    let mut total = 0.0;
    let m = a.row_dim();
    let mut adx = vec![0.0; m];
    for j in 0..a.block_count() {
        let range = x.partition().range(j);
        let dx: Vec<f64> = x.segment(j)
            .iter()
            .zip(&x_ref[range])
            .map(|(a, b)| a - b)
            .collect();
        let dx_sq: f64 = dx.iter().map(|v| v * v).sum();
        a.block(j).apply_into(&dx, &mut adx);
        let adx_sq: f64 = adx.iter().map(|v| v * v).sum();
        total += tau[j] * dx_sq - rho * adx_sq;
    }
    let dy_sq: f64 = y.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    total += dy_sq / (gamma * rho);
    if total < -1e-10 {
        return Err(Error::MetricViolation { value: total });
    }
    Ok(total)
}

/// Per-epoch stop decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Converged,
    Diverged,
}

/// Check the stopping rule on the current state. Divergence (residual or
/// iterate beyond the guard, or non-finite values) is only declared after
/// [`DIVERGENCE_MIN_EPOCHS`] epochs.
pub fn stop_check(
    state: &SolverState,
    config: &SolverConfig,
    x_ref: Option<&[f64]>,
) -> Result<Decision> {
    let hsr = state.half_sq_residual();
    if state.epoch >= DIVERGENCE_MIN_EPOCHS {
        let x_norm_sq: f64 = state.x.as_slice().iter().map(|v| v * v).sum();
        if !hsr.is_finite()
            || !x_norm_sq.is_finite()
            || hsr > config.divergence_guard
            || x_norm_sq.sqrt() > config.divergence_guard
        {
            return Ok(Decision::Diverged);
        }
    }
    match &config.stop {
        StopRule::ConstraintResidual { tol } => {
            if hsr <= *tol {
                return Ok(Decision::Converged);
            }
        }
        StopRule::RelativeError { tol } => {
            let x_star = x_ref.ok_or_else(|| {
                Error::InvalidConfig("relative-error stop rule needs a reference solution".into())
            })?;
            if x_star.len() != state.x.len() {
                return Err(Error::Shape(format!(
                    "reference solution has length {}, expected {}",
                    x_star.len(),
                    state.x.len()
                )));
            }
            let diff_sq: f64 = state
                .x
                .as_slice()
                .iter()
                .zip(x_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let ref_norm: f64 = x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = if ref_norm > 0.0 {
                diff_sq.sqrt() / ref_norm
            } else {
                diff_sq.sqrt()
            };
            if rel <= *tol {
                return Ok(Decision::Converged);
            }
        }
        StopRule::MaxEpochsOnly => {}
    }
    Ok(Decision::Continue)
}

/// Terminal outcome of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    Diverged,
    MaxEpochs,
}

/// Config echo included in every report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub algorithm: String,
    pub rho: f64,
    pub gamma: f64,
    pub groups: Option<usize>,
    pub tau_rule: String,
    pub tau_min: f64,
    pub tau_max: f64,
    pub safety_factor: f64,
    pub max_epochs: usize,
    pub stop: String,
    pub divergence_guard: f64,
    pub init: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub outcome: Outcome,
    pub epochs: usize,
    pub final_half_sq_residual: f64,
    /// `||x - x*|| / ||x*||` against the supplied reference, when given.
    pub final_rel_error: Option<f64>,
    pub wall_time_secs: f64,
    pub config: ConfigEcho,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    pub fn diverged(&self) -> bool {
        self.outcome == Outcome::Diverged
    }
}

/// Optional references: `x_star` enables the relative-error stop rule and
/// the report's final error; `u_star = (x*, y*)` turns on the G-metric trace.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunRefs<'a> {
    pub x_star: Option<&'a [f64]>,
    pub u_star: Option<(&'a [f64], &'a [f64])>,
}

pub struct RunOutput {
    pub report: RunReport,
    pub state: SolverState,
}

/// Drive one run: repeat (primal epoch per schedule, dual update, stop
/// check) until a decision. Divergence is a report outcome, not an error.
pub fn run(problem: &Problem, config: &SolverConfig, refs: RunRefs<'_>) -> Result<RunOutput> {
    if config.policy.block_count() != problem.block_count() {
        return Err(Error::InvalidConfig(format!(
            "policy has {} tau values, problem has {} blocks",
            config.policy.block_count(),
            problem.block_count()
        )));
    }
    let started = Instant::now();
    let mut state = match config.init {
        InitKind::Zero => SolverState::init(problem, &config.schedule)?,
        InitKind::GaussianPrimal { seed, scale } => {
            SolverState::init_gaussian(problem, &config.schedule, seed, scale)?
        }
    };
    run_from(problem, config, refs, &mut state)?;
    let wall = started.elapsed().as_secs_f64();

    let outcome = match stop_check(&state, config, refs.x_star)? {
        Decision::Converged => Outcome::Converged,
        Decision::Diverged => Outcome::Diverged,
        Decision::Continue => Outcome::MaxEpochs,
    };
    let final_rel_error = refs.x_star.map(|xs| {
        let diff_sq: f64 = state
            .x
            .as_slice()
            .iter()
            .zip(xs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let nrm: f64 = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            diff_sq.sqrt() / nrm
        } else {
            diff_sq.sqrt()
        }
    });
    let report = RunReport {
        outcome,
        epochs: state.epoch,
        final_half_sq_residual: state.half_sq_residual(),
        final_rel_error,
        wall_time_secs: wall,
        config: ConfigEcho {
            algorithm: config.schedule.name().into(),
            rho: config.rho,
            gamma: config.gamma,
            groups: config.schedule.grouping().map(|g| g.group_count()),
            tau_rule: config.policy.rule.name().into(),
            tau_min: config.policy.min_tau(),
            tau_max: config.policy.max_tau(),
            safety_factor: config.policy.safety_factor,
            max_epochs: config.max_epochs,
            stop: config.stop.describe(),
            divergence_guard: config.divergence_guard,
            init: match config.init {
                InitKind::Zero => "zero".into(),
                InitKind::GaussianPrimal { seed, scale } => {
                    format!("gaussian-primal(seed={seed}, scale={scale})")
                }
            },
        },
    };
    Ok(RunOutput { report, state })
}

fn run_from(
    problem: &Problem,
    config: &SolverConfig,
    refs: RunRefs<'_>,
    state: &mut SolverState,
) -> Result<()> {
    let track_g = refs.u_star.is_some();
    let mut prev: Option<(BlockVector, Vec<f64>)> = None;
    if track_g {
        prev = Some((state.x.clone(), state.y.clone()));
    }

    loop {
        match stop_check(state, config, refs.x_star)? {
            Decision::Continue => {}
            _ => break,
        }
        if state.epoch >= config.max_epochs {
            break;
        }

        match &config.schedule {
            Schedule::GaussSeidel => epoch_gauss_seidel(state, problem, config)?,
            Schedule::Jacobi => epoch_jacobi(state, problem, config)?,
            Schedule::Hybrid(_) => epoch_hybrid(state, problem, config)?,
            Schedule::TwoGroup(_) => epoch_two_group(state, problem, config)?,
        }
        dual_update(state, config);
        state.epoch += 1;

        state.history.half_sq_residual.push(state.half_sq_residual());
        if let Some((x_star, y_star)) = refs.u_star {
            let a = problem.matrix();
            let dist = g_metric(
                &state.x, &state.y, x_star, y_star, &config.policy, config.rho, config.gamma, a,
            )?;
            state.history.g_dist_to_ref.push(dist);
            let (px, py) = prev.as_ref().expect("tracking enabled");
            let step = g_metric(
                &state.x,
                &state.y,
                px.as_slice(),
                py,
                &config.policy,
                config.rho,
                config.gamma,
                a,
            )?;
            state.history.g_step.push(step);
            prev = Some((state.x.clone(), state.y.clone()));
        }
    }
    Ok(())
}

/// `||x - A^T y||` relative KKT gap for the half-squared-l2 objective, where
/// stationarity reads `x = A^T y`.
pub fn l2_kkt_gap(a: &BlockMatrix, x: &BlockVector, y: &[f64]) -> f64 {
    let mut gap_sq = 0.0;
    let mut aty = vec![0.0; 0];
    for j in 0..a.block_count() {
        aty.resize(a.partition().size(j), 0.0);
        a.block(j).apply_transpose_into(y, &mut aty);
        for (xc, ac) in x.segment(j).iter().zip(&aty) {
            let d = xc - ac;
            gap_sq += d * d;
        }
    }
    gap_sq.sqrt()
}

/// Worst componentwise violation of `A^T y in subdiff ||x||_1`: for
/// components with `|x_c| > active_tol` this is `| (A^T y)_c - sign(x_c) |`,
/// otherwise `max(|(A^T y)_c| - 1, 0)`.
pub fn l1_subdiff_violation(a: &BlockMatrix, x: &BlockVector, y: &[f64], active_tol: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut aty = vec![0.0; 0];
    for j in 0..a.block_count() {
        aty.resize(a.partition().size(j), 0.0);
        a.block(j).apply_transpose_into(y, &mut aty);
        for (xc, ac) in x.segment(j).iter().zip(&aty) {
            let v = if xc.abs() > active_tol {
                (ac - xc.signum()).abs()
            } else {
                (ac.abs() - 1.0).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}
