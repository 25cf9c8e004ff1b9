//! Spectral quantities and the per-block regularization scalars `tau_j`.
//!
//! Each schedule's convergence theory prescribes how large the regularizer
//! `P_j = tau_j I - rho A_j^T A_j` must be:
//!
//! * Gauss-Seidel:    `tau_j = (rho^2 / 2 mu) ||A_D^T A_tri||^2 + rho ||A_j||^2`
//! * hybrid:          `tau_j = (rho^2 / 2 mu) ||G_D^T G_tri||^2 + rho ||G_i||^2` for `j in S_i`,
//!   with `G_i` the group slices,
//! * Jacobi:          `tau_j = rho (n - 1) ||A_j||^2`
//! * two-group:       `tau_j = rho ||G_i||^2`
//!
//! where `A_D^T A_tri` is the strictly block-upper matrix of cross-Gram blocks
//! `A_i^T A_j` (i < j), evaluated here through an implicit operator so the
//! `N x N` matrix is never materialized. All spectral norms come from power
//! iteration on `Op^T Op` with a fixed-seed start vector, so runs are
//! deterministic.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::block::{BlockData, BlockMatrix, Grouping};
use crate::error::{Error, Result};

/// Relative tolerance for power iteration.
pub const POWER_ITERATION_TOL: f64 = 1e-9;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_MAX_ITERS: usize = 5000;
/// Subspace width for the block power iteration. A single vector converges
/// like the gap between the top two singular values, which can be around
/// 1e-3 on the benchmark blocks; tracking a few vectors makes the rate
/// depend on the gap to the (width+1)-th value instead.
const POWER_ITERATION_SUBSPACE: usize = 4;
/// Fixed seed for the power iteration start vector.
pub const POWER_ITERATION_SEED: u64 = 0x5EED;

/// Anything that can act as a linear map and its transpose.
pub trait LinearOperator {
    /// Output dimension of `apply`.
    fn range_dim(&self) -> usize;
    /// Input dimension of `apply`.
    fn domain_dim(&self) -> usize;
    /// `y = Op x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x = Op^T y`.
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
}

impl LinearOperator for BlockData {
    fn range_dim(&self) -> usize {
        self.rows()
    }
    fn domain_dim(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        self.apply_transpose_into(y, x);
    }
}

/// The whole matrix `A = [A_1, ..., A_n]` as one operator.
pub struct FullMatrixOp<'a>(pub &'a BlockMatrix);

impl LinearOperator for FullMatrixOp<'_> {
    fn range_dim(&self) -> usize {
        self.0.row_dim()
    }
    fn domain_dim(&self) -> usize {
        self.0.col_dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let p = self.0.partition();
        for j in 0..self.0.block_count() {
            self.0.block(j).apply_add(&x[p.range(j)], y);
        }
    }
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        let p = self.0.partition();
        for j in 0..self.0.block_count() {
            self.0.block(j).apply_transpose_into(y, &mut x[p.range(j)]);
        }
    }
}

/// One group slice `G_i = [A_j : j in S_i]` as an operator.
struct GroupSliceOp<'a> {
    a: &'a BlockMatrix,
    set: &'a [usize],
    domain: usize,
}

impl<'a> GroupSliceOp<'a> {
    fn new(a: &'a BlockMatrix, set: &'a [usize]) -> Self {
        let domain = set.iter().map(|&j| a.partition().size(j)).sum();
        Self { a, set, domain }
    }
}

impl LinearOperator for GroupSliceOp<'_> {
    fn range_dim(&self) -> usize {
        self.a.row_dim()
    }
    fn domain_dim(&self) -> usize {
        self.domain
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let mut off = 0usize;
        for &j in self.set {
            let nj = self.a.partition().size(j);
            self.a.block(j).apply_add(&x[off..off + nj], y);
            off += nj;
        }
    }
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        let mut off = 0usize;
        for &j in self.set {
            let nj = self.a.partition().size(j);
            self.a
                .block(j)
                .apply_transpose_into(y, &mut x[off..off + nj]);
            off += nj;
        }
    }
}

/// Implicit strictly block-upper cross-Gram operator over the groups of `g`:
/// applying it to `w` computes `z_i = G_i^T sum_{q > i} G_q w_q` via suffix
/// partial sums; the transpose uses prefix sums. With singleton groups this
/// is exactly the block-level operator.
struct CouplingOp<'a> {
    a: &'a BlockMatrix,
    g: &'a Grouping,
}

impl CouplingOp<'_> {
    fn group_products(&self, w: &[f64]) -> Vec<Vec<f64>> {
        let m = self.a.row_dim();
        let p = self.a.partition();
        self.g
            .sets()
            .iter()
            .map(|set| {
                let mut u = vec![0.0; m];
                for &j in set {
                    self.a.block(j).apply_add(&w[p.range(j)], &mut u);
                }
                u
            })
            .collect()
    }

    fn scatter_transpose(&self, i: usize, s: &[f64], z: &mut [f64]) {
        let p = self.a.partition();
        for &j in self.g.set(i) {
            self.a.block(j).apply_transpose_into(s, &mut z[p.range(j)]);
        }
    }
}

impl LinearOperator for CouplingOp<'_> {
    fn range_dim(&self) -> usize {
        self.a.col_dim()
    }
    fn domain_dim(&self) -> usize {
        self.a.col_dim()
    }
    fn apply(&self, w: &[f64], z: &mut [f64]) {
        let l = self.g.group_count();
        let u = self.group_products(w);
        // Suffix sums: s holds sum_{q > i} u_q while walking i downward.
        let mut s = vec![0.0; self.a.row_dim()];
        z.fill(0.0);
        for i in (0..l).rev() {
            self.scatter_transpose(i, &s, z);
            for (sv, uv) in s.iter_mut().zip(&u[i]) {
                *sv += uv;
            }
        }
    }
    fn apply_transpose(&self, w: &[f64], z: &mut [f64]) {
        let l = self.g.group_count();
        let u = self.group_products(w);
        // Prefix sums: s holds sum_{q < i} u_q.
        let mut s = vec![0.0; self.a.row_dim()];
        z.fill(0.0);
        for i in 0..l {
            self.scatter_transpose(i, &s, z);
            for (sv, uv) in s.iter_mut().zip(&u[i]) {
                *sv += uv;
            }
        }
    }
}

/// A spectral-norm estimate with its convergence diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimate {
    pub value: f64,
    /// Relative eigen-residual of the final iterate.
    pub rel_residual: f64,
    pub iters: usize,
}

/// Largest singular value via (block) power iteration on `Op^T Op`.
///
/// Deterministic: the start block comes from a fixed internal seed. Stops
/// when either the relative eigen-residual of the top Ritz pair or the
/// relative change of the top Ritz value drops below `tol`; failing that
/// within `max_iters` reports the best estimate inside the error.
pub fn spectral_norm(op: &dyn LinearOperator, tol: f64, max_iters: usize) -> Result<f64> {
    spectral_estimate(op, tol, max_iters).map(|e| e.value)
}

/// Same as [`spectral_norm`] but exposes residual and iteration count.
pub fn spectral_estimate(
    op: &dyn LinearOperator,
    tol: f64,
    max_iters: usize,
) -> Result<SpectralEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power iteration tol must be > 0, got {tol}"
        )));
    }
    let n = op.domain_dim();
    let m = op.range_dim();
    if n == 0 || m == 0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            rel_residual: 0.0,
            iters: 0,
        });
    }
    let p = POWER_ITERATION_SUBSPACE.min(n);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let start = nalgebra::DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let mut w = orthonormalize(start);

    let mut y = vec![0.0; m];
    let mut zc = vec![0.0; n];
    let mut z = nalgebra::DMatrix::<f64>::zeros(n, p);
    let mut lambda_prev = f64::INFINITY;
    let mut best = 0.0f64;
    let mut last_change = f64::INFINITY;

    for it in 1..=max_iters {
        // Z = (Op^T Op) W, column by column.
        for c in 0..p {
            let wc: Vec<f64> = w.column(c).iter().copied().collect();
            op.apply(&wc, &mut y);
            op.apply_transpose(&y, &mut zc);
            for r in 0..n {
                z[(r, c)] = zc[r];
            }
        }
        // Rayleigh-Ritz on the current orthonormal basis.
        let mut t = w.transpose() * &z;
        for r in 0..p {
            for c in (r + 1)..p {
                let avg = 0.5 * (t[(r, c)] + t[(c, r)]);
                t[(r, c)] = avg;
                t[(c, r)] = avg;
            }
        }
        let eig = t.clone().symmetric_eigen();
        let (top, lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        best = best.max(lambda.max(0.0));

        // Residual of the top Ritz pair: (Op^T Op) (W v) - lambda (W v).
        let v = eig.eigenvectors.column(top);
        let ritz_vec = &w * v;
        let m_ritz = &z * v;
        let res = (&m_ritz - lambda * &ritz_vec).norm();
        let change = (lambda - lambda_prev).abs();
        last_change = change;
        lambda_prev = lambda;

        let scale = lambda.abs().max(f64::MIN_POSITIVE);
        if res <= tol * scale || change <= tol * scale {
            return Ok(SpectralEstimate {
                value: lambda.max(0.0).sqrt(),
                rel_residual: res / scale,
                iters: it,
            });
        }

        if z.norm() == 0.0 {
            // Op^T Op annihilated the whole subspace: the operator is zero
            // on its reachable space.
            return Ok(SpectralEstimate {
                value: 0.0,
                rel_residual: 0.0,
                iters: it,
            });
        }
        w = orthonormalize(z.clone());
    }

    Err(Error::SpectralEstimationFailed {
        best: best.max(0.0).sqrt(),
        iters: max_iters,
        last_change,
    })
}

/// Thin-QR orthonormal basis; rank-deficient input gets its null columns
/// replaced by the QR completion, which is harmless for the iteration.
fn orthonormalize(mat: nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let p = mat.ncols();
    let qr = mat.qr();
    let q = qr.q();
    q.columns(0, p).into_owned()
}

/// `||A_j||_2` for every block.
pub fn block_norms(a: &BlockMatrix) -> Result<Vec<f64>> {
    a.blocks()
        .iter()
        .map(|b| spectral_norm(b, POWER_ITERATION_TOL, POWER_ITERATION_MAX_ITERS))
        .collect()
}

/// `||G_i||_2` for every group slice.
pub fn group_norms(a: &BlockMatrix, g: &Grouping) -> Result<Vec<f64>> {
    check_grouping(a, g)?;
    g.sets()
        .iter()
        .map(|set| {
            let op = GroupSliceOp::new(a, set);
            spectral_norm(&op, POWER_ITERATION_TOL, POWER_ITERATION_MAX_ITERS)
        })
        .collect()
}

/// `||A||_2` of the whole matrix.
pub fn full_matrix_norm(a: &BlockMatrix) -> Result<f64> {
    spectral_norm(
        &FullMatrixOp(a),
        POWER_ITERATION_TOL,
        POWER_ITERATION_MAX_ITERS,
    )
}

/// Spectral norm of the strictly block-upper cross-Gram matrix with `(i, j)`
/// block `A_i^T A_j` for `i < j`, evaluated implicitly.
pub fn coupling_norm_blocks(a: &BlockMatrix) -> Result<f64> {
    let g = Grouping::singletons(a.partition().clone());
    coupling_norm_groups(a, &g)
}

/// Same as [`coupling_norm_blocks`] but over the group slices of `g`.
pub fn coupling_norm_groups(a: &BlockMatrix, g: &Grouping) -> Result<f64> {
    check_grouping(a, g)?;
    if g.group_count() <= 1 {
        return Ok(0.0);
    }
    let op = CouplingOp { a, g };
    spectral_norm(&op, POWER_ITERATION_TOL, POWER_ITERATION_MAX_ITERS)
}

fn check_grouping(a: &BlockMatrix, g: &Grouping) -> Result<()> {
    if g.partition() != a.partition() {
        return Err(Error::InvalidGrouping(
            "grouping partition does not match matrix partition".into(),
        ));
    }
    Ok(())
}

/// Which rule produced a tau vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    FadmmTheory,
    HadmmTheory,
    JadmmTheory,
    Hadmm2Theory,
    UniformManual,
    PerBlockManual,
}

impl TauRule {
    pub fn name(&self) -> &'static str {
        match self {
            TauRule::FadmmTheory => "fadmm-theory",
            TauRule::HadmmTheory => "hadmm-theory",
            TauRule::JadmmTheory => "jadmm-theory",
            TauRule::Hadmm2Theory => "hadmm2-theory",
            TauRule::UniformManual => "uniform-manual",
            TauRule::PerBlockManual => "per-block-manual",
        }
    }
}

impl std::fmt::Display for TauRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The per-block regularization scalars plus the rule that produced them.
#[derive(Debug, Clone)]
pub struct RegularizerPolicy {
    pub rule: TauRule,
    tau: Vec<f64>,
    pub safety_factor: f64,
    pub note: String,
}

impl RegularizerPolicy {
    fn build(rule: TauRule, tau: Vec<f64>, safety_factor: f64, note: String) -> Result<Self> {
        if let Some((j, &t)) = tau.iter().enumerate().find(|(_, &t)| !(t > 0.0)) {
            return Err(Error::DegenerateTau(format!(
                "rule {rule} produced tau_{j} = {t}; every tau must be positive"
            )));
        }
        Ok(Self {
            rule,
            tau,
            safety_factor,
            note,
        })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn block_count(&self) -> usize {
        self.tau.len()
    }

    pub fn max_tau(&self) -> f64 {
        self.tau.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_tau(&self) -> f64 {
        self.tau.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Scale every tau, e.g. to drive a regularizer toward zero in
    /// comparisons against unregularized baselines.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::build(
            self.rule,
            self.tau.iter().map(|t| t * factor).collect(),
            self.safety_factor,
            format!("{} (scaled by {factor})", self.note),
        )
    }
}

/// Theory-driven tau for one schedule.
///
/// `mu` is the strong convexity constant fed to the mu-dependent rules; the
/// Jacobi and two-group rules ignore it. `safety` multiplies the theoretical
/// bound (1.0 reproduces the published experiments; slightly above 1 gives
/// strict inequality).
pub fn tau_theory(
    rule: TauRule,
    a: &BlockMatrix,
    g: Option<&Grouping>,
    rho: f64,
    mu: f64,
    safety: f64,
) -> Result<RegularizerPolicy> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be > 0, got {rho}"
        )));
    }
    if !(safety >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety factor must be >= 1, got {safety}"
        )));
    }
    let n = a.block_count();
    let tau = match rule {
        TauRule::FadmmTheory => {
            require_strongly_convex(rule, mu)?;
            let coupling = coupling_norm_blocks(a)?;
            let base = rho * rho / (2.0 * mu) * coupling * coupling;
            let norms = block_norms(a)?;
            norms
                .iter()
                .map(|&nj| safety * (base + rho * nj * nj))
                .collect::<Vec<_>>()
        }
        TauRule::HadmmTheory => {
            require_strongly_convex(rule, mu)?;
            let g = g.ok_or_else(|| {
                Error::InvalidGrouping("hadmm-theory needs a grouping".into())
            })?;
            check_grouping(a, g)?;
            let coupling = coupling_norm_groups(a, g)?;
            let base = rho * rho / (2.0 * mu) * coupling * coupling;
            let gnorms = group_norms(a, g)?;
            per_group_to_per_block(g, n, |i| safety * (base + rho * gnorms[i] * gnorms[i]))
        }
        TauRule::JadmmTheory => {
            if n == 1 {
                return Err(Error::DegenerateTau(
                    "jadmm-theory gives tau = 0 for a single block (n - 1 = 0)".into(),
                ));
            }
            let norms = block_norms(a)?;
            norms
                .iter()
                .map(|&nj| safety * rho * (n as f64 - 1.0) * nj * nj)
                .collect()
        }
        TauRule::Hadmm2Theory => {
            let g = g.ok_or_else(|| {
                Error::InvalidGrouping("hadmm2-theory needs a two-group grouping".into())
            })?;
            check_grouping(a, g)?;
            if g.group_count() != 2 {
                return Err(Error::InvalidGrouping(format!(
                    "hadmm2-theory needs exactly 2 groups, got {}",
                    g.group_count()
                )));
            }
            let gnorms = group_norms(a, g)?;
            per_group_to_per_block(g, n, |i| safety * rho * gnorms[i] * gnorms[i])
        }
        TauRule::UniformManual | TauRule::PerBlockManual => {
            return Err(Error::InvalidParameter(format!(
                "rule {rule} is manual; use tau_uniform or tau_per_block"
            )));
        }
    };
    RegularizerPolicy::build(
        rule,
        tau,
        safety,
        format!("{rule}: rho = {rho}, mu = {mu}, safety = {safety}"),
    )
}

fn require_strongly_convex(rule: TauRule, mu: f64) -> Result<()> {
    if mu > 0.0 {
        Ok(())
    } else {
        Err(Error::NotStronglyConvex {
            rule: rule.name().into(),
            mu,
        })
    }
}

fn per_group_to_per_block(g: &Grouping, n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut tau = vec![0.0; n];
    for (i, set) in g.sets().iter().enumerate() {
        let t = f(i);
        for &j in set {
            tau[j] = t;
        }
    }
    tau
}

/// The same tau for all blocks, as used in the tuned sweeps.
pub fn tau_uniform(value: f64, n: usize) -> Result<RegularizerPolicy> {
    if !(value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "uniform tau must be > 0, got {value}"
        )));
    }
    RegularizerPolicy::build(
        TauRule::UniformManual,
        vec![value; n],
        1.0,
        format!("uniform tau = {value}"),
    )
}

/// Explicit per-block values.
pub fn tau_per_block(values: Vec<f64>) -> Result<RegularizerPolicy> {
    RegularizerPolicy::build(
        TauRule::PerBlockManual,
        values,
        1.0,
        "user-supplied per-block tau".into(),
    )
}

/// All spectral quantities that feed the rules above, with the power
/// iteration residuals attached.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub per_block: Vec<SpectralEstimate>,
    pub per_group: Vec<SpectralEstimate>,
    pub coupling_blocks: SpectralEstimate,
    pub coupling_groups: SpectralEstimate,
}

impl SpectralReport {
    pub fn compute(a: &BlockMatrix, g: &Grouping) -> Result<Self> {
        check_grouping(a, g)?;
        let est = |op: &dyn LinearOperator| {
            spectral_estimate(op, POWER_ITERATION_TOL, POWER_ITERATION_MAX_ITERS)
        };
        let per_block = a
            .blocks()
            .iter()
            .map(|b| est(b))
            .collect::<Result<Vec<_>>>()?;
        let per_group = g
            .sets()
            .iter()
            .map(|set| est(&GroupSliceOp::new(a, set)))
            .collect::<Result<Vec<_>>>()?;
        let zero = SpectralEstimate {
            value: 0.0,
            rel_residual: 0.0,
            iters: 0,
        };
        let coupling_blocks = if a.block_count() <= 1 {
            zero
        } else {
            let singles = Grouping::singletons(a.partition().clone());
            est(&CouplingOp { a, g: &singles })?
        };
        let coupling_groups = if g.group_count() <= 1 {
            zero
        } else {
            est(&CouplingOp { a, g })?
        };
        Ok(Self {
            per_block,
            per_group,
            coupling_blocks,
            coupling_groups,
        })
    }
}
