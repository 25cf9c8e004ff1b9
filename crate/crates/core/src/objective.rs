//! Per-block separable objective terms and the regularized block subproblem
//! shared by every update schedule.
//!
//! With the regularizer `P_j = tau_j I - rho A_j^T A_j`, the block update
//!
//! ```text
//! min_x f_j(x) + (rho/2) ||A_j (x - x_j) + v||^2 + (1/2) ||x - x_j||^2_{P_j}
//! ```
//!
//! collapses to a pure proximal step: the Gram terms cancel and what is left
//! is `min_x f_j(x) + (tau_j/2) ||x - d_j||^2` with
//! `d_j = x_j - (rho/tau_j) A_j^T v`. That reduction holds algebraically for
//! any `tau_j > 0`; positive definiteness of `P_j` is only needed for the
//! convergence guarantees, not for the solve itself.

use std::fmt;
use std::sync::Arc;

use crate::block::BlockData;
use crate::error::{Error, Result};

/// Prox oracle for plug-in objectives: given `(d, tau)` return
/// `argmin_x f(x) + (tau/2) ||x - d||^2`.
pub type ProxFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// One block's objective term.
#[derive(Clone)]
pub enum BlockObjective {
    /// `f(x) = (1/2) ||x||^2`, strong convexity 1.
    HalfSquaredL2,
    /// `f(x) = ||x||_1`, merely convex.
    L1,
    /// `f(x) = (weight/2) ||x||^2`, strong convexity `weight`.
    WeightedQuadratic { weight: f64 },
    /// Plug-in term defined by its prox oracle and declared strong convexity.
    /// A term loaded from a problem file carries no oracle and cannot be
    /// solved until one is attached.
    CustomProx {
        mu: f64,
        prox: Option<Arc<ProxFn>>,
    },
}

impl fmt::Debug for BlockObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockObjective::HalfSquaredL2 => write!(f, "HalfSquaredL2"),
            BlockObjective::L1 => write!(f, "L1"),
            BlockObjective::WeightedQuadratic { weight } => {
                write!(f, "WeightedQuadratic {{ weight: {weight} }}")
            }
            BlockObjective::CustomProx { mu, prox } => write!(
                f,
                "CustomProx {{ mu: {mu}, prox: {} }}",
                if prox.is_some() { "<fn>" } else { "none" }
            ),
        }
    }
}

impl BlockObjective {
    pub fn weighted_quadratic(weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadratic weight must be finite and >= 0, got {weight}"
            )));
        }
        Ok(BlockObjective::WeightedQuadratic { weight })
    }

    /// Strong convexity constant of this term (0 means merely convex).
    pub fn strong_convexity(&self) -> f64 {
        match self {
            BlockObjective::HalfSquaredL2 => 1.0,
            BlockObjective::L1 => 0.0,
            BlockObjective::WeightedQuadratic { weight } => *weight,
            BlockObjective::CustomProx { mu, .. } => *mu,
        }
    }

    /// Whether the term is a quadratic, which the general-regularizer solve
    /// supports directly.
    pub fn quadratic_weight(&self) -> Option<f64> {
        match self {
            BlockObjective::HalfSquaredL2 => Some(1.0),
            BlockObjective::WeightedQuadratic { weight } => Some(*weight),
            _ => None,
        }
    }

    /// Evaluate the term at `x` (used by test oracles and diagnostics).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BlockObjective::HalfSquaredL2 => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            BlockObjective::L1 => x.iter().map(|v| v.abs()).sum(),
            BlockObjective::WeightedQuadratic { weight } => {
                0.5 * weight * x.iter().map(|v| v * v).sum::<f64>()
            }
            BlockObjective::CustomProx { .. } => f64::NAN,
        }
    }

    /// `argmin_x f(x) + (tau/2) ||x - d||^2`.
    pub fn prox(&self, d: &[f64], tau: f64) -> Result<Vec<f64>> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox weight tau must be > 0, got {tau}"
            )));
        }
        match self {
            BlockObjective::HalfSquaredL2 => prox_half_sq(d, tau),
            BlockObjective::L1 => prox_l1(d, 1.0 / tau),
            BlockObjective::WeightedQuadratic { weight } => {
                let ratio = tau / (weight + tau);
                Ok(d.iter().map(|&v| ratio * v).collect())
            }
            BlockObjective::CustomProx { prox, .. } => match prox {
                Some(p) => {
                    let out = p(d, tau);
                    if out.len() != d.len() {
                        return Err(Error::Shape(format!(
                            "custom prox returned length {}, expected {}",
                            out.len(),
                            d.len()
                        )));
                    }
                    Ok(out)
                }
                None => Err(Error::UnsupportedObjective(
                    "custom-prox term has no prox implementation attached".into(),
                )),
            },
        }
    }
}

/// The separable objective `f(x) = sum_i f_i(x_i)`.
#[derive(Debug, Clone)]
pub struct SeparableObjective {
    terms: Vec<BlockObjective>,
}

impl SeparableObjective {
    pub fn new(terms: Vec<BlockObjective>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Shape("objective needs at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.strong_convexity() < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "term {i} declares negative strong convexity"
                )));
            }
        }
        Ok(Self { terms })
    }

    /// Every block gets the same kind of term.
    pub fn uniform(kind: BlockObjective, n: usize) -> Result<Self> {
        Self::new(vec![kind; n])
    }

    pub fn term(&self, j: usize) -> &BlockObjective {
        &self.terms[j]
    }

    pub fn terms(&self) -> &[BlockObjective] {
        &self.terms
    }

    pub fn block_count(&self) -> usize {
        self.terms.len()
    }

    /// `mu = min_i mu_i`; zero signals a merely-convex objective.
    pub fn min_strong_convexity(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.strong_convexity())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Soft thresholding: component `c` maps to `sign(d_c) * max(|d_c| - lambda, 0)`.
///
/// Solves `min_x ||x||_1 / tau + (1/2) ||x - d||^2` componentwise with
/// `lambda = 1/tau`. Ties at `|d_c| = lambda` resolve to 0.
pub fn prox_l1(d: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "soft threshold lambda must be > 0, got {lambda}"
        )));
    }
    Ok(d.iter()
        .map(|&v| v.signum() * (v.abs() - lambda).max(0.0))
        .collect())
}

/// Prox of `(1/2) ||x||^2`: `argmin (1/2)||x||^2 + (tau/2)||x - d||^2 = (tau/(tau+1)) d`.
///
/// The ratio is computed before scaling `d`.
pub fn prox_half_sq(d: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prox weight tau must be > 0, got {tau}"
        )));
    }
    let ratio = tau / (tau + 1.0);
    Ok(d.iter().map(|&v| ratio * v).collect())
}

/// Solve one regularized block subproblem with `P_j = tau_j I - rho A_j^T A_j`:
/// reduces to `prox_{f_j / tau_j}(d_j)` with `d_j = x_j_old - (rho/tau_j) A_j^T v`.
pub fn solve_block_subproblem(
    f_j: &BlockObjective,
    a_j: &BlockData,
    x_j_old: &[f64],
    v: &[f64],
    rho: f64,
    tau_j: f64,
) -> Result<Vec<f64>> {
    if !(tau_j > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be > 0, got {tau_j}"
        )));
    }
    if x_j_old.len() != a_j.cols() || v.len() != a_j.rows() {
        return Err(Error::Shape(format!(
            "subproblem shapes: block is {}x{}, x has {}, v has {}",
            a_j.rows(),
            a_j.cols(),
            x_j_old.len(),
            v.len()
        )));
    }
    let mut d = vec![0.0; x_j_old.len()];
    a_j.apply_transpose_into(v, &mut d);
    let scale = rho / tau_j;
    for (dc, &xc) in d.iter_mut().zip(x_j_old) {
        *dc = xc - scale * *dc;
    }
    f_j.prox(&d, tau_j)
}

/// Solve one block subproblem with a general symmetric regularizer `P`
/// (column-major, `cols x cols`). Only quadratic terms are supported; the
/// update solves `(P + w I + rho A^T A) x = (P + rho A^T A) x_old - rho A^T v`
/// by a dense Cholesky factorization.
pub fn solve_block_subproblem_general(
    f_j: &BlockObjective,
    a_j: &BlockData,
    x_j_old: &[f64],
    v: &[f64],
    rho: f64,
    p: &[f64],
) -> Result<Vec<f64>> {
    let w = f_j.quadratic_weight().ok_or_else(|| {
        Error::UnsupportedObjective(
            "general regularizers are only supported for quadratic terms".into(),
        )
    })?;
    let nj = a_j.cols();
    if x_j_old.len() != nj || v.len() != a_j.rows() || p.len() != nj * nj {
        return Err(Error::Shape(format!(
            "general subproblem shapes: block is {}x{nj}, x has {}, v has {}, P has {}",
            a_j.rows(),
            x_j_old.len(),
            v.len(),
            p.len()
        )));
    }

    // Dense rho * A^T A from the block's columns.
    let a_dense = a_j.to_dense();
    let m = a_j.rows();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(nj, nj);
    for c1 in 0..nj {
        for c2 in 0..nj {
            let mut acc = 0.0;
            for r in 0..m {
                acc += a_dense[c1 * m + r] * a_dense[c2 * m + r];
            }
            gram[(c1, c2)] = rho * acc;
        }
    }
    let p_mat = nalgebra::DMatrix::<f64>::from_column_slice(nj, nj, p);

    let mut atv = vec![0.0; nj];
    a_j.apply_transpose_into(v, &mut atv);
    let x_old = nalgebra::DVector::<f64>::from_column_slice(x_j_old);
    let rhs = (&p_mat + &gram) * &x_old
        - nalgebra::DVector::<f64>::from_iterator(nj, atv.iter().map(|&z| rho * z));

    let mut lhs = p_mat + gram;
    for i in 0..nj {
        lhs[(i, i)] += w;
    }
    let chol = lhs.cholesky().ok_or_else(|| {
        Error::InvalidParameter("P + wI + rho A^T A is not positive definite".into())
    })?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Minimum strong convexity constant over all terms.
pub fn min_strong_convexity(obj: &SeparableObjective) -> f64 {
    obj.min_strong_convexity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prox_l1_examples() {
        assert_eq!(prox_l1(&[2.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(prox_l1(&[-0.5], 1.0).unwrap(), vec![0.0]);
        assert_eq!(
            prox_l1(&[3.0, -3.0, 0.2], 0.5).unwrap(),
            vec![2.5, -2.5, 0.0]
        );
        assert!(prox_l1(&[1.0], 0.0).is_err());
        assert!(prox_l1(&[1.0], -1.0).is_err());
    }

    #[test]
    fn prox_l1_matches_grid_oracle() {
        // Expected values frozen from the scalar grid minimizer of
        // |x|*lambda_inv + 1/2 (x-d)^2 ... rather, of the scaled problem
        // lambda*|x| + 1/2 (x-d)^2 whose minimizer soft-thresholds d.
        for &(d, lambda) in &[(3.0, 0.5), (-1.2, 0.7), (0.49, 0.5), (10.0, 2.5)] {
            let got = prox_l1(&[d], lambda).unwrap()[0];
            let oracle = grid_minimize(|x| lambda * x.abs() + 0.5 * (x - d) * (x - d));
            assert!(
                (got - oracle).abs() <= 1.5e-4,
                "d={d} lambda={lambda}: got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn prox_half_sq_examples() {
        assert_eq!(prox_half_sq(&[2.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(prox_half_sq(&[0.0, 0.0], 2.0).unwrap(), vec![0.0, 0.0]);
        // tau = 3, d = 4: derivative x + 3(x - 4) = 0 at x = 3.
        assert_eq!(prox_half_sq(&[4.0], 3.0).unwrap(), vec![3.0]);
        assert!(prox_half_sq(&[1.0], 0.0).is_err());
    }

    #[test]
    fn min_strong_convexity_examples() {
        let obj = SeparableObjective::uniform(BlockObjective::HalfSquaredL2, 3).unwrap();
        assert_eq!(obj.min_strong_convexity(), 1.0);

        let obj = SeparableObjective::new(vec![
            BlockObjective::weighted_quadratic(2.0).unwrap(),
            BlockObjective::weighted_quadratic(3.0).unwrap(),
            BlockObjective::weighted_quadratic(0.5).unwrap(),
        ])
        .unwrap();
        assert_eq!(obj.min_strong_convexity(), 0.5);

        let obj = SeparableObjective::new(vec![
            BlockObjective::HalfSquaredL2,
            BlockObjective::L1,
        ])
        .unwrap();
        assert_eq!(obj.min_strong_convexity(), 0.0);
    }

    #[test]
    fn subproblem_examples() {
        // l1 term, x_old = 0, v = 0: zero is stationary.
        let eye = BlockData::identity(1);
        let got =
            solve_block_subproblem(&BlockObjective::L1, &eye, &[0.0], &[0.0], 1.0, 2.0).unwrap();
        assert_eq!(got, vec![0.0]);

        // half-squared-l2, tau = 1, x_old = 0, rho = 2, A = I, v = (1):
        // (tau/(tau+1)) x_old - (rho/(tau+1)) A^T v = -1.
        let got = solve_block_subproblem(
            &BlockObjective::HalfSquaredL2,
            &eye,
            &[0.0],
            &[1.0],
            2.0,
            1.0,
        )
        .unwrap();
        assert!((got[0] - (-1.0)).abs() < 1e-15);

        // l1, A = I, x_old = 0, rho = 1, tau = 2, v = (-4):
        // d = 2, threshold 1/tau = 0.5 -> 1.5.
        let got =
            solve_block_subproblem(&BlockObjective::L1, &eye, &[0.0], &[-4.0], 1.0, 2.0).unwrap();
        assert!((got[0] - 1.5).abs() < 1e-15);

        assert!(
            solve_block_subproblem(&BlockObjective::L1, &eye, &[0.0], &[1.0], 1.0, 0.0).is_err()
        );
        let unsupported = BlockObjective::CustomProx { mu: 0.0, prox: None };
        assert!(matches!(
            solve_block_subproblem(&unsupported, &eye, &[0.0], &[1.0], 1.0, 1.0),
            Err(Error::UnsupportedObjective(_))
        ));
    }

    #[test]
    fn half_sq_subproblem_matches_closed_form() {
        // The prox-path result must equal the explicit update
        // (tau/(tau+1)) x_old - (rho/(tau+1)) A^T v.
        let a = BlockData::dense(3, 2, vec![0.3, -1.0, 0.5, 2.0, 0.1, -0.7]).unwrap();
        let x_old = [0.4, -1.1];
        let v = [1.0, -2.0, 0.25];
        let (rho, tau) = (0.7, 2.3);
        let got =
            solve_block_subproblem(&BlockObjective::HalfSquaredL2, &a, &x_old, &v, rho, tau)
                .unwrap();
        let mut atv = vec![0.0; 2];
        a.apply_transpose_into(&v, &mut atv);
        for c in 0..2 {
            let want = tau / (tau + 1.0) * x_old[c] - rho / (tau + 1.0) * atv[c];
            assert!((got[c] - want).abs() <= 1e-14);
        }
    }

    /// Scalar grid minimizer over [-10, 10] with step 1e-4.
    fn grid_minimize(f: impl Fn(f64) -> f64) -> f64 {
        let mut best_x = -10.0;
        let mut best_val = f64::INFINITY;
        for i in 0..=200_000usize {
            let x = -10.0 + i as f64 * 1e-4;
            let v = f(x);
            if v < best_val {
                best_val = v;
                best_x = x;
            }
        }
        best_x
    }

    /// Full 1-D subproblem objective with P = tau I - rho a^T a.
    fn subproblem_value(
        f_j: &BlockObjective,
        a_col: &[f64],
        x_old: f64,
        v: &[f64],
        rho: f64,
        tau: f64,
        x: f64,
    ) -> f64 {
        let quad: f64 = a_col
            .iter()
            .zip(v)
            .map(|(&a, &vi)| {
                let t = a * (x - x_old) + vi;
                t * t
            })
            .sum();
        let gram: f64 = a_col.iter().map(|&a| a * a).sum();
        let dx = x - x_old;
        f_j.eval(&[x]) + 0.5 * rho * quad + 0.5 * (tau - rho * gram) * dx * dx
    }

    #[test]
    fn subproblem_matches_grid_oracle_for_every_kind() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let kinds: [BlockObjective; 3] = [
            BlockObjective::HalfSquaredL2,
            BlockObjective::L1,
            BlockObjective::weighted_quadratic(2.5).unwrap(),
        ];
        for kind in &kinds {
            for _ in 0..8 {
                let m = 1 + rng.gen_range(0..3);
                let a_col: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x_old = rng.gen_range(-2.0..2.0);
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let rho = rng.gen_range(0.1..2.0);
                let tau = rng.gen_range(0.5..4.0);
                let a = BlockData::dense(m, 1, a_col.clone()).unwrap();
                let got = solve_block_subproblem(kind, &a, &[x_old], &v, rho, tau).unwrap()[0];
                let oracle =
                    grid_minimize(|x| subproblem_value(kind, &a_col, x_old, &v, rho, tau, x));
                assert!(
                    (got - oracle).abs() <= 1.5e-4,
                    "kind {kind:?}: got {got}, grid oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn subproblem_is_proximal_descent() {
        // The subproblem objective at the returned point never exceeds its
        // value at x_old.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for kind in [BlockObjective::HalfSquaredL2, BlockObjective::L1] {
            for _ in 0..20 {
                let a_col: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x_old = rng.gen_range(-3.0..3.0);
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let rho = rng.gen_range(0.1..2.0);
                let tau = rng.gen_range(0.5..4.0);
                let a = BlockData::dense(3, 1, a_col.clone()).unwrap();
                let got = solve_block_subproblem(&kind, &a, &[x_old], &v, rho, tau).unwrap()[0];
                let at_new = subproblem_value(&kind, &a_col, x_old, &v, rho, tau, got);
                let at_old = subproblem_value(&kind, &a_col, x_old, &v, rho, tau, x_old);
                assert!(
                    at_new <= at_old + 1e-12 * (1.0 + at_old.abs()),
                    "no descent: {at_new} > {at_old}"
                );
            }
        }
    }

    #[test]
    fn general_regularizer_agrees_with_prox_path() {
        // With P = tau I - rho A^T A the Cholesky route must reproduce the
        // prox route for quadratic terms.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = 4;
        let nj = 3;
        let a_vals: Vec<f64> = (0..m * nj).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = BlockData::dense(m, nj, a_vals.clone()).unwrap();
        let x_old: Vec<f64> = (0..nj).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (rho, tau) = (0.8, 6.0);

        let mut p = vec![0.0; nj * nj];
        for c1 in 0..nj {
            for c2 in 0..nj {
                let mut acc = 0.0;
                for r in 0..m {
                    acc += a_vals[c1 * m + r] * a_vals[c2 * m + r];
                }
                p[c1 * nj + c2] = -rho * acc;
            }
            p[c1 * nj + c1] += tau;
        }

        let via_prox =
            solve_block_subproblem(&BlockObjective::HalfSquaredL2, &a, &x_old, &v, rho, tau)
                .unwrap();
        let via_chol = solve_block_subproblem_general(
            &BlockObjective::HalfSquaredL2,
            &a,
            &x_old,
            &v,
            rho,
            &p,
        )
        .unwrap();
        for (pr, ch) in via_prox.iter().zip(&via_chol) {
            assert!((pr - ch).abs() <= 1e-10, "prox {pr} vs cholesky {ch}");
        }

        assert!(matches!(
            solve_block_subproblem_general(&BlockObjective::L1, &a, &x_old, &v, rho, &p),
            Err(Error::UnsupportedObjective(_))
        ));
    }

    proptest! {
        /// Nonexpansiveness: ||prox(d1) - prox(d2)|| <= ||d1 - d2||.
        #[test]
        fn prox_l1_nonexpansive(
            d1 in proptest::collection::vec(-20.0f64..20.0, 1..8),
            shift in proptest::collection::vec(-5.0f64..5.0, 8),
            lambda in 0.01f64..5.0,
        ) {
            let d2: Vec<f64> = d1.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let p1 = prox_l1(&d1, lambda).unwrap();
            let p2 = prox_l1(&d2, lambda).unwrap();
            let dist_p: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b) * (a - b)).sum();
            let dist_d: f64 = d1.iter().zip(&d2).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(dist_p <= dist_d * (1.0 + 1e-12));
        }
    }
}
