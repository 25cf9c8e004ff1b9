//! A block-separable program: `min sum_i f_i(x_i)` subject to
//! `sum_i A_i x_i = b`.

use crate::block::{BlockMatrix, BlockPartition};
use crate::error::{Error, Result};
use crate::objective::SeparableObjective;

#[derive(Debug, Clone)]
pub struct Problem {
    a: BlockMatrix,
    b: Vec<f64>,
    objective: SeparableObjective,
}

impl Problem {
    pub fn new(a: BlockMatrix, b: Vec<f64>, objective: SeparableObjective) -> Result<Self> {
        if b.len() != a.row_dim() {
            return Err(Error::Shape(format!(
                "right-hand side has length {}, constraint matrix has {} rows",
                b.len(),
                a.row_dim()
            )));
        }
        if objective.block_count() != a.block_count() {
            return Err(Error::Shape(format!(
                "objective has {} terms, matrix has {} blocks",
                objective.block_count(),
                a.block_count()
            )));
        }
        Ok(Self { a, b, objective })
    }

    pub fn matrix(&self) -> &BlockMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn objective(&self) -> &SeparableObjective {
        &self.objective
    }

    pub fn partition(&self) -> &BlockPartition {
        self.a.partition()
    }

    pub fn block_count(&self) -> usize {
        self.a.block_count()
    }

    pub fn row_dim(&self) -> usize {
        self.a.row_dim()
    }

    pub fn col_dim(&self) -> usize {
        self.a.col_dim()
    }

    /// Minimum strong convexity constant of the objective.
    pub fn min_strong_convexity(&self) -> f64 {
        self.objective.min_strong_convexity()
    }
}
