//! Block-partitioned problem data: the constraint matrix stored as column
//! blocks `A = [A_1, ..., A_n]`, conforming block vectors, and the grouping of
//! blocks used by the hybrid update schedules.
//!
//! All products accumulate over blocks in ascending block index so that runs
//! are bit-reproducible across schedules.

use crate::error::{Error, Result};

/// How the decision vector of length `N` splits into `n` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    /// Prefix sums; `offsets[j]..offsets[j+1]` is block `j`, `offsets[n] == N`.
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Shape("partition needs at least one block".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape("every block size must be >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// Partition into `n` blocks of equal size.
    pub fn uniform(n: usize, block_size: usize) -> Result<Self> {
        Self::new(vec![block_size; n])
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Gathering of the `n` blocks into `l` ordered disjoint groups.
///
/// The default construction is contiguous: the first groups take `p` blocks
/// each and, when `l` does not divide `n`, the last group takes the
/// remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    partition: BlockPartition,
    sets: Vec<Vec<usize>>,
    /// Size of the leading groups (`floor(n / l)` for contiguous groupings).
    group_size: usize,
}

impl Grouping {
    /// Contiguous grouping of `partition.block_count()` blocks into `l` groups.
    pub fn contiguous(partition: BlockPartition, l: usize) -> Result<Self> {
        let n = partition.block_count();
        if l == 0 || l > n {
            return Err(Error::InvalidGrouping(format!(
                "group count {l} must be in 1..={n}"
            )));
        }
        // Leading groups take p = floor(n/l) blocks; the last group absorbs
        // the remainder, so every group is nonempty for any 1 <= l <= n.
        let p = n / l;
        let mut sets = Vec::with_capacity(l);
        let mut start = 0usize;
        for i in 0..l {
            let end = if i + 1 == l { n } else { start + p };
            sets.push((start..end).collect());
            start = end;
        }
        Ok(Self {
            partition,
            sets,
            group_size: p,
        })
    }

    /// Build from explicit index sets; the sets must be disjoint and cover
    /// `0..n`.
    pub fn from_sets(partition: BlockPartition, sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = partition.block_count();
        if sets.is_empty() || sets.len() > n {
            return Err(Error::InvalidGrouping(format!(
                "group count {} must be in 1..={n}",
                sets.len()
            )));
        }
        let mut seen = vec![false; n];
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidGrouping(format!("group {i} is empty")));
            }
            for &j in set {
                if j >= n {
                    return Err(Error::InvalidGrouping(format!(
                        "group {i} references block {j} >= {n}"
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidGrouping(format!(
                        "block {j} appears in more than one group"
                    )));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidGrouping(
                "groups do not cover every block".into(),
            ));
        }
        let group_size = sets[0].len();
        Ok(Self {
            partition,
            sets,
            group_size,
        })
    }

    /// One singleton group per block; reproduces per-block iteration order.
    pub fn singletons(partition: BlockPartition) -> Self {
        let n = partition.block_count();
        Self::contiguous(partition, n).expect("n >= 1")
    }

    /// A single group holding every block.
    pub fn single_group(partition: BlockPartition) -> Self {
        Self::contiguous(partition, 1).expect("n >= 1")
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn group_count(&self) -> usize {
        self.sets.len()
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Block indices of group `i`, in update order.
    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Group that block `j` belongs to.
    pub fn group_of(&self, j: usize) -> usize {
        for (i, set) in self.sets.iter().enumerate() {
            if set.contains(&j) {
                return i;
            }
        }
        unreachable!("grouping covers all blocks")
    }
}

/// Storage for one column block `A_j`, either dense column-major or
/// column-compressed sparse. The engine only ever touches blocks through the
/// product interface below.
#[derive(Debug, Clone)]
pub enum BlockData {
    Dense {
        rows: usize,
        cols: usize,
        /// Column-major, length `rows * cols`.
        values: Vec<f64>,
    },
    Sparse(CscBlock),
}

/// Column-compressed sparse storage for one block.
#[derive(Debug, Clone)]
pub struct CscBlock {
    pub rows: usize,
    pub cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscBlock {
    /// Assemble from (row, col, value) triplets; entries in a column are
    /// sorted by row.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Shape(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols} block"
                )));
            }
            per_col[c].push((r, v));
        }
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        for entries in per_col.iter_mut() {
            entries.sort_by_key(|&(r, _)| r);
            for &(r, v) in entries.iter() {
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

impl BlockData {
    pub fn dense(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "dense block {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(BlockData::Dense { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        BlockData::Dense {
            rows: n,
            cols: n,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            BlockData::Dense { rows, .. } => *rows,
            BlockData::Sparse(c) => c.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            BlockData::Dense { cols, .. } => *cols,
            BlockData::Sparse(c) => c.cols,
        }
    }

    /// `y += A_j x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(y.len(), self.rows());
        match self {
            BlockData::Dense { rows, cols, values } => {
                for c in 0..*cols {
                    let xc = x[c];
                    if xc == 0.0 {
                        continue;
                    }
                    let col = &values[c * rows..(c + 1) * rows];
                    for (yi, &a) in y.iter_mut().zip(col) {
                        *yi += a * xc;
                    }
                }
            }
            BlockData::Sparse(csc) => {
                for c in 0..csc.cols {
                    let xc = x[c];
                    if xc == 0.0 {
                        continue;
                    }
                    for k in csc.col_ptr[c]..csc.col_ptr[c + 1] {
                        y[csc.row_idx[k]] += csc.values[k] * xc;
                    }
                }
            }
        }
    }

    /// `y = A_j x`.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_add(x, y);
    }

    /// `z = A_j^T v`.
    pub fn apply_transpose_into(&self, v: &[f64], z: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows());
        debug_assert_eq!(z.len(), self.cols());
        match self {
            BlockData::Dense { rows, cols, values } => {
                for c in 0..*cols {
                    let col = &values[c * rows..(c + 1) * rows];
                    let mut acc = 0.0;
                    for (&a, &vi) in col.iter().zip(v) {
                        acc += a * vi;
                    }
                    z[c] = acc;
                }
            }
            BlockData::Sparse(csc) => {
                for c in 0..csc.cols {
                    let mut acc = 0.0;
                    for k in csc.col_ptr[c]..csc.col_ptr[c + 1] {
                        acc += csc.values[k] * v[csc.row_idx[k]];
                    }
                    z[c] = acc;
                }
            }
        }
    }

    /// Densify for small oracle computations.
    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            BlockData::Dense { values, .. } => values.clone(),
            BlockData::Sparse(csc) => {
                let mut out = vec![0.0; csc.rows * csc.cols];
                for c in 0..csc.cols {
                    for k in csc.col_ptr[c]..csc.col_ptr[c + 1] {
                        out[c * csc.rows + csc.row_idx[k]] = csc.values[k];
                    }
                }
                out
            }
        }
    }
}

/// The constraint matrix in block-column form.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    m: usize,
    partition: BlockPartition,
    blocks: Vec<BlockData>,
}

impl BlockMatrix {
    pub fn from_blocks(blocks: Vec<BlockData>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Shape("matrix needs at least one block".into()));
        }
        let m = blocks[0].rows();
        for (j, b) in blocks.iter().enumerate() {
            if b.rows() != m {
                return Err(Error::Shape(format!(
                    "block {j} has {} rows, expected {m}",
                    b.rows()
                )));
            }
        }
        let partition = BlockPartition::new(blocks.iter().map(|b| b.cols()).collect())?;
        Ok(Self {
            m,
            partition,
            blocks,
        })
    }

    pub fn row_dim(&self) -> usize {
        self.m
    }

    pub fn col_dim(&self) -> usize {
        self.partition.total_len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn block(&self, j: usize) -> &BlockData {
        &self.blocks[j]
    }

    pub fn blocks(&self) -> &[BlockData] {
        &self.blocks
    }

    /// `A_j x_j`.
    pub fn block_apply(&self, j: usize, x_j: &[f64]) -> Result<Vec<f64>> {
        let block = &self.blocks[j];
        if x_j.len() != block.cols() {
            return Err(Error::Shape(format!(
                "block {j} expects input of length {}, got {}",
                block.cols(),
                x_j.len()
            )));
        }
        let mut y = vec![0.0; self.m];
        block.apply_add(x_j, &mut y);
        Ok(y)
    }

    /// Group slice product `A_i x_i = sum over j in S_i of A_j x_j`,
    /// accumulated in ascending block order.
    pub fn group_apply(&self, g: &Grouping, i: usize, x: &BlockVector) -> Result<Vec<f64>> {
        if i >= g.group_count() {
            return Err(Error::InvalidGrouping(format!(
                "group index {i} out of range (l = {})",
                g.group_count()
            )));
        }
        self.check_conforms(x)?;
        let mut y = vec![0.0; self.m];
        self.group_apply_into(g, i, x, &mut y);
        Ok(y)
    }

    pub(crate) fn group_apply_into(&self, g: &Grouping, i: usize, x: &BlockVector, y: &mut [f64]) {
        y.fill(0.0);
        for &j in g.set(i) {
            self.blocks[j].apply_add(x.segment(j), y);
        }
    }

    /// Full product `A x`, accumulated in ascending block order.
    pub fn full_apply(&self, x: &BlockVector) -> Result<Vec<f64>> {
        self.check_conforms(x)?;
        let mut y = vec![0.0; self.m];
        for (j, block) in self.blocks.iter().enumerate() {
            block.apply_add(x.segment(j), &mut y);
        }
        Ok(y)
    }

    /// Constraint residual `A x - b`.
    pub fn full_residual(&self, x: &BlockVector, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.m {
            return Err(Error::Shape(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.m
            )));
        }
        let mut r = self.full_apply(x)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        Ok(r)
    }

    /// `A^T v`, per block into the conforming segments.
    pub fn full_apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.m {
            return Err(Error::Shape(format!(
                "transpose input has length {}, expected {}",
                v.len(),
                self.m
            )));
        }
        let mut out = vec![0.0; self.col_dim()];
        for (j, block) in self.blocks.iter().enumerate() {
            block.apply_transpose_into(v, &mut out[self.partition.range(j)]);
        }
        Ok(out)
    }

    /// Total stored nonzeros (dense blocks count every entry).
    pub fn nnz(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b {
                BlockData::Dense { rows, cols, .. } => rows * cols,
                BlockData::Sparse(c) => c.nnz(),
            })
            .sum()
    }

    fn check_conforms(&self, x: &BlockVector) -> Result<()> {
        if x.partition() != &self.partition {
            return Err(Error::Shape(
                "vector partition does not match matrix partition".into(),
            ));
        }
        Ok(())
    }
}

/// A vector split into segments conforming to a [`BlockPartition`]; stored
/// flat with the partition's offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    partition: BlockPartition,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(partition: BlockPartition) -> Self {
        let n = partition.total_len();
        Self {
            partition,
            data: vec![0.0; n],
        }
    }

    pub fn from_flat(partition: BlockPartition, data: Vec<f64>) -> Result<Self> {
        if data.len() != partition.total_len() {
            return Err(Error::Shape(format!(
                "vector length {} does not match partition total {}",
                data.len(),
                partition.total_len()
            )));
        }
        Ok(Self { partition, data })
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segment(&self, j: usize) -> &[f64] {
        &self.data[self.partition.range(j)]
    }

    pub fn segment_mut(&mut self, j: usize) -> &mut [f64] {
        let range = self.partition.range(j);
        &mut self.data[range]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Contiguous grouping of the partition's blocks into `l` groups as used by
/// the hybrid schedules; the leading groups take `ceil(n/l)` blocks each and
/// the last group takes the remainder.
pub fn make_contiguous_grouping(partition: BlockPartition, l: usize) -> Result<Grouping> {
    Grouping::contiguous(partition, l)
}
