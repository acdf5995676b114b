//! Sparse matrices in coordinate form, plus the Kronecker-product operations
//! the lifting machinery is built on.
//!
//! # Storage
//!
//! [`SparseMatrix`] keeps `(row, col, value)` triplets in one canonical
//! order: sorted by row then column, duplicates summed, exact zeros dropped.
//! Construction pays for the sort once; after that `kron` can emit its
//! result already sorted, `matvec` is a single forward pass, and equality
//! of two matrices is equality of their entry vectors.
//!
//! Dimensions are not limited to the stored entries: a `zeros(m, n)` matrix
//! is a valid `m x n` operand everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capacity::{check_entries, checked_mul};
use crate::error::{CarlemanError, Result};

/// Seed for the power iteration start vector, fixed so norm estimates are
/// reproducible from run to run.
const POWER_ITERATION_SEED: u64 = 0x5eed_0001;

/// Iteration cap used by [`SparseMatrix::spectral_norm`].
pub const SPECTRAL_NORM_MAX_ITER: usize = 10_000;

/// Default relative tolerance for [`SparseMatrix::spectral_norm`].
pub const SPECTRAL_NORM_TOL: f64 = 1e-10;

/// Real matrix stored as sorted coordinate triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Builds a matrix from unsorted triplets. Duplicate coordinates are
    /// summed, zeros (including cancellations) are dropped, out-of-range
    /// indices and non-finite values are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(CarlemanError::IndexOutOfBounds(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(CarlemanError::NonFinite(format!("entry ({r}, {c}) is {v}")));
            }
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|&(_, _, v)| v != 0.0);
        for &(r, c, v) in &entries {
            if !v.is_finite() {
                return Err(CarlemanError::NonFinite(format!(
                    "entry ({r}, {c}) overflowed to {v} while merging duplicates"
                )));
            }
        }
        Ok(SparseMatrix { rows, cols, entries })
    }

    /// The `n x n` identity.
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    /// An all-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// The canonical triplet slice, sorted by row then column.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Value at `(r, c)`, zero when no entry is stored there.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries
            .binary_search_by(|&(er, ec, _)| (er, ec).cmp(&(r, c)))
            .map(|i| self.entries[i].2)
            .unwrap_or(0.0)
    }

    /// Largest number of nonzeros in any single row.
    pub fn row_sparsity(&self) -> usize {
        let mut best = 0;
        let mut i = 0;
        while i < self.entries.len() {
            let r = self.entries[i].0;
            let mut j = i + 1;
            while j < self.entries.len() && self.entries[j].0 == r {
                j += 1;
            }
            best = best.max(j - i);
            i = j;
        }
        best
    }

    /// Largest number of nonzeros in any single column. Works by sorting the
    /// column indices rather than allocating a count per column, because the
    /// lifted matrices can have far more columns than entries.
    pub fn col_sparsity(&self) -> usize {
        let mut cols: Vec<usize> = self.entries.iter().map(|e| e.1).collect();
        cols.sort_unstable();
        let mut best = 0;
        let mut i = 0;
        while i < cols.len() {
            let c = cols[i];
            let mut j = i + 1;
            while j < cols.len() && cols[j] == c {
                j += 1;
            }
            best = best.max(j - i);
            i = j;
        }
        best
    }

    /// Sparsity in the sense used by the complexity bounds: the larger of
    /// the row and column counts.
    pub fn sparsity(&self) -> usize {
        self.row_sparsity().max(self.col_sparsity())
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<(usize, usize, f64)> =
            self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Multiplies every entry by `s`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(CarlemanError::NonFinite(format!("scale factor is {s}")));
        }
        let mut entries: Vec<(usize, usize, f64)> = self
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * s))
            .collect();
        entries.retain(|&(_, _, v)| v != 0.0);
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    /// Entrywise sum. Shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CarlemanError::DimensionMismatch(format!(
                "cannot add a {}x{} matrix to a {}x{} matrix",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let ka = (a[i].0, a[i].1);
            let kb = (b[j].0, b[j].1);
            match ka.cmp(&kb) {
                std::cmp::Ordering::Less => {
                    entries.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    entries.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let v = a[i].2 + b[j].2;
                    if v != 0.0 {
                        if !v.is_finite() {
                            return Err(CarlemanError::NonFinite(format!(
                                "entry ({}, {}) overflowed to {v} in add",
                                ka.0, ka.1
                            )));
                        }
                        entries.push((ka.0, ka.1, v));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        entries.extend_from_slice(&a[i..]);
        entries.extend_from_slice(&b[j..]);
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    /// Kronecker product `self (x) other`. Entry `(ra, ca, va)` of `self`
    /// and `(rb, cb, vb)` of `other` combine into
    /// `(ra * other.rows + rb, ca * other.cols + cb, va * vb)`.
    ///
    /// Both operands are already sorted, so walking row groups of `self`
    /// (outer) and row groups of `other` (inner) emits the product in
    /// canonical order with no sort and no duplicate merging.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let rows = checked_mul(self.rows, other.rows)?;
        let cols = checked_mul(self.cols, other.cols)?;
        let needed = checked_mul(self.entries.len(), other.entries.len())?;
        check_entries(needed)?;

        let a_groups = row_groups(&self.entries);
        let b_groups = row_groups(&other.entries);
        let mut entries = Vec::with_capacity(needed);
        for &(ra, a0, a1) in &a_groups {
            for &(rb, b0, b1) in &b_groups {
                let row = ra * other.rows + rb;
                for &(_, ca, va) in &self.entries[a0..a1] {
                    let col_base = ca * other.cols;
                    for &(_, cb, vb) in &other.entries[b0..b1] {
                        entries.push((row, col_base + cb, va * vb));
                    }
                }
            }
        }
        for &(r, c, v) in &entries {
            if !v.is_finite() {
                return Err(CarlemanError::NonFinite(format!(
                    "entry ({r}, {c}) overflowed to {v} in kron"
                )));
            }
        }
        Ok(SparseMatrix { rows, cols, entries })
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(CarlemanError::DimensionMismatch(format!(
                "matvec expects a vector of length {}, got {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        Ok(y)
    }

    /// `y = A' x` without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(CarlemanError::DimensionMismatch(format!(
                "transposed matvec expects a vector of length {}, got {}",
                self.rows,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.cols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        Ok(y)
    }

    /// Dense copy, for small-matrix eigenvalue work and test oracles.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Largest singular value, estimated by power iteration on the smaller
    /// of the two Gram matrices with a residual-based stop.
    ///
    /// Guarantees on return: the Gram matrix has an eigenvalue within
    /// `tol * estimate^2` of `estimate^2`, and the iterate has stopped
    /// improving at that resolution. Diagonal matrices short-circuit to the
    /// exact answer. The iteration cap is [`SPECTRAL_NORM_MAX_ITER`]; use
    /// [`SparseMatrix::spectral_norm_opts`] when a nearly degenerate
    /// spectrum needs more sweeps.
    pub fn spectral_norm(&self, tol: f64) -> Result<f64> {
        self.spectral_norm_opts(tol, SPECTRAL_NORM_MAX_ITER, POWER_ITERATION_SEED)
    }

    /// [`SparseMatrix::spectral_norm`] with an explicit iteration cap and
    /// RNG seed for the start vector.
    pub fn spectral_norm_opts(&self, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
        if !tol.is_finite() || tol <= 0.0 {
            return Err(CarlemanError::InvalidInput(format!(
                "spectral norm tolerance must be positive and finite, got {tol}"
            )));
        }
        if self.entries.is_empty() {
            return Ok(0.0);
        }
        if self.entries.iter().all(|&(r, c, _)| r == c) {
            return Ok(self
                .entries
                .iter()
                .map(|e| e.2.abs())
                .fold(0.0, f64::max));
        }

        // A A' when the row count is smaller, A' A otherwise.
        let use_left = self.rows <= self.cols;
        let dim = if use_left { self.rows } else { self.cols };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = random_unit_vector(&mut rng, dim);
        let mut lambda = 0.0_f64;
        for _ in 0..max_iter {
            let w = if use_left {
                self.matvec(&self.matvec_transpose(&v)?)?
            } else {
                self.matvec_transpose(&self.matvec(&v)?)?
            };
            let wn = norm2(&w);
            if wn == 0.0 {
                // v fell exactly onto the null space; restart from a fresh
                // deterministic draw
                v = random_unit_vector(&mut rng, dim);
                continue;
            }
            lambda = dot(&v, &w);
            if !lambda.is_finite() {
                return Err(CarlemanError::Numerical(
                    "power iteration produced a non-finite Rayleigh quotient".into(),
                ));
            }
            let mut resid_sq = 0.0;
            for i in 0..dim {
                let d = w[i] - lambda * v[i];
                resid_sq += d * d;
            }
            // For the symmetric Gram matrix, a residual of size r means some
            // eigenvalue lies within r of lambda; together with the monotone
            // growth of the Rayleigh quotient this pins the top one.
            if resid_sq.sqrt() <= tol * lambda.max(f64::MIN_POSITIVE) {
                return Ok(lambda.max(0.0).sqrt());
            }
            for i in 0..dim {
                v[i] = w[i] / wn;
            }
        }
        Err(CarlemanError::NoConvergence {
            iterations: max_iter,
            last_estimate: lambda.max(0.0).sqrt(),
        })
    }
}

/// `(row, start, end)` for each occupied row of a canonical entry slice.
fn row_groups(entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, usize)> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let r = entries[i].0;
        let mut j = i + 1;
        while j < entries.len() && entries[j].0 == r {
            j += 1;
        }
        groups.push((r, i, j));
        i = j;
    }
    groups
}

fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm2(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Kronecker product of two dense vectors: entry `i * y.len() + j` holds
/// `x[i] * y[j]`.
pub fn kron_vec(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let len = checked_mul(x.len(), y.len())?;
    check_entries(len)?;
    let mut out = Vec::with_capacity(len);
    for &xi in x {
        for &yj in y {
            out.push(xi * yj);
        }
    }
    Ok(out)
}

/// `i`-th Kronecker power of `x`. The zeroth power is the length-one vector
/// `(1)`. Computed as a fold of [`kron_vec`] with `x` on the left, so
/// `kron_power_vec(x, i)` equals `kron_vec(x, kron_power_vec(x, i - 1))`
/// bit for bit; the consistency checks lean on that.
pub fn kron_power_vec(x: &[f64], i: usize) -> Result<Vec<f64>> {
    if i == 0 {
        return Ok(vec![1.0]);
    }
    let mut acc = x.to_vec();
    for _ in 1..i {
        acc = kron_vec(x, &acc)?;
    }
    Ok(acc)
}

/// Euclidean norm. Non-finite inputs propagate to the result, which the
/// time steppers use to notice divergence.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
