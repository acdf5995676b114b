//! Truncated Carleman linearization.
//!
//! Stacking the Kronecker powers `z_i = x^[i]` for `i = 1..=N` turns the
//! polynomial system `dx/dt = sum_j F_j x^[j]` into one linear system
//! `dz/dt = A z + b`. The derivative of `x^[i]` couples it to powers
//! `i - 1` through `i + k - 1`; cutting everything above `N` ("null
//! closure") leaves a block upper Hessenberg matrix `A` whose block at row
//! `i`, column `i + j - 1` is the transfer matrix
//!
//! ```text
//! A[i, i+j-1] = sum over positions p = 1..=i of
//!               I^[p-1] (x) F_j (x) I^[i-p]
//! ```
//!
//! that is, `F_j` applied at each of the `i` tensor slots. The degree-zero
//! coefficient at block row 1 has no state to multiply and becomes the
//! constant vector `b = (F_0, 0, ..., 0)`.

use crate::capacity::{check_entries, checked_dim_pow, checked_mul};
use crate::error::{CarlemanError, Result};
use crate::ode::{PolynomialODE, Trajectory};
use crate::sparse::{kron_vec, norm2, SparseMatrix};

/// Dimension of the lifted state, `n + n^2 + ... + n^level`.
pub fn carleman_dim(n: usize, level: usize) -> Result<usize> {
    if level == 0 {
        return Err(CarlemanError::InvalidInput(
            "truncation level must be at least 1".into(),
        ));
    }
    let mut total = 0usize;
    for i in 1..=level {
        let d = checked_dim_pow(n, i as u32)?;
        total = total
            .checked_add(d)
            .ok_or(CarlemanError::CapacityExceeded {
                needed: usize::MAX,
                limit: crate::capacity::max_entries(),
            })?;
    }
    Ok(total)
}

/// Transfer matrix mapping `x^[i + j - 1]` into the derivative of `x^[i]`,
/// built directly from its definition as a sum over tensor slots.
pub fn transfer_matrix(ode: &PolynomialODE, i: usize, j: usize) -> Result<SparseMatrix> {
    if i == 0 {
        return Err(CarlemanError::InvalidInput(
            "transfer matrices are defined for block rows i >= 1".into(),
        ));
    }
    if j > ode.k() {
        return Err(CarlemanError::InvalidInput(format!(
            "no degree-{j} coefficient in a system of degree {}",
            ode.k()
        )));
    }
    let n = ode.n();
    let fj = ode.f(j);
    let rows = checked_dim_pow(n, i as u32)?;
    let cols = checked_dim_pow(n, (i + j - 1) as u32)?;
    // each slot contributes nnz(F_j) * n^(i-1) entries
    let per_slot = checked_mul(fj.nnz(), checked_dim_pow(n, (i - 1) as u32)?)?;
    check_entries(checked_mul(per_slot, i)?)?;

    let mut acc = SparseMatrix::zeros(rows, cols);
    for p in 1..=i {
        let left = SparseMatrix::identity(checked_dim_pow(n, (p - 1) as u32)?);
        let right = SparseMatrix::identity(checked_dim_pow(n, (i - p) as u32)?);
        let term = left.kron(fj)?.kron(&right)?;
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

/// Same matrix as [`transfer_matrix`], grown one tensor slot at a time:
///
/// ```text
/// A[i, i+j-1] = A[i-1, i+j-2] (x) I_n  +  I^[i-1] (x) F_j
/// ```
///
/// Only defined for `i >= 2` (there is nothing to recurse on below that).
/// It exists as an independent construction to cross-check the direct sum.
pub fn transfer_matrix_recursive(ode: &PolynomialODE, i: usize, j: usize) -> Result<SparseMatrix> {
    if i < 2 {
        return Err(CarlemanError::InvalidInput(
            "the recursive construction needs a block row i >= 2".into(),
        ));
    }
    if j > ode.k() {
        return Err(CarlemanError::InvalidInput(format!(
            "no degree-{j} coefficient in a system of degree {}",
            ode.k()
        )));
    }
    let n = ode.n();
    let fj = ode.f(j);
    let mut acc = fj.clone();
    for level in 2..=i {
        let eye_left = SparseMatrix::identity(checked_dim_pow(n, (level - 1) as u32)?);
        acc = acc
            .kron(&SparseMatrix::identity(n))?
            .add(&eye_left.kron(fj)?)?;
    }
    Ok(acc)
}

/// The truncated lifted system `dz/dt = A z + b` with `z(0)` already lifted.
#[derive(Debug, Clone)]
pub struct CarlemanSystem {
    /// Base state dimension.
    pub n: usize,
    /// Polynomial degree of the source system.
    pub k: usize,
    /// Truncation level N.
    pub level: usize,
    /// Block upper Hessenberg lifted matrix, `dim x dim`.
    pub a: SparseMatrix,
    /// Constant term, nonzero only in the first block.
    pub b: Vec<f64>,
    /// Lifted initial state `(x0, x0^[2], ..., x0^[N])`.
    pub z0: Vec<f64>,
    /// Anything surprising noticed during assembly, e.g. a truncation level
    /// too low for some coefficients to matter at all.
    pub warnings: Vec<String>,
    block_offsets: Vec<usize>,
    block_dims: Vec<usize>,
}

impl CarlemanSystem {
    /// Total lifted dimension.
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// Dimension `n^i` of block `i`, for `i` in `1..=level`.
    pub fn block_dim(&self, i: usize) -> usize {
        self.block_dims[i - 1]
    }

    /// Offset of block `i` within the lifted vector, for `i` in `1..=level`.
    pub fn block_offset(&self, i: usize) -> usize {
        self.block_offsets[i - 1]
    }

    /// The slice of a lifted vector holding `x^[i]`.
    pub fn block<'a>(&self, z: &'a [f64], i: usize) -> &'a [f64] {
        let start = self.block_offset(i);
        &z[start..start + self.block_dim(i)]
    }

    /// The leading block, which approximates the original state.
    pub fn first_block<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        self.block(z, 1)
    }
}

/// Builds the truncated system at level `N` for the given ODE.
pub fn assemble_truncated(ode: &PolynomialODE, level: usize) -> Result<CarlemanSystem> {
    let n = ode.n();
    let k = ode.k();
    let dim = carleman_dim(n, level)?;
    check_entries(dim)?;

    let mut block_dims = Vec::with_capacity(level);
    let mut block_offsets = Vec::with_capacity(level);
    let mut offset = 0;
    for i in 1..=level {
        block_offsets.push(offset);
        let d = checked_dim_pow(n, i as u32)?;
        block_dims.push(d);
        offset += d;
    }

    let mut warnings = Vec::new();
    if level < k {
        let unused: Vec<String> = ((level + 1)..=k)
            .filter(|&j| ode.f(j).nnz() > 0)
            .map(|j| j.to_string())
            .collect();
        if !unused.is_empty() {
            warnings.push(format!(
                "truncation level {level} is below the system degree {k}: the degree {} coefficients never enter the lifted matrix",
                unused.join(", ")
            ));
        }
    }

    // project the entry count before building anything
    let mut needed = 0usize;
    for i in 1..=level {
        let slot_factor = checked_dim_pow(n, (i - 1) as u32)?;
        let j_max = k.min(level + 1 - i);
        for j in 0..=j_max {
            if i == 1 && j == 0 {
                continue;
            }
            needed = needed
                .checked_add(checked_mul(checked_mul(ode.f(j).nnz(), slot_factor)?, i)?)
                .ok_or(CarlemanError::CapacityExceeded {
                    needed: usize::MAX,
                    limit: crate::capacity::max_entries(),
                })?;
        }
    }
    check_entries(needed)?;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(needed);
    for i in 1..=level {
        let j_max = k.min(level + 1 - i);
        for j in 0..=j_max {
            if i == 1 && j == 0 {
                // the constant term of the first block lives in b, not A
                continue;
            }
            if ode.f(j).nnz() == 0 {
                continue;
            }
            let block = transfer_matrix(ode, i, j)?;
            let row0 = block_offsets[i - 1];
            let col0 = block_offsets[i + j - 2];
            triplets.extend(
                block
                    .entries()
                    .iter()
                    .map(|&(r, c, v)| (row0 + r, col0 + c, v)),
            );
        }
    }
    let a = SparseMatrix::from_triplets(dim, dim, triplets)?;

    let mut b = vec![0.0; dim];
    let f0_col = ode.f(0).matvec(&[1.0])?;
    b[..n].copy_from_slice(&f0_col);

    let z0 = lift_state(ode.x0(), level)?;

    Ok(CarlemanSystem {
        n,
        k,
        level,
        a,
        b,
        z0,
        warnings,
        block_offsets,
        block_dims,
    })
}

/// `A z + b`, the lifted time derivative.
pub fn carleman_rhs(sys: &CarlemanSystem, z: &[f64]) -> Result<Vec<f64>> {
    let mut y = sys.a.matvec(z)?;
    for (yi, bi) in y.iter_mut().zip(&sys.b) {
        *yi += bi;
    }
    Ok(y)
}

/// Integrates the truncated system `dz/dt = A z + b` with the classical
/// fourth-order scheme and keeps only the leading block per grid point.
/// This is the tool for truncation studies: with the grid fine enough, the
/// time-stepping error drops far below the truncation error, so the
/// distance to a reference trajectory isolates what the level `N` costs.
/// The forward Euler paths in [`crate::euler`] carry an `O(h)` term of
/// their own that buries small truncation errors instead.
pub fn integrate_lifted(sys: &CarlemanSystem, t_final: f64, steps: usize) -> Result<Trajectory> {
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(CarlemanError::InvalidInput(format!(
            "integration horizon must be finite and nonnegative, got {t_final}"
        )));
    }
    if steps == 0 {
        return Err(CarlemanError::InvalidInput(
            "steps must be at least 1".into(),
        ));
    }
    let h = t_final / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut z = sys.z0.clone();
    times.push(0.0);
    states.push(sys.first_block(&z).to_vec());
    for step in 0..steps {
        let k1 = carleman_rhs(sys, &z)?;
        let k2 = carleman_rhs(sys, &axpy(&z, h / 2.0, &k1))?;
        let k3 = carleman_rhs(sys, &axpy(&z, h / 2.0, &k2))?;
        let k4 = carleman_rhs(sys, &axpy(&z, h, &k3))?;
        for i in 0..z.len() {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = (step + 1) as f64 * h;
        if !norm2(&z).is_finite() {
            return Err(CarlemanError::NonFinite(format!(
                "lifted state diverged at t = {t:.6e} (step {})",
                step + 1
            )));
        }
        times.push(t);
        states.push(sys.first_block(&z).to_vec());
    }
    Ok(Trajectory { times, states })
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// Stacks the Kronecker powers `(x, x^[2], ..., x^[level])`. Each block is
/// grown by the same left fold as `kron_power_vec`, so the blocks agree with
/// it bit for bit.
pub fn lift_state(x: &[f64], level: usize) -> Result<Vec<f64>> {
    let dim = carleman_dim(x.len(), level)?;
    check_entries(dim)?;
    let mut out = Vec::with_capacity(dim);
    let mut power = x.to_vec();
    out.extend_from_slice(&power);
    for _ in 2..=level {
        power = kron_vec(x, &power)?;
        out.extend_from_slice(&power);
    }
    if !norm2(&out).is_finite() {
        return Err(CarlemanError::NonFinite(
            "lifted state overflowed; the initial state is too large for this level".into(),
        ));
    }
    Ok(out)
}
