//! Forward Euler on the lifted system, two ways.
//!
//! [`euler_integrate`] is the plain sweep `z <- (I + hA) z + h b`. The same
//! recurrence can be written as one block lower bidiagonal linear system
//! over all time steps,
//!
//! ```text
//! | I                  | |z^0    |   |z_in|
//! |-(I+hA)  I          | |z^1    |   |h b |
//! |       ...  ...     | |...    | = |... |
//! |      -(I+hA)  I    | |z^m    |   |h b |
//! |            -I  I   | |z^m+1  |   | 0  |
//! |               ... I| |z^m+p  |   | 0  |
//! ```
//!
//! with `p` trailing rows that just copy the final state. That is the shape
//! a quantum linear system solver consumes; here [`solve_block`] plays that
//! role by block forward substitution, the padding makes the copies of the
//! final state a constant fraction of the solution vector, and
//! [`measured_p`] reports the weight a measurement would find on them.
//!
//! [`BlockEulerSystem`] stays implicit (coefficients plus step count); the
//! explicit matrix is only materialized through [`BlockEulerSystem::matrix`],
//! which respects the entry budget, and is what [`condition_estimate`] and
//! [`gmres_solve`] consume for condition-number experiments.

use serde::Serialize;

use crate::capacity::{check_entries, checked_mul};
use crate::carleman::CarlemanSystem;
use crate::error::{CarlemanError, Result};
use crate::ode::{PolynomialODE, Trajectory};
use crate::sparse::{dot, norm2, SparseMatrix};

/// Relative residual a block solve must meet before it is returned.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-12;

/// Lifted trajectory produced by [`euler_integrate`] or [`solve_block`].
///
/// Only the leading block is kept per grid point; the full lifted state is
/// kept for the final point alone, because storing all of it for a long run
/// would dwarf the matrix itself.
#[derive(Debug, Clone)]
pub struct CarlemanSolution {
    /// Grid times `j * h` for `j = 0..=m+p`.
    pub times: Vec<f64>,
    /// Leading lifted block (the approximation of the state) per grid point.
    pub x: Vec<Vec<f64>>,
    /// Full lifted state at the last grid point.
    pub z_final: Vec<f64>,
    /// Squared norm of the whole lifted state per grid point.
    pub z_norms_sq: Vec<f64>,
    /// Squared norm of the leading block per grid point.
    pub z_first_norms_sq: Vec<f64>,
    /// Step size.
    pub h: f64,
    /// Number of time-advancing steps.
    pub m: usize,
    /// Number of padding (copy) steps after the horizon.
    pub p: usize,
    /// Largest deviation between padded states and the state at the horizon.
    /// Exact copies give zero.
    pub max_padding_deviation: f64,
    /// Relative residual of the block solve; absent for the plain sweep.
    pub residual: Option<f64>,
}

/// Runs `m` forward Euler steps of `dz/dt = A z + b` up to `t_final`.
pub fn euler_integrate(sys: &CarlemanSystem, t_final: f64, m: usize) -> Result<CarlemanSolution> {
    validate_horizon(t_final, m)?;
    let h = t_final / m as f64;
    let dim = sys.dim();
    let mut z = sys.z0.clone();
    let mut out = SolutionRecorder::new(sys, m, 0, h);
    out.record(0, &z)?;
    for j in 1..=m {
        let az = sys.a.matvec(&z)?;
        for i in 0..dim {
            z[i] += h * (az[i] + sys.b[i]);
        }
        out.record(j, &z)?;
    }
    Ok(out.finish(z, 0.0, None))
}

/// The implicit all-steps system for a given horizon, step count and padding.
#[derive(Debug, Clone, Copy)]
pub struct BlockEulerSystem<'a> {
    pub system: &'a CarlemanSystem,
    pub m: usize,
    pub p: usize,
    pub h: f64,
}

/// Prepares the block system `L Z = B` for `m` Euler steps to `t_final`
/// followed by `p` copy rows.
pub fn assemble_block(
    sys: &CarlemanSystem,
    t_final: f64,
    m: usize,
    p: usize,
) -> Result<BlockEulerSystem<'_>> {
    validate_horizon(t_final, m)?;
    Ok(BlockEulerSystem {
        system: sys,
        m,
        p,
        h: t_final / m as f64,
    })
}

impl<'a> BlockEulerSystem<'a> {
    /// Total dimension `(m + p + 1) * dim(z)`.
    pub fn dim(&self) -> usize {
        (self.m + self.p + 1) * self.system.dim()
    }

    /// Squared norm of the right-hand side, `|z_in|^2 + m h^2 |b|^2`.
    pub fn rhs_norm_sq(&self) -> f64 {
        let z0 = norm2(&self.system.z0);
        let b = norm2(&self.system.b);
        z0 * z0 + self.m as f64 * self.h * self.h * b * b
    }

    /// Materializes the block lower bidiagonal matrix. Subject to the entry
    /// budget; long runs on large lifted systems are meant to stay implicit.
    pub fn matrix(&self) -> Result<SparseMatrix> {
        let sys = self.system;
        let nc = sys.dim();
        let dim = checked_mul(self.m + self.p + 1, nc)?;
        let needed = checked_mul(self.m, nc + sys.a.nnz())?
            .checked_add(checked_mul(self.p, nc)?)
            .and_then(|v| v.checked_add(dim))
            .ok_or(CarlemanError::CapacityExceeded {
                needed: usize::MAX,
                limit: crate::capacity::max_entries(),
            })?;
        check_entries(needed)?;

        let mut triplets = Vec::with_capacity(needed);
        for i in 0..dim {
            triplets.push((i, i, 1.0));
        }
        for j in 1..=self.m {
            let (r0, c0) = (j * nc, (j - 1) * nc);
            for i in 0..nc {
                triplets.push((r0 + i, c0 + i, -1.0));
            }
            for &(r, c, v) in sys.a.entries() {
                triplets.push((r0 + r, c0 + c, -self.h * v));
            }
        }
        for j in (self.m + 1)..=(self.m + self.p) {
            let (r0, c0) = (j * nc, (j - 1) * nc);
            for i in 0..nc {
                triplets.push((r0 + i, c0 + i, -1.0));
            }
        }
        SparseMatrix::from_triplets(dim, dim, triplets)
    }

    /// The stacked right-hand side `(z_in, hb, ..., hb, 0, ..., 0)`.
    pub fn rhs(&self) -> Result<Vec<f64>> {
        let nc = self.system.dim();
        let dim = checked_mul(self.m + self.p + 1, nc)?;
        check_entries(dim)?;
        let mut rhs = vec![0.0; dim];
        rhs[..nc].copy_from_slice(&self.system.z0);
        for j in 1..=self.m {
            for i in 0..nc {
                rhs[j * nc + i] = self.h * self.system.b[i];
            }
        }
        Ok(rhs)
    }
}

/// Solves the block system by forward substitution without materializing it,
/// then verifies the solution with a residual accumulated through an
/// independently ordered multiply. The relative residual must come in under
/// [`BLOCK_RESIDUAL_TOL`].
pub fn solve_block(bes: &BlockEulerSystem) -> Result<CarlemanSolution> {
    let sys = bes.system;
    let (m, p, h) = (bes.m, bes.p, bes.h);
    let dim = sys.dim();
    // the residual multiply walks A in column order while the substitution
    // walks it in row order, so the two do not share rounding
    let a_by_col = sys.a.transpose();

    let mut z = sys.z0.clone();
    let mut out = SolutionRecorder::new(sys, m, p, h);
    out.record(0, &z)?;
    let mut resid_sq = 0.0;
    for j in 1..=m {
        let az = sys.a.matvec(&z)?;
        let az_check = a_by_col.matvec_transpose(&z)?;
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            // literal substitution of row block j: z^j = h b + (I + hA) z^(j-1)
            next[i] = h * sys.b[i] + (z[i] + h * az[i]);
        }
        for i in 0..dim {
            let r = next[i] - z[i] - h * az_check[i] - h * sys.b[i];
            resid_sq += r * r;
        }
        z = next;
        out.record(j, &z)?;
    }
    // padding rows copy the final state; the residual contribution of an
    // exact copy is exactly zero
    let mut max_padding_deviation = 0.0_f64;
    for j in (m + 1)..=(m + p) {
        for i in 0..dim {
            let d = (z[i] - z[i]).abs();
            max_padding_deviation = max_padding_deviation.max(d);
        }
        out.record(j, &z)?;
    }

    let rhs_norm = bes.rhs_norm_sq().sqrt();
    let residual = if rhs_norm > 0.0 {
        resid_sq.sqrt() / rhs_norm
    } else {
        0.0
    };
    if !residual.is_finite() || residual > BLOCK_RESIDUAL_TOL {
        return Err(CarlemanError::Numerical(format!(
            "block solve residual {residual:.3e} exceeds {BLOCK_RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(out.finish(z, max_padding_deviation, Some(residual)))
}

/// Shared bookkeeping for the two solvers: grid, leading blocks, norms,
/// divergence detection.
struct SolutionRecorder<'a> {
    sys: &'a CarlemanSystem,
    m: usize,
    p: usize,
    h: f64,
    times: Vec<f64>,
    x: Vec<Vec<f64>>,
    z_norms_sq: Vec<f64>,
    z_first_norms_sq: Vec<f64>,
}

impl<'a> SolutionRecorder<'a> {
    fn new(sys: &'a CarlemanSystem, m: usize, p: usize, h: f64) -> Self {
        let len = m + p + 1;
        SolutionRecorder {
            sys,
            m,
            p,
            h,
            times: Vec::with_capacity(len),
            x: Vec::with_capacity(len),
            z_norms_sq: Vec::with_capacity(len),
            z_first_norms_sq: Vec::with_capacity(len),
        }
    }

    fn record(&mut self, j: usize, z: &[f64]) -> Result<()> {
        let total: f64 = z.iter().map(|v| v * v).sum();
        if !total.is_finite() {
            return Err(CarlemanError::NonFinite(format!(
                "lifted state diverged at step {j} (t = {:.6e}); the step size is too large for this system",
                j as f64 * self.h
            )));
        }
        let first = self.sys.first_block(z);
        self.times.push(j as f64 * self.h);
        self.x.push(first.to_vec());
        self.z_norms_sq.push(total);
        self.z_first_norms_sq
            .push(first.iter().map(|v| v * v).sum());
        Ok(())
    }

    fn finish(
        self,
        z_final: Vec<f64>,
        max_padding_deviation: f64,
        residual: Option<f64>,
    ) -> CarlemanSolution {
        CarlemanSolution {
            times: self.times,
            x: self.x,
            z_final,
            z_norms_sq: self.z_norms_sq,
            z_first_norms_sq: self.z_first_norms_sq,
            h: self.h,
            m: self.m,
            p: self.p,
            max_padding_deviation,
            residual,
        }
    }
}

fn validate_horizon(t_final: f64, m: usize) -> Result<()> {
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(CarlemanError::InvalidInput(format!(
            "integration horizon must be positive and finite, got {t_final}"
        )));
    }
    if m == 0 {
        return Err(CarlemanError::InvalidInput(
            "step count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Step count that keeps `h * |A|` at or below 0.1, using the cheap bound
/// `|A| <= N * sum_j |F_j|` so the lifted matrix never has to be assembled
/// or measured. This is the default when no step count is given.
pub fn default_step_count(ode: &PolynomialODE, level: usize, t_final: f64) -> Result<usize> {
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(CarlemanError::InvalidInput(format!(
            "integration horizon must be positive and finite, got {t_final}"
        )));
    }
    let mut norm_sum = 0.0;
    for j in 0..=ode.k() {
        norm_sum += ode.f(j).spectral_norm(1e-6)?;
    }
    let bound = level as f64 * norm_sum;
    let m = (10.0 * t_final * bound).ceil();
    if !m.is_finite() || m > 1e12 {
        return Err(CarlemanError::InvalidInput(format!(
            "the step count needed for stability ({m:.3e}) is not practical; the system is too stiff for this horizon"
        )));
    }
    Ok((m as usize).max(1))
}

/// Pointwise errors of a lifted solution against a reference trajectory on
/// the same horizon.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    /// Grid times of the solution.
    pub times: Vec<f64>,
    /// l2 error of the leading components at each grid time.
    pub abs_err_l2: Vec<f64>,
    /// Largest entry of `abs_err_l2`.
    pub max_time_error: f64,
    /// Error at the final grid time.
    pub final_error: f64,
    /// Normalized final-state error `|x/|x| - z/|z||`, the quantity the
    /// accuracy targets are stated in. Absent when either final state is
    /// zero.
    pub eps_normalized: Option<f64>,
}

/// Compares the solution's leading components against a reference
/// trajectory, which must cover at least the same horizon. Reference states
/// may have fewer components than the solution's leading block (a
/// quadratized lift carries the whole stacked state in its leading block);
/// the comparison uses the reference's width. When the reference grid is a
/// whole multiple of the solution grid the samples align by index, otherwise
/// the reference is interpolated linearly in time.
pub fn solution_error(sol: &CarlemanSolution, reference: &Trajectory) -> Result<ErrorReport> {
    let steps = sol.m + sol.p;
    if sol.times.len() != steps + 1 || reference.times.len() < 2 {
        return Err(CarlemanError::InvalidInput(
            "need a full solution grid and a reference with at least two points".into(),
        ));
    }
    let width = reference.states[0].len();
    if sol.x[0].len() < width {
        return Err(CarlemanError::DimensionMismatch(format!(
            "solution carries {} leading components, reference has {width}",
            sol.x[0].len()
        )));
    }
    let ref_steps = reference.times.len() - 1;
    let t_end = *reference.times.last().unwrap();
    let sol_end = sol.times[sol.m];
    if sol_end > t_end * (1.0 + 1e-9) + 1e-300 {
        return Err(CarlemanError::InvalidInput(format!(
            "reference ends at t = {t_end}, solution runs to t = {sol_end}"
        )));
    }
    let aligned = sol.m >= 1 && ref_steps % sol.m == 0 && (sol_end - t_end).abs() <= 1e-12 * t_end.abs();

    let mut abs_err = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        // padding points all sit at the horizon
        let grid_j = j.min(sol.m);
        let reference_state: Vec<f64> = if aligned {
            reference.states[grid_j * (ref_steps / sol.m)].clone()
        } else {
            interpolate(reference, sol.times[grid_j])
        };
        let mut err_sq = 0.0;
        for i in 0..width {
            let d = sol.x[j][i] - reference_state[i];
            err_sq += d * d;
        }
        abs_err.push(err_sq.sqrt());
    }
    let max_time_error = abs_err.iter().cloned().fold(0.0, f64::max);
    let final_error = abs_err[sol.m];

    let z1 = &sol.x[sol.m][..width];
    let z1n = norm2(z1);
    let xref: Vec<f64> = if aligned {
        reference.states[ref_steps].clone()
    } else {
        interpolate(reference, sol_end)
    };
    let xn = norm2(&xref);
    let eps_normalized = if z1n > 0.0 && xn > 0.0 {
        let mut s = 0.0;
        for i in 0..width {
            let d = xref[i] / xn - z1[i] / z1n;
            s += d * d;
        }
        Some(s.sqrt())
    } else {
        None
    };

    Ok(ErrorReport {
        times: sol.times.clone(),
        abs_err_l2: abs_err,
        max_time_error,
        final_error,
        eps_normalized,
    })
}

/// Compares any trajectory against a reference one on the trajectory's own
/// grid. States may carry more components than the reference (a lifted
/// leading block holding a whole stacked state); the comparison uses the
/// reference's width. Sampling aligns by index when the reference grid is a
/// whole multiple of the trajectory grid and interpolates linearly
/// otherwise, mirroring [`solution_error`].
pub fn trajectory_error(traj: &Trajectory, reference: &Trajectory) -> Result<ErrorReport> {
    if traj.times.len() < 2 || reference.times.len() < 2 {
        return Err(CarlemanError::InvalidInput(
            "need trajectories with at least two points".into(),
        ));
    }
    let width = reference.states[0].len();
    if traj.states[0].len() < width {
        return Err(CarlemanError::DimensionMismatch(format!(
            "trajectory carries {} components, reference has {width}",
            traj.states[0].len()
        )));
    }
    let steps = traj.times.len() - 1;
    let ref_steps = reference.times.len() - 1;
    let t_end = *reference.times.last().unwrap();
    let traj_end = *traj.times.last().unwrap();
    if traj_end > t_end * (1.0 + 1e-9) + 1e-300 {
        return Err(CarlemanError::InvalidInput(format!(
            "reference ends at t = {t_end}, trajectory runs to t = {traj_end}"
        )));
    }
    let aligned = ref_steps % steps == 0 && (traj_end - t_end).abs() <= 1e-12 * t_end.abs();

    let mut abs_err = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let reference_state: Vec<f64> = if aligned {
            reference.states[j * (ref_steps / steps)].clone()
        } else {
            interpolate(reference, traj.times[j])
        };
        let mut err_sq = 0.0;
        for i in 0..width {
            let d = traj.states[j][i] - reference_state[i];
            err_sq += d * d;
        }
        abs_err.push(err_sq.sqrt());
    }
    let max_time_error = abs_err.iter().cloned().fold(0.0, f64::max);
    let final_error = *abs_err.last().unwrap();

    let z1 = &traj.states[steps][..width];
    let z1n = norm2(z1);
    let xref: Vec<f64> = if aligned {
        reference.states[ref_steps].clone()
    } else {
        interpolate(reference, traj_end)
    };
    let xn = norm2(&xref);
    let eps_normalized = if z1n > 0.0 && xn > 0.0 {
        let mut s = 0.0;
        for i in 0..width {
            let d = xref[i] / xn - z1[i] / z1n;
            s += d * d;
        }
        Some(s.sqrt())
    } else {
        None
    };

    Ok(ErrorReport {
        times: traj.times.clone(),
        abs_err_l2: abs_err,
        max_time_error,
        final_error,
        eps_normalized,
    })
}

fn interpolate(reference: &Trajectory, t: f64) -> Vec<f64> {
    let times = &reference.times;
    if t <= times[0] {
        return reference.states[0].clone();
    }
    if t >= *times.last().unwrap() {
        return reference.states.last().unwrap().clone();
    }
    let idx = times.partition_point(|&u| u <= t).min(times.len() - 1);
    let (t0, t1) = (times[idx - 1], times[idx]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    reference.states[idx - 1]
        .iter()
        .zip(&reference.states[idx])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

/// Writes `t,abs_err_l2` rows for an error report.
pub fn write_error_csv(report: &ErrorReport, mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "t,abs_err_l2")?;
    for (t, e) in report.times.iter().zip(&report.abs_err_l2) {
        writeln!(out, "{t:.16e},{e:.16e}")?;
    }
    Ok(())
}

/// Writes `t,x1,...,xn` rows for the leading block of a lifted solution.
pub fn write_solution_csv(sol: &CarlemanSolution, mut out: impl std::io::Write) -> Result<()> {
    let n = sol.x.first().map_or(0, |s| s.len());
    write!(out, "t")?;
    for i in 1..=n {
        write!(out, ",x{i}")?;
    }
    writeln!(out)?;
    for (t, state) in sol.times.iter().zip(&sol.x) {
        write!(out, "{t:.16e}")?;
        for v in state {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Fraction of the stacked solution's weight sitting on the leading block at
/// or past the horizon: the success probability of the post-selection step.
/// `m` and `p` must match the grid the solution was produced on.
pub fn measured_p(sol: &CarlemanSolution, m: usize, p: usize) -> Result<f64> {
    if sol.m != m || sol.p != p || sol.times.len() != m + p + 1 {
        return Err(CarlemanError::InvalidInput(format!(
            "solution was produced with m = {}, p = {}, asked about m = {m}, p = {p}",
            sol.m, sol.p
        )));
    }
    let numerator: f64 = sol.z_first_norms_sq[m..=m + p].iter().sum();
    let denominator: f64 = sol.z_norms_sq.iter().sum();
    if denominator == 0.0 {
        return Err(CarlemanError::InvalidInput(
            "the solution is identically zero; the measurement fraction is undefined".into(),
        ));
    }
    Ok(numerator / denominator)
}

/// Two-norm condition number of a lower triangular matrix, estimated by
/// power iteration for `|L|` and by power iteration on `inv(L) inv(L')`
/// (applied through triangular solves) for `|inv(L)|`. Good to a few
/// percent, which is all a condition survey needs.
pub fn condition_estimate(l: &SparseMatrix) -> Result<f64> {
    if l.rows() != l.cols() {
        return Err(CarlemanError::InvalidInput(format!(
            "condition estimate needs a square matrix, got {}x{}",
            l.rows(),
            l.cols()
        )));
    }
    let dim = l.rows();
    if dim == 0 {
        return Err(CarlemanError::InvalidInput(
            "condition estimate needs a nonempty matrix".into(),
        ));
    }
    // row groups double as the triangular-structure check: every row must
    // end at its diagonal
    let mut row_end = vec![usize::MAX; dim];
    let mut diag = vec![0.0; dim];
    let entries = l.entries();
    for (idx, &(r, c, v)) in entries.iter().enumerate() {
        if c > r {
            return Err(CarlemanError::InvalidInput(format!(
                "matrix has an entry at ({r}, {c}) above the diagonal; condition estimation only handles lower triangular systems"
            )));
        }
        if c == r {
            diag[r] = v;
        }
        row_end[r] = idx + 1;
    }
    for (r, &d) in diag.iter().enumerate() {
        if d == 0.0 {
            return Err(CarlemanError::InvalidInput(format!(
                "zero diagonal at row {r}; the matrix is singular"
            )));
        }
        let _ = r;
    }

    let norm_l = l.spectral_norm_opts(1e-6, 50_000, 0x5eed_0002)?;

    // |inv(L)|^2 is the top eigenvalue of inv(L) inv(L)', reached by
    // v -> solve(L', u) followed by solve(L, .)
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5eed_0003);
    let mut v: Vec<f64> = (0..dim)
        .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
        .collect();
    let nv = norm2(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut lambda = 0.0_f64;
    let max_iter = 50_000;
    let mut converged = false;
    for _ in 0..max_iter {
        let u = solve_upper_transposed(entries, &diag, &v);
        let w = solve_lower(entries, &diag, &row_end, &u);
        let wn = norm2(&w);
        if !wn.is_finite() {
            return Err(CarlemanError::Numerical(
                "triangular solve overflowed during condition estimation".into(),
            ));
        }
        lambda = dot(&v, &w);
        let mut resid_sq = 0.0;
        for i in 0..dim {
            let d = w[i] - lambda * v[i];
            resid_sq += d * d;
        }
        if resid_sq.sqrt() <= 1e-6 * lambda.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if wn == 0.0 {
            break;
        }
        for i in 0..dim {
            v[i] = w[i] / wn;
        }
    }
    if !converged {
        return Err(CarlemanError::NoConvergence {
            iterations: max_iter,
            last_estimate: lambda.max(0.0).sqrt() * norm_l,
        });
    }
    Ok(lambda.max(0.0).sqrt() * norm_l)
}

/// Forward substitution `L x = b` over canonical row-sorted entries.
fn solve_lower(
    entries: &[(usize, usize, f64)],
    diag: &[f64],
    row_end: &[usize],
    b: &[f64],
) -> Vec<f64> {
    let dim = b.len();
    let mut x = b.to_vec();
    let mut idx = 0;
    for r in 0..dim {
        let end = if row_end[r] == usize::MAX { idx } else { row_end[r] };
        let mut acc = x[r];
        while idx < end {
            let (_, c, v) = entries[idx];
            if c < r {
                acc -= v * x[c];
            }
            idx += 1;
        }
        x[r] = acc / diag[r];
    }
    x
}

/// Back substitution `L' x = b`, done as a column sweep over L's rows in
/// reverse so no transpose is materialized.
fn solve_upper_transposed(entries: &[(usize, usize, f64)], diag: &[f64], b: &[f64]) -> Vec<f64> {
    let dim = b.len();
    let mut x = b.to_vec();
    let mut idx = entries.len();
    for r in (0..dim).rev() {
        // entries of row r sit just below idx; peel them off in reverse
        let mut start = idx;
        while start > 0 && entries[start - 1].0 == r {
            start -= 1;
        }
        x[r] /= diag[r];
        for &(_, c, v) in &entries[start..idx] {
            if c < r {
                x[c] -= v * x[r];
            }
        }
        idx = start;
    }
    x
}

/// Outcome of a successful GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Total inner iterations across restarts.
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations. Meant
/// for condition-number experiments on materialized block systems, not as
/// the production path (forward substitution is exact for these).
pub fn gmres_solve(
    a: &SparseMatrix,
    b: &[f64],
    restart: usize,
    tol: f64,
    max_restarts: usize,
) -> Result<GmresOutcome> {
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(CarlemanError::DimensionMismatch(format!(
            "gmres needs a square system; matrix is {}x{}, rhs has length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    if restart == 0 || !(tol > 0.0) {
        return Err(CarlemanError::InvalidInput(
            "gmres needs restart >= 1 and a positive tolerance".into(),
        ));
    }
    let dim = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; dim],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = vec![0.0; dim];
    let mut total_iters = 0usize;
    for _ in 0..max_restarts {
        let ax = a.matvec(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            return Ok(GmresOutcome {
                x,
                iterations: total_iters,
                relative_residual: beta / bnorm,
            });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut cols = 0;
        for j in 0..restart {
            total_iters += 1;
            let mut w = a.matvec(&v[j])?;
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                hess[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm2(&w);
            hess[j + 1][j] = wn;
            // rotate the new column through the accumulated Givens pairs
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = (hess[j][j] * hess[j][j] + wn * wn).sqrt();
            if denom == 0.0 {
                cols = j;
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = wn / denom;
            hess[j][j] = denom;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            cols = j + 1;
            if g[j + 1].abs() <= tol * bnorm || wn == 0.0 {
                break;
            }
            v.push(w.into_iter().map(|wk| wk / wn).collect());
        }
        // back substitution on the rotated Hessenberg system
        let mut y = vec![0.0; cols];
        for i in (0..cols).rev() {
            let mut acc = g[i];
            for jj in (i + 1)..cols {
                acc -= hess[i][jj] * y[jj];
            }
            y[i] = acc / hess[i][i];
        }
        for (jj, yj) in y.iter().enumerate() {
            for i in 0..dim {
                x[i] += yj * v[jj][i];
            }
        }
        let ax = a.matvec(&x)?;
        let rn = norm2(
            &b.iter()
                .zip(&ax)
                .map(|(bi, ai)| bi - ai)
                .collect::<Vec<_>>(),
        );
        if rn <= tol * bnorm {
            return Ok(GmresOutcome {
                x,
                iterations: total_iters,
                relative_residual: rn / bnorm,
            });
        }
    }
    Err(CarlemanError::NoConvergence {
        iterations: total_iters,
        last_estimate: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::assemble_truncated;
    use crate::ode::PolynomialODE;

    fn scalar_decay() -> CarlemanSystem {
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1.0]).unwrap();
        assemble_truncated(&ode, 1).unwrap()
    }

    #[test]
    fn euler_converges_at_first_order_rate() {
        let sys = scalar_decay();
        let sol = euler_integrate(&sys, 1.0, 1000).unwrap();
        let exact = (-1.0_f64).exp();
        assert!((sol.z_final[0] - exact).abs() < 1e-3);
        // and the value really is (1 - h)^m up to multiplication order
        let h = 1.0_f64 / 1000.0;
        let compounded = (1.0 - h).powi(1000);
        assert!((sol.z_final[0] - compounded).abs() <= 1e-13 * compounded);
    }

    #[test]
    fn block_matrix_of_one_step_matches_hand_layout() {
        let sys = scalar_decay();
        let bes = assemble_block(&sys, 0.5, 1, 0).unwrap();
        assert_eq!(bes.dim(), 2);
        let l = bes.matrix().unwrap();
        assert_eq!(l.get(0, 0), 1.0);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), -(1.0 + 0.5 * -1.0));
        assert_eq!(l.get(1, 1), 1.0);
        assert_eq!(bes.rhs().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn block_rhs_carries_the_constant_term() {
        let f0 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 2.0)]).unwrap();
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(0, f0), (1, f1)], vec![0.5]).unwrap();
        let sys = assemble_truncated(&ode, 1).unwrap();
        let bes = assemble_block(&sys, 1.0, 2, 1).unwrap();
        assert_eq!(bes.rhs().unwrap(), vec![0.5, 1.0, 1.0, 0.0]);
        let b_m = bes.rhs_norm_sq();
        assert_eq!(b_m, 0.25 + 2.0 * 0.25 * 4.0);
    }

    #[test]
    fn solve_block_reproduces_the_sweep_and_pads_exactly() {
        let f1 = SparseMatrix::from_triplets(2, 2, vec![(0, 0, -1.0), (0, 1, 0.5), (1, 1, -2.0)])
            .unwrap();
        let f2 = SparseMatrix::from_triplets(2, 4, vec![(1, 0, 0.25)]).unwrap();
        let ode = PolynomialODE::from_terms(2, 2, vec![(1, f1), (2, f2)], vec![0.8, -0.3]).unwrap();
        let sys = assemble_truncated(&ode, 3).unwrap();

        let swept = euler_integrate(&sys, 2.0, 50).unwrap();
        let solved = solve_block(&assemble_block(&sys, 2.0, 50, 10).unwrap()).unwrap();
        assert_eq!(solved.times.len(), 61);
        assert_eq!(solved.max_padding_deviation, 0.0);
        assert!(solved.residual.unwrap() <= BLOCK_RESIDUAL_TOL);
        for j in 0..=50 {
            for i in 0..2 {
                let d = (swept.x[j][i] - solved.x[j][i]).abs();
                assert!(d <= 1e-12, "step {j} component {i} differs by {d:.3e}");
            }
        }
        // padded rows repeat the final leading block bit for bit
        for j in 51..=60 {
            assert_eq!(solved.x[j], solved.x[50]);
        }
    }

    #[test]
    fn solved_block_satisfies_the_materialized_system() {
        let sys = scalar_decay();
        let bes = assemble_block(&sys, 1.0, 4, 2).unwrap();
        let l = bes.matrix().unwrap();
        let rhs = bes.rhs().unwrap();
        // reconstruct the stacked solution from the per-step states
        let sol = solve_block(&bes).unwrap();
        let mut stacked = Vec::new();
        for j in 0..=6 {
            stacked.extend_from_slice(&sol.x[j]);
        }
        let lz = l.matvec(&stacked).unwrap();
        for i in 0..lz.len() {
            assert!((lz[i] - rhs[i]).abs() < 1e-14, "row {i}");
        }
    }

    #[test]
    fn divergence_is_reported_with_the_step() {
        // h |A| far above 1 makes the sweep blow up
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -500.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1e150]).unwrap();
        let sys = assemble_truncated(&ode, 1).unwrap();
        match euler_integrate(&sys, 10.0, 5) {
            Err(CarlemanError::NonFinite(msg)) => assert!(msg.contains("step")),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn measurement_fraction_of_a_padded_decay() {
        let sys = scalar_decay();
        // h = 0.5: states 1, 0.5, then one padded copy of 0.5
        let sol = solve_block(&assemble_block(&sys, 0.5, 1, 1).unwrap()).unwrap();
        let f = measured_p(&sol, 1, 1).unwrap();
        assert!((f - (0.25 + 0.25) / 1.5).abs() < 1e-15);
        assert!(measured_p(&sol, 2, 1).is_err());
    }

    #[test]
    fn default_step_count_scales_with_horizon_and_level() {
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -2.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1.0]).unwrap();
        // |A| bound = level * 2, so m = ceil(10 * T * level * 2)
        assert_eq!(default_step_count(&ode, 1, 1.0).unwrap(), 20);
        assert_eq!(default_step_count(&ode, 3, 1.0).unwrap(), 60);
        assert_eq!(default_step_count(&ode, 1, 2.5).unwrap(), 50);
    }

    #[test]
    fn error_report_against_the_exact_grid() {
        let sys = scalar_decay();
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1.0]).unwrap();
        let sol = euler_integrate(&sys, 1.0, 100).unwrap();
        // reference on a 10x finer grid aligns by index
        let reference = ode.direct_integrate(1.0, 1000).unwrap();
        let report = solution_error(&sol, &reference).unwrap();
        assert_eq!(report.abs_err_l2.len(), 101);
        assert_eq!(report.abs_err_l2[0], 0.0);
        // forward Euler at h = 0.01 on exp decay carries about h/2 relative error
        assert!(report.final_error < 3e-3);
        assert!(report.final_error > 1e-4);
        assert!(report.max_time_error >= report.final_error);
        let eps = report.eps_normalized.unwrap();
        // a one-component state normalizes to 1 on both sides unless signs differ
        assert!(eps < 1e-15);
    }

    #[test]
    fn error_report_interpolates_unaligned_grids() {
        let sys = scalar_decay();
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1.0]).unwrap();
        let sol = euler_integrate(&sys, 1.0, 7).unwrap();
        let reference = ode.direct_integrate(1.0, 1000).unwrap();
        let report = solution_error(&sol, &reference).unwrap();
        // h = 1/7 Euler error is large but bounded
        assert!(report.final_error < 0.05);
    }

    #[test]
    fn trajectory_error_samples_aligned_and_unaligned_grids() {
        // two steps against four: aligned with stride two
        let traj = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        let reference = Trajectory {
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            states: vec![vec![1.0], vec![9.0], vec![2.5], vec![9.0], vec![3.25]],
        };
        let report = trajectory_error(&traj, &reference).unwrap();
        assert_eq!(report.abs_err_l2, vec![0.0, 0.5, 0.25]);
        assert_eq!(report.max_time_error, 0.5);
        assert_eq!(report.final_error, 0.25);

        // three steps against four cannot align, so the straight-line
        // reference is sampled by interpolation and matched exactly
        let thirds = Trajectory {
            times: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            states: vec![vec![0.0], vec![1.0 / 3.0], vec![2.0 / 3.0], vec![1.0]],
        };
        let line = Trajectory {
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            states: vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]],
        };
        let r = trajectory_error(&thirds, &line).unwrap();
        assert!(r.max_time_error <= 1e-15, "max {:.3e}", r.max_time_error);
    }

    #[test]
    fn trajectory_error_uses_the_reference_width() {
        let wide = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![1.0, 7.0], vec![2.0, 7.0]],
        };
        let narrow = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![1.0], vec![2.0]],
        };
        let report = trajectory_error(&wide, &narrow).unwrap();
        assert_eq!(report.max_time_error, 0.0);
        assert!(matches!(
            trajectory_error(&narrow, &wide),
            Err(CarlemanError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn euler_halving_the_step_halves_the_error() {
        let sys = scalar_decay();
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(1, 1, vec![(1, f1)], vec![1.0]).unwrap();
        let reference = ode.direct_integrate(1.0, 16000).unwrap();
        let e1 = solution_error(&euler_integrate(&sys, 1.0, 1000).unwrap(), &reference)
            .unwrap()
            .final_error;
        let e2 = solution_error(&euler_integrate(&sys, 1.0, 2000).unwrap(), &reference)
            .unwrap()
            .final_error;
        let ratio = e1 / e2;
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio:.3}");
    }

    #[test]
    fn condition_of_simple_triangulars() {
        let eye = SparseMatrix::identity(5);
        assert!((condition_estimate(&eye).unwrap() - 1.0).abs() < 1e-6);
        let d =
            SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 10.0)]).unwrap();
        let kappa = condition_estimate(&d).unwrap();
        assert!((kappa - 10.0).abs() < 1e-3, "kappa {kappa}");
    }

    #[test]
    fn condition_rejects_non_triangular_input() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)])
            .unwrap();
        assert!(matches!(
            condition_estimate(&m),
            Err(CarlemanError::InvalidInput(_))
        ));
        let singular =
            SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(condition_estimate(&singular).is_err());
    }

    #[test]
    fn gmres_matches_substitution_on_a_block_system() {
        let sys = scalar_decay();
        let bes = assemble_block(&sys, 1.0, 8, 3).unwrap();
        let l = bes.matrix().unwrap();
        let rhs = bes.rhs().unwrap();
        let direct = solve_block(&bes).unwrap();
        let out = gmres_solve(&l, &rhs, 12, 1e-10, 50).unwrap();
        assert!(out.relative_residual <= 1e-10);
        for j in 0..=11 {
            assert!((out.x[j] - direct.x[j][0]).abs() < 1e-9, "component {j}");
        }
    }
}
