//! Scalar figures of merit for a polynomial system and its linearization:
//! dissipation ratios, the rescaling that normalizes a quadratic system,
//! solution-decay ratios, sparsity counts, a measurement-probability floor
//! and a cost formula.
//!
//! The ratios all share one shape: nonlinear strength times state
//! amplitude, divided by how fast the linear part decays. When the ratio is
//! below one, truncating the lifted hierarchy converges; the reaction
//! benchmark is run on both sides of that threshold. Everything here is a
//! plain scalar so the report can be serialized and diffed between runs.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::carleman::carleman_dim;
use crate::error::{CarlemanError, Result};
use crate::ode::PolynomialODE;
use crate::quadratic::quadratize;
use crate::sparse::{norm2, SparseMatrix, SPECTRAL_NORM_TOL};

/// Largest dimension [`max_real_eigenvalue`] will hand to a dense
/// eigensolver. Above this the caller must supply the value.
pub const DENSE_EIGEN_LIMIT: usize = 64;

/// Dense-eigensolve allowance for stacked systems, whose dimension grows
/// like n^(k-1) and routinely exceeds [`DENSE_EIGEN_LIMIT`] while still
/// being trivial to factor.
pub const STACKED_EIGEN_LIMIT: usize = 256;

/// Returns the largest real part among the eigenvalues of a square matrix.
///
/// Diagonal matrices are read off directly at any size (absent diagonal
/// entries count as zeros). Anything else is densified and eigensolved,
/// with a symmetric fast path, but only up to [`DENSE_EIGEN_LIMIT`]; larger
/// non-diagonal matrices are refused so a caller never silently waits on an
/// O(dim^3) factorization of a huge operator.
pub fn max_real_eigenvalue(m: &SparseMatrix) -> Result<f64> {
    max_real_eigenvalue_within(m, DENSE_EIGEN_LIMIT)
}

/// [`max_real_eigenvalue`] with a caller-chosen dense-size ceiling.
pub fn max_real_eigenvalue_within(m: &SparseMatrix, limit: usize) -> Result<f64> {
    let n = m.rows();
    if m.cols() != n {
        return Err(CarlemanError::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if n == 0 {
        return Err(CarlemanError::InvalidInput(
            "eigenvalues of an empty matrix are undefined".into(),
        ));
    }
    if m.nnz() == 0 {
        return Ok(0.0);
    }
    if m.entries().iter().all(|&(r, c, _)| r == c) {
        let mut max = f64::NEG_INFINITY;
        for &(_, _, v) in m.entries() {
            max = max.max(v);
        }
        if m.nnz() < n {
            max = max.max(0.0);
        }
        return Ok(max);
    }
    if n > limit {
        return Err(CarlemanError::InvalidInput(format!(
            "dense eigensolve refused for dimension {n} > {limit}; \
             supply the leading real part explicitly"
        )));
    }
    let dense = m.to_dense();
    if is_symmetric(m) {
        let eigen = nalgebra::SymmetricEigen::new(dense);
        Ok(eigen
            .eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |a, &v| a.max(v)))
    } else {
        let eigen = dense.complex_eigenvalues();
        Ok(eigen.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.re)))
    }
}

fn is_symmetric(m: &SparseMatrix) -> bool {
    m.entries().iter().all(|&(r, c, v)| m.get(c, r) == v)
}

/// The l2 norm of the stacked vector `(x, x^[2], ..., x^[k-1])`, computed
/// from `‖x‖` alone: power blocks contribute `‖x‖^{2i}` to the square.
///
/// `k = 2` returns `x_norm` unchanged rather than `sqrt(x_norm^2)`, so
/// quadratic systems see bit-identical values wherever plain and stacked
/// norms meet.
pub fn stacked_norm(x_norm: f64, k: usize) -> f64 {
    if k == 2 {
        return x_norm;
    }
    let sq = x_norm * x_norm;
    let mut sum = 0.0;
    let mut power = 1.0;
    for _ in 1..k {
        power *= sq;
        sum += power;
    }
    sum.sqrt()
}

fn check_decay(re_lambda1: f64) -> Result<()> {
    if !re_lambda1.is_finite() || re_lambda1 >= 0.0 {
        return Err(CarlemanError::InvalidInput(format!(
            "linear part must be strictly decaying, leading eigenvalue real part {re_lambda1}"
        )));
    }
    Ok(())
}

fn checked_x0_norm(ode: &PolynomialODE) -> Result<f64> {
    let x0_norm = norm2(ode.x0());
    if x0_norm == 0.0 {
        return Err(CarlemanError::InvalidInput(
            "ratio undefined for a zero initial state".into(),
        ));
    }
    Ok(x0_norm)
}

fn f0_norm(ode: &PolynomialODE) -> Result<f64> {
    ode.f(0).spectral_norm(SPECTRAL_NORM_TOL)
}

fn tail_norm_sum(ode: &PolynomialODE) -> Result<f64> {
    let mut sum = 0.0;
    for j in 2..=ode.k() {
        sum += ode.f(j).spectral_norm(SPECTRAL_NORM_TOL)?;
    }
    Ok(sum)
}

/// Shared body of the dissipation ratios:
/// `((k-1)·Σ‖F_j‖·S + ‖F₀‖/S) / |re|` with `S` the stacked initial norm.
/// Keeping one expression guarantees the degree-2 and homogeneous
/// reductions are exact identities, not merely close.
fn ratio_core(km1: f64, tail_sum: f64, stacked: f64, f0: f64, re_lambda: f64) -> f64 {
    ((km1 * tail_sum) * stacked + f0 / stacked) / re_lambda.abs()
}

/// Ratio of quadratic forcing and constant drive to linear decay for a
/// degree-2 system: `(‖x0‖‖F₂‖ + ‖F₀‖/‖x0‖) / |re_lambda1|`. Values below
/// one put the system in the regime where the truncated hierarchy converges.
pub fn compute_r2(ode: &PolynomialODE, re_lambda1: f64) -> Result<f64> {
    if ode.k() != 2 {
        return Err(CarlemanError::InvalidInput(format!(
            "this ratio is defined for degree-2 systems, got degree {}",
            ode.k()
        )));
    }
    check_decay(re_lambda1)?;
    let x0_norm = checked_x0_norm(ode)?;
    Ok(ratio_core(
        1.0,
        ode.f(2).spectral_norm(SPECTRAL_NORM_TOL)?,
        x0_norm,
        f0_norm(ode)?,
        re_lambda1,
    ))
}

/// Degree-k generalization of [`compute_r2`], evaluated against the decay
/// of the stacked system's linear part:
/// `((k-1)·Σ_{j=2..k}‖F_j‖·S + ‖F₀‖/S) / |re_lambda1_tilde|` where
/// `S = sqrt(Σ_{i=1..k-1}‖x0‖^{2i})`. For k = 2 this is exactly
/// [`compute_r2`]. The stacked eigenvalue is a caller input because only
/// the homogeneous case lets it be read off the base system (see
/// [`diagnostics_report`] for the acquisition policy).
pub fn compute_rk(ode: &PolynomialODE, re_lambda1_tilde: f64) -> Result<f64> {
    if ode.k() < 2 {
        return Err(CarlemanError::InvalidInput(
            "degree must be at least 2 for the stacked ratio".into(),
        ));
    }
    check_decay(re_lambda1_tilde)?;
    let x0_norm = checked_x0_norm(ode)?;
    Ok(ratio_core(
        (ode.k() - 1) as f64,
        tail_norm_sum(ode)?,
        stacked_norm(x0_norm, ode.k()),
        f0_norm(ode)?,
        re_lambda1_tilde,
    ))
}

/// The homogeneous variant of [`compute_rk`]: requires `F₀ = 0`, under
/// which the stacked linear part decays exactly as fast as the base one, so
/// the eigenvalue is acquired internally from `F₁`:
/// `(k-1)·S·Σ_{j=2..k}‖F_j‖ / |re_lambda1|`.
pub fn compute_rk0(ode: &PolynomialODE) -> Result<f64> {
    if ode.k() < 2 {
        return Err(CarlemanError::InvalidInput(
            "degree must be at least 2 for the stacked ratio".into(),
        ));
    }
    if ode.f(0).nnz() != 0 {
        return Err(CarlemanError::InvalidInput(
            "homogeneous ratio requires a zero constant term".into(),
        ));
    }
    let re_lambda1 = max_real_eigenvalue(ode.f(1))?;
    check_decay(re_lambda1)?;
    let x0_norm = checked_x0_norm(ode)?;
    Ok(ratio_core(
        (ode.k() - 1) as f64,
        tail_norm_sum(ode)?,
        stacked_norm(x0_norm, ode.k()),
        0.0,
        re_lambda1,
    ))
}

/// A degree-2 system rescaled so its state starts inside the unit ball and
/// its quadratic-plus-constant strength sits below the linear decay.
#[derive(Debug, Clone)]
pub struct RescaledSystem {
    /// The scaling applied to the state, `x_bar = gamma * x`.
    pub gamma: f64,
    /// The rescaled system: `gamma*F₀`, `F₁`, `F₂/gamma`, `gamma*x0`.
    pub ode: PolynomialODE,
    /// Non-fatal conditions observed while rescaling, such as a ratio at or
    /// above one, under which the normalization targets cannot both hold.
    pub warnings: Vec<String>,
}

/// Rescales a degree-2 system by `gamma = 1/sqrt(‖x0‖·r₊)`, where `r₊` is
/// the larger root of `‖F₂‖r² − |re_lambda1|·r + ‖F₀‖`. The ratio from
/// [`compute_r2`] is invariant under this map, and when it is below one the
/// rescaled system satisfies `‖F̄₂‖ + ‖F̄₀‖ < |re_lambda1|` and `‖x̄0‖ < 1`,
/// both of which are checked and reported as warnings if they fail.
pub fn rescale_gamma(ode: &PolynomialODE) -> Result<RescaledSystem> {
    if ode.k() != 2 {
        return Err(CarlemanError::InvalidInput(format!(
            "rescaling is defined for degree-2 systems, got degree {}",
            ode.k()
        )));
    }
    let re_lambda1 = max_real_eigenvalue(ode.f(1))?;
    check_decay(re_lambda1)?;
    let x0_norm = checked_x0_norm(ode)?;
    let f2_norm = ode.f(2).spectral_norm(SPECTRAL_NORM_TOL)?;
    if f2_norm == 0.0 {
        return Err(CarlemanError::InvalidInput(
            "rescaling needs a nonzero quadratic term".into(),
        ));
    }
    let f0 = f0_norm(ode)?;

    let mut warnings = Vec::new();
    let r2 = ratio_core(1.0, f2_norm, x0_norm, f0, re_lambda1);
    if r2 >= 1.0 {
        warnings.push(format!(
            "dissipation ratio {r2:.6} is not below one; the rescaled system \
             cannot meet both normalization targets"
        ));
    }

    let discriminant = re_lambda1 * re_lambda1 - 4.0 * f2_norm * f0;
    if discriminant < 0.0 {
        return Err(CarlemanError::InvalidInput(format!(
            "no real scaling root: (re λ)² − 4‖F₂‖‖F₀‖ = {discriminant:.6e} < 0"
        )));
    }
    let r_plus = (-re_lambda1 + discriminant.sqrt()) / (2.0 * f2_norm);
    let gamma = 1.0 / (x0_norm * r_plus).sqrt();

    let f0_scaled = ode.f(0).scale(gamma)?;
    let f2_scaled = ode.f(2).scale(1.0 / gamma)?;
    let x0_scaled: Vec<f64> = ode.x0().iter().map(|&v| gamma * v).collect();
    let rescaled = PolynomialODE::from_terms(
        ode.n(),
        2,
        vec![(0, f0_scaled), (1, ode.f(1).clone()), (2, f2_scaled)],
        x0_scaled,
    )?;

    let strength =
        rescaled.f(2).spectral_norm(SPECTRAL_NORM_TOL)? + f0_norm(&rescaled)?;
    if strength >= re_lambda1.abs() {
        warnings.push(format!(
            "rescaled strength ‖F̄₂‖+‖F̄₀‖ = {strength:.6} does not sit below \
             the decay rate {:.6}",
            re_lambda1.abs()
        ));
    }
    let x0_scaled_norm = norm2(rescaled.x0());
    if x0_scaled_norm >= 1.0 {
        warnings.push(format!(
            "rescaled initial state has norm {x0_scaled_norm:.6} >= 1"
        ));
    }

    Ok(RescaledSystem {
        gamma,
        ode: rescaled,
        warnings,
    })
}

/// Solution-decay ratios between the initial and final states: `q` on the
/// plain states and `q_k` on the stacked ones. For k = 2 the two are
/// bit-identical.
pub fn decay_ratios(x0: &[f64], x_final: &[f64], k: usize) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(CarlemanError::InvalidInput(
            "decay ratios need degree at least 2".into(),
        ));
    }
    if x0.len() != x_final.len() {
        return Err(CarlemanError::DimensionMismatch(format!(
            "state lengths differ: {} vs {}",
            x0.len(),
            x_final.len()
        )));
    }
    let n0 = norm2(x0);
    let nf = norm2(x_final);
    if nf == 0.0 {
        return Err(CarlemanError::InvalidInput(
            "decay ratio undefined for a zero final state".into(),
        ));
    }
    let q = n0 / nf;
    let q_k = stacked_norm(n0, k) / stacked_norm(nf, k);
    Ok((q, q_k))
}

/// Floor on the probability that measuring the solved history collapses
/// onto a usable final-state block: `(p+1) / (9·(m+p+1)·N·q²)`. Callers
/// pass positive counts and a positive decay ratio; the formula itself
/// never fails.
pub fn p_measure_bound(m: usize, p: usize, level: usize, q: f64) -> f64 {
    (p as f64 + 1.0) / (9.0 * (m + p + 1) as f64 * level as f64 * q * q)
}

/// Reported cost scalar `s_k·T²·q_k/eps` times one logarithmic factor per
/// problem size, each taken at power one and floored at one:
/// `max(ln T, 1) · (k-1)·max(ln n, 1) · max(ln(1/eps), 1)`.
/// A reporting convention for comparing instances, not a claimed bound.
pub fn complexity_expression(
    s_k: usize,
    t_final: f64,
    q_k: f64,
    eps: f64,
    k: usize,
    n: usize,
) -> f64 {
    let log_t = t_final.ln().max(1.0);
    let log_n = (k - 1) as f64 * (n as f64).ln().max(1.0);
    let log_eps = (1.0 / eps).ln().max(1.0);
    (s_k as f64 * t_final * t_final * q_k / eps) * log_t * log_n * log_eps
}

/// Everything the pipeline can say about one instance in one place.
/// Optional fields are absent when their preconditions fail (wrong degree,
/// non-decaying linear part, a stacked system too large to eigensolve)
/// rather than failing the whole report.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Largest real part among the linear coefficient's eigenvalues.
    pub re_lambda1: f64,
    /// Degree-2 dissipation ratio; present only for k = 2.
    pub r2: Option<f64>,
    /// Stacked dissipation ratio; absent when the stacked eigenvalue is
    /// unobtainable.
    pub rk: Option<f64>,
    /// Homogeneous stacked ratio; present only when `F₀ = 0`.
    pub rk0: Option<f64>,
    /// State scaling from [`rescale_gamma`]; present only for k = 2 with a
    /// real scaling root.
    pub gamma: Option<f64>,
    /// `‖x(0)‖ / ‖x(T)‖`.
    pub q: f64,
    /// Stacked-state decay ratio.
    pub q_k: f64,
    /// Worst row/column nonzero count over all coefficient blocks.
    pub s: usize,
    /// Sparsity carried by the stacked coefficients, `s·k(k-1)/2`.
    pub s_k: usize,
    /// Dimension of the truncated lifted system at the reported level.
    pub n_c: usize,
    /// Condition estimate of the block time-stepping matrix, when the
    /// caller computed one.
    pub cond_estimate: Option<f64>,
    /// Measurement floor from [`p_measure_bound`].
    pub p_measure_bound: f64,
    /// Cost scalar from [`complexity_expression`].
    pub complexity_expr: f64,
}

/// Assembles the full report for one instance. The final state for the
/// decay ratios comes from a high-order reference integration with
/// `reference_steps` steps. `m` and `p` are the time-step and padding
/// counts the bound should be quoted for; `cond_estimate` is passed
/// through, since estimating it needs the assembled block matrix and is
/// the caller's choice to pay for.
#[allow(clippy::too_many_arguments)]
pub fn diagnostics_report(
    ode: &PolynomialODE,
    level: usize,
    t_final: f64,
    eps: f64,
    m: usize,
    p: usize,
    reference_steps: usize,
    cond_estimate: Option<f64>,
) -> Result<DiagnosticsReport> {
    if level < 1 {
        return Err(CarlemanError::InvalidInput(
            "truncation level must be at least 1".into(),
        ));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CarlemanError::InvalidInput(format!(
            "error budget must lie in (0, 1), got {eps}"
        )));
    }
    let k = ode.k();
    let n = ode.n();

    let re_lambda1 = max_real_eigenvalue(ode.f(1))?;

    let trajectory = ode.direct_integrate(t_final, reference_steps)?;
    let x_final = trajectory.final_state();
    let (q, q_k) = if k >= 2 {
        decay_ratios(ode.x0(), x_final, k)?
    } else {
        let n0 = norm2(ode.x0());
        let nf = norm2(x_final);
        if nf == 0.0 {
            return Err(CarlemanError::InvalidInput(
                "decay ratio undefined for a zero final state".into(),
            ));
        }
        (n0 / nf, n0 / nf)
    };

    let s = (0..=k).map(|j| ode.f(j).sparsity()).max().unwrap_or(0);
    let s_k = s * k * (k - 1) / 2;
    let n_c = carleman_dim(n, level)?;

    let r2 = if k == 2 {
        compute_r2(ode, re_lambda1).ok()
    } else {
        None
    };
    let rk = stacked_eigenvalue(ode, re_lambda1)
        .and_then(|lam| compute_rk(ode, lam).ok());
    let rk0 = if ode.f(0).nnz() == 0 {
        compute_rk0(ode).ok()
    } else {
        None
    };
    let gamma = if k == 2 {
        rescale_gamma(ode).ok().map(|r| r.gamma)
    } else {
        None
    };

    Ok(DiagnosticsReport {
        re_lambda1,
        r2,
        rk,
        rk0,
        gamma,
        q,
        q_k,
        s,
        s_k,
        n_c,
        cond_estimate,
        p_measure_bound: p_measure_bound(m, p, level, q),
        complexity_expr: complexity_expression(s_k, t_final, q_k, eps, k, n),
    })
}

/// Leading real part for the stacked system's linear coefficient. With no
/// constant term the stacked spectrum is built from sums of base
/// eigenvalues and its leader coincides with the base one; otherwise the
/// stacked coefficient is eigensolved densely while it stays small.
fn stacked_eigenvalue(ode: &PolynomialODE, re_lambda1: f64) -> Option<f64> {
    if ode.k() < 2 {
        return None;
    }
    if ode.f(0).nnz() == 0 {
        return Some(re_lambda1);
    }
    let quad = quadratize(ode).ok()?;
    max_real_eigenvalue_within(quad.ode.f(1), STACKED_EIGEN_LIMIT).ok()
}

/// Dense-eigensolve cross-check used by tests; returns every eigenvalue's
/// real part, sorted descending.
pub fn real_parts_dense(m: &DMatrix<f64>) -> Vec<f64> {
    let mut parts: Vec<f64> = m.complex_eigenvalues().iter().map(|v| v.re).collect();
    parts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    parts
}
