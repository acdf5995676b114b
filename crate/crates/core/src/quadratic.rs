//! Reduction of a degree-k polynomial system to a quadratic one.
//!
//! The stacked state `y = (x, x^[2], ..., x^[k-1])` closes on itself with
//! only constant, linear and quadratic terms: the derivative of `x^[i]`
//! involves powers up to `x^[i+k-1]`, and any power `x^[m]` with
//! `m <= 2(k-1)` factors through the stack as `x^[m-k+1] (x) x^[k-1]`, a
//! single block of `y (x) y`. So every polynomial system of degree at least
//! two can be handed to machinery that only understands quadratic ones.
//!
//! The coefficients of the reduced system reuse the transfer matrices: the
//! part of `d(x^[i])/dt` against `x^[i']` lands in the linear coefficient
//! when `i' < k`, and in the quadratic coefficient, re-indexed into
//! `y (x) y` coordinates, when `i' >= k`.
//!
//! A degree-2 input passes through unchanged (the stack is just `x`), and
//! degree 1 is rejected since there is nothing to reduce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capacity::{check_entries, checked_dim_pow, checked_mul};
use crate::carleman::{assemble_truncated, carleman_dim, lift_state, transfer_matrix};
use crate::error::{CarlemanError, Result};
use crate::euler::euler_integrate;
use crate::ode::PolynomialODE;
use crate::sparse::{kron_power_vec, kron_vec, norm2, SparseMatrix};

/// Relative tolerance for [`rhs_consistency_check`].
pub const CONSISTENCY_TOL: f64 = 1e-10;

const CONSISTENCY_SEED: u64 = 0x5eed_0004;

/// A quadratic system equivalent to a higher-degree source system, together
/// with the bookkeeping to move states between the two.
#[derive(Debug, Clone)]
pub struct QuadraticODE {
    /// The reduced system on the stacked state; always degree 2.
    pub ode: PolynomialODE,
    /// State dimension of the source system.
    pub base_n: usize,
    /// Degree of the source system.
    pub base_k: usize,
    segment_offsets: Vec<usize>,
    segment_dims: Vec<usize>,
}

impl QuadraticODE {
    /// Dimension of the stacked state.
    pub fn n_q(&self) -> usize {
        self.ode.n()
    }

    /// Number of stacked segments, `base_k - 1`.
    pub fn segments(&self) -> usize {
        self.base_k - 1
    }

    /// Dimension `n^i` of segment `i`, for `i` in `1..=segments`.
    pub fn segment_dim(&self, i: usize) -> usize {
        self.segment_dims[i - 1]
    }

    /// Offset of segment `i` within the stacked state.
    pub fn segment_offset(&self, i: usize) -> usize {
        self.segment_offsets[i - 1]
    }

    /// Stacks a source state into the reduced system's coordinates.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.base_n {
            return Err(CarlemanError::DimensionMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.base_n
            )));
        }
        lift_state(x, self.base_k - 1)
    }
}

/// Builds the quadratic system equivalent to `ode`.
pub fn quadratize(ode: &PolynomialODE) -> Result<QuadraticODE> {
    let n = ode.n();
    let k = ode.k();
    if k < 2 {
        return Err(CarlemanError::InvalidInput(
            "a degree-1 system is already linear; there is nothing to reduce".into(),
        ));
    }
    let segments = k - 1;
    let n_q = carleman_dim(n, segments)?;
    checked_mul(n_q, n_q)?;

    let mut segment_dims = Vec::with_capacity(segments);
    let mut segment_offsets = Vec::with_capacity(segments);
    let mut offset = 0;
    for i in 1..=segments {
        segment_offsets.push(offset);
        let d = checked_dim_pow(n, i as u32)?;
        segment_dims.push(d);
        offset += d;
    }

    // project the total entry count across both coefficient matrices
    let mut needed = 0usize;
    for i in 1..=segments {
        let slot_factor = checked_dim_pow(n, (i - 1) as u32)?;
        for j in 0..=k {
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

    let f0t = SparseMatrix::from_triplets(n_q, 1, ode.f(0).entries().to_vec())?;

    let mut linear = Vec::new();
    let mut quadratic = Vec::new();
    for i in 1..=segments {
        let row0 = segment_offsets[i - 1];
        // the constant coefficient couples segment i to segment i - 1
        if i >= 2 && ode.f(0).nnz() > 0 {
            let block = transfer_matrix(ode, i, 0)?;
            let col0 = segment_offsets[i - 2];
            linear.extend(
                block
                    .entries()
                    .iter()
                    .map(|&(r, c, v)| (row0 + r, col0 + c, v)),
            );
        }
        for j in 1..=k {
            if ode.f(j).nnz() == 0 {
                continue;
            }
            let target = i + j - 1;
            if target <= segments {
                // still inside the stack: a linear coupling
                let block = transfer_matrix(ode, i, j)?;
                let col0 = segment_offsets[target - 1];
                linear.extend(
                    block
                        .entries()
                        .iter()
                        .map(|&(r, c, v)| (row0 + r, col0 + c, v)),
                );
            } else {
                // x^[target] = x^[u] (x) x^[v] with v = k - 1, re-indexed
                // into the Kronecker square of the stacked state
                let u = target - k + 1;
                let v = k - 1;
                let nv = checked_dim_pow(n, v as u32)?;
                let block = transfer_matrix(ode, i, j)?;
                let (ou, ov) = (segment_offsets[u - 1], segment_offsets[v - 1]);
                quadratic.extend(block.entries().iter().map(|&(r, c, val)| {
                    let r_u = c / nv;
                    let c_v = c % nv;
                    (row0 + r, (ou + r_u) * n_q + (ov + c_v), val)
                }));
            }
        }
    }
    let f1t = SparseMatrix::from_triplets(n_q, n_q, linear)?;
    let f2t = SparseMatrix::from_triplets(n_q, n_q * n_q, quadratic)?;
    let x0t = lift_state(ode.x0(), segments)?;
    let reduced = PolynomialODE::new(n_q, 2, vec![f0t, f1t, f2t], x0t)?;

    Ok(QuadraticODE {
        ode: reduced,
        base_n: n,
        base_k: k,
        segment_offsets,
        segment_dims,
    })
}

/// Result of sampling the reduced system's right-hand side against the
/// chain rule applied to the source system.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub trials: usize,
    /// Trials whose relative discrepancy exceeded the tolerance.
    pub failures: usize,
    pub max_discrepancy: f64,
    pub tolerance: f64,
}

/// Draws `trials` random states and compares the reduced right-hand side at
/// the stacked state against the segment-by-segment chain rule
/// `d(x^[i])/dt = sum over slots of x^[p-1] (x) dx/dt (x) x^[i-p]`,
/// which uses only the source system. Discrepancies are counted and
/// reported, never thrown: a sick reduction is a finding, not a crash.
pub fn rhs_consistency_check(
    ode: &PolynomialODE,
    quad: &QuadraticODE,
    trials: usize,
) -> Result<ConsistencyReport> {
    if quad.base_n != ode.n() || quad.base_k != ode.k() {
        return Err(CarlemanError::DimensionMismatch(format!(
            "reduction was built for n = {}, k = {}; the system has n = {}, k = {}",
            quad.base_n,
            quad.base_k,
            ode.n(),
            ode.k()
        )));
    }
    if trials == 0 {
        return Err(CarlemanError::InvalidInput(
            "need at least one trial".into(),
        ));
    }
    let n = ode.n();
    let mut rng = ChaCha8Rng::seed_from_u64(CONSISTENCY_SEED);
    let mut failures = 0;
    let mut max_discrepancy = 0.0_f64;
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let stacked = quad.lift(&x)?;
        let got = quad.ode.evaluate_rhs(&stacked)?;

        let xdot = ode.evaluate_rhs(&x)?;
        let mut expected = Vec::with_capacity(quad.n_q());
        for i in 1..=quad.segments() {
            let mut segment = vec![0.0; quad.segment_dim(i)];
            for p in 1..=i {
                let left = kron_power_vec(&x, p - 1)?;
                let right = kron_power_vec(&x, i - p)?;
                let term = kron_vec(&kron_vec(&left, &xdot)?, &right)?;
                for (s, t) in segment.iter_mut().zip(&term) {
                    *s += t;
                }
            }
            expected.extend(segment);
        }

        let mut diff_sq = 0.0;
        for (g, e) in got.iter().zip(&expected) {
            let d = g - e;
            diff_sq += d * d;
        }
        let scale = norm2(&expected)
            .max(norm2(&got))
            .max(f64::MIN_POSITIVE);
        let rel = diff_sq.sqrt() / scale;
        max_discrepancy = max_discrepancy.max(rel);
        if !(rel <= CONSISTENCY_TOL) {
            failures += 1;
        }
    }
    Ok(ConsistencyReport {
        trials,
        failures,
        max_discrepancy,
        tolerance: CONSISTENCY_TOL,
    })
}

/// Result of running the two lifting routes side by side.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// Truncation level used on the reduced system.
    pub level: usize,
    /// Matching truncation level used on the source system,
    /// `level * (k - 1)`.
    pub direct_level: usize,
    pub steps: usize,
    pub step_size: f64,
    pub horizon: f64,
    /// Largest l2 distance between the recovered states across all grid
    /// points.
    pub max_discrepancy: f64,
}

/// Lifts the reduced system at `level` and the source system at
/// `level * (k - 1)`, advances both with the same forward Euler grid
/// (`round(t_final / h)` steps), and reports the worst l2 disagreement in
/// the recovered state over the grid.
///
/// For degree-2 input the two routes build the same matrix and the
/// discrepancy is pure roundoff. From degree 3 on they close their
/// hierarchies differently at the top: cutting the stacked hierarchy after
/// `level` drops a few flows between monomials that the direct hierarchy at
/// `level * (k - 1)` still carries, so the report contains a genuine
/// truncation-order term. That term is independent of `h`, falls off
/// steeply with `level`, and scales with a high power of the trajectory
/// amplitude, which is what makes the two routes interchangeable in
/// practice on contractive systems.
pub fn equivalence_check(
    ode: &PolynomialODE,
    level: usize,
    t_final: f64,
    h: f64,
) -> Result<EquivalenceReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(CarlemanError::InvalidInput(format!(
            "step size must be positive and finite, got {h}"
        )));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(CarlemanError::InvalidInput(format!(
            "horizon must be positive and finite, got {t_final}"
        )));
    }
    let n = ode.n();
    let quad = quadratize(ode)?;
    let direct_level = level
        .checked_mul(ode.k() - 1)
        .ok_or_else(|| CarlemanError::InvalidInput("truncation level overflow".into()))?;
    let reduced_sys = assemble_truncated(&quad.ode, level)?;
    let direct_sys = assemble_truncated(ode, direct_level)?;

    let steps = ((t_final / h).round() as usize).max(1);
    let reduced_sol = euler_integrate(&reduced_sys, t_final, steps)?;
    let direct_sol = euler_integrate(&direct_sys, t_final, steps)?;

    let mut max_discrepancy = 0.0_f64;
    for j in 0..=steps {
        let mut sq = 0.0;
        for i in 0..n {
            let d = reduced_sol.x[j][i] - direct_sol.x[j][i];
            sq += d * d;
        }
        max_discrepancy = max_discrepancy.max(sq.sqrt());
    }
    Ok(EquivalenceReport {
        level,
        direct_level,
        steps,
        step_size: t_final / steps as f64,
        horizon: t_final,
        max_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cubic(lambda: f64, c: f64, x0: f64) -> PolynomialODE {
        let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, lambda)]).unwrap();
        let f3 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, c)]).unwrap();
        PolynomialODE::from_terms(1, 3, vec![(1, f1), (3, f3)], vec![x0]).unwrap()
    }

    fn planar_cubic() -> PolynomialODE {
        let f1 = SparseMatrix::from_triplets(2, 2, vec![(0, 0, -1.0), (0, 1, 0.5), (1, 1, -2.0)])
            .unwrap();
        let f2 = SparseMatrix::from_triplets(2, 4, vec![(0, 3, 0.25), (1, 0, -0.5)]).unwrap();
        let f3 = SparseMatrix::from_triplets(2, 8, vec![(0, 0, 0.125), (1, 7, -0.25)]).unwrap();
        let f0 = SparseMatrix::from_triplets(2, 1, vec![(0, 0, 0.1)]).unwrap();
        PolynomialODE::from_terms(
            2,
            3,
            vec![(0, f0), (1, f1), (2, f2), (3, f3)],
            vec![0.4, -0.2],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_input_passes_through_unchanged() {
        let f0 = SparseMatrix::from_triplets(2, 1, vec![(1, 0, 0.5)]).unwrap();
        let f1 = SparseMatrix::from_triplets(2, 2, vec![(0, 0, -1.0), (1, 0, 2.0)]).unwrap();
        let f2 = SparseMatrix::from_triplets(2, 4, vec![(0, 1, 0.25), (1, 2, -0.75)]).unwrap();
        let ode = PolynomialODE::from_terms(
            2,
            2,
            vec![(0, f0), (1, f1), (2, f2)],
            vec![0.3, 0.7],
        )
        .unwrap();
        let quad = quadratize(&ode).unwrap();
        assert_eq!(quad.n_q(), 2);
        assert_eq!(quad.segments(), 1);
        for j in 0..=2 {
            assert_eq!(quad.ode.f(j), ode.f(j), "degree {j}");
        }
        assert_eq!(quad.ode.x0(), ode.x0());
    }

    #[test]
    fn linear_input_is_rejected() {
        let f1 = SparseMatrix::identity(2);
        let ode = PolynomialODE::from_terms(2, 1, vec![(1, f1)], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            quadratize(&ode),
            Err(CarlemanError::InvalidInput(_))
        ));
    }

    #[test]
    fn scalar_cubic_reduces_by_hand() {
        // d/dt (x, x^2) = (l x + c x^3, 2 l x^2 + 2 c x^4), all the powers
        // reachable through the stack (x, x^2)
        let quad = quadratize(&scalar_cubic(-1.0, 0.5, 0.5)).unwrap();
        assert_eq!(quad.n_q(), 2);
        let stacked = quad.lift(&[0.5]).unwrap();
        assert_eq!(stacked, vec![0.5, 0.25]);
        let rhs = quad.ode.evaluate_rhs(&stacked).unwrap();
        assert_eq!(rhs, vec![-0.4375, -0.4375]);
        // the linear part is diag(l, 2l)
        assert_eq!(quad.ode.f(1).get(0, 0), -1.0);
        assert_eq!(quad.ode.f(1).get(1, 1), -2.0);
        assert_eq!(quad.ode.f(1).nnz(), 2);
        // the cubic lands at x * x^2 for the first row, x^2 * x^2 for the second
        assert_eq!(quad.ode.f(2).get(0, 1), 0.5);
        assert_eq!(quad.ode.f(2).get(1, 3), 1.0);
        assert_eq!(quad.ode.f(2).nnz(), 2);
    }

    #[test]
    fn lifting_a_unit_vector() {
        let quad = quadratize(&planar_cubic()).unwrap();
        assert_eq!(
            quad.lift(&[1.0, 0.0]).unwrap(),
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn segment_layout_for_degree_four() {
        let f4 = SparseMatrix::from_triplets(2, 16, vec![(0, 0, 1.0)]).unwrap();
        let ode = PolynomialODE::from_terms(2, 4, vec![(4, f4)], vec![0.1, 0.1]).unwrap();
        let quad = quadratize(&ode).unwrap();
        assert_eq!(quad.segments(), 3);
        assert_eq!(quad.n_q(), 14);
        assert_eq!(
            (1..=3).map(|i| quad.segment_dim(i)).collect::<Vec<_>>(),
            vec![2, 4, 8]
        );
        assert_eq!(
            (1..=3).map(|i| quad.segment_offset(i)).collect::<Vec<_>>(),
            vec![0, 2, 6]
        );
    }

    #[test]
    fn sampled_rhs_matches_the_chain_rule() {
        let ode = planar_cubic();
        let quad = quadratize(&ode).unwrap();
        let report = rhs_consistency_check(&ode, &quad, 25).unwrap();
        assert_eq!(report.trials, 25);
        assert_eq!(report.failures, 0, "max {:.3e}", report.max_discrepancy);
        assert!(report.max_discrepancy <= 1e-12);
    }

    #[test]
    fn consistency_check_flags_a_mismatched_pair() {
        let ode = planar_cubic();
        let quad = quadratize(&scalar_cubic(-1.0, 0.5, 0.5));
        // different base dimension is a hard error, not a failure count
        assert!(rhs_consistency_check(&ode, &quad.unwrap(), 5).is_err());

        // same shape, different coefficient: every trial should fail
        let f3 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 0.75)]).unwrap();
        let tampered =
            PolynomialODE::from_terms(1, 3, vec![(3, f3)], vec![0.5]).unwrap();
        let quad_good = quadratize(&scalar_cubic(-1.0, 0.5, 0.5)).unwrap();
        let report = rhs_consistency_check(&tampered, &quad_good, 10).unwrap();
        assert_eq!(report.failures, 10);
        assert!(report.max_discrepancy > 1e-3);
    }

    #[test]
    fn the_two_lifting_routes_agree_on_a_scalar_cubic() {
        let ode = scalar_cubic(-1.0, 0.5, 0.5);
        let report = equivalence_check(&ode, 2, 1.0, 1e-3).unwrap();
        assert_eq!(report.direct_level, 4);
        assert_eq!(report.steps, 1000);
        assert!(
            report.max_discrepancy <= 1e-9,
            "discrepancy {:.3e}",
            report.max_discrepancy
        );
    }

    #[test]
    fn the_two_lifting_routes_agree_on_a_random_stable_system() {
        use crate::models::sample_stable_cubic;

        let ode = sample_stable_cubic(0x5eed_0011);
        for level in [2usize, 3] {
            let report = equivalence_check(&ode, level, 1.0, 1e-3).unwrap();
            assert_eq!(report.direct_level, 2 * level);
            assert!(
                report.max_discrepancy <= 1e-8,
                "level {level}: discrepancy {:.3e}",
                report.max_discrepancy
            );
        }
    }

    #[test]
    fn truncation_gap_between_the_routes_is_not_a_step_size_artifact() {
        // With a quadratic coefficient present, cutting the stacked
        // hierarchy at level 2 loses cubic-content flows that the direct
        // hierarchy at level 4 keeps, so the routes disagree by a fixed
        // truncation-order amount. Pin its signature: stable under h
        // refinement, steep decay in the truncation level.
        let ode = planar_cubic();
        let g2 = equivalence_check(&ode, 2, 0.5, 1e-3).unwrap().max_discrepancy;
        let g2_fine = equivalence_check(&ode, 2, 0.5, 2.5e-4)
            .unwrap()
            .max_discrepancy;
        let g3 = equivalence_check(&ode, 3, 0.5, 1e-3).unwrap().max_discrepancy;
        let g4 = equivalence_check(&ode, 4, 0.5, 1e-3).unwrap().max_discrepancy;
        assert!(g2 > 1e-6, "expected a visible gap, got {g2:.3e}");
        assert!(
            (g2 - g2_fine).abs() <= 0.05 * g2,
            "gap moved under h refinement: {g2:.6e} vs {g2_fine:.6e}"
        );
        assert!(g3 < 0.1 * g2, "level 3 gap {g3:.3e} vs level 2 {g2:.3e}");
        assert!(g4 < 0.1 * g3, "level 4 gap {g4:.3e} vs level 3 {g3:.3e}");
    }
}
