//! Benchmark systems, chiefly a 1-D reaction-diffusion problem with a
//! bistable cubic reaction and zero-flux boundaries.
//!
//! The PDE `u_t = kappa·u_yy + u(1-u)(u-a)` on `[0, L]` is discretized on a
//! uniform grid with second-order central differences; the reflecting
//! boundaries fold the ghost points back, which shows up as lighter diagonal
//! entries in the first and last rows. The cubic reaction makes the
//! discretized system degree 3: a tridiagonal linear part, one quadratic
//! coefficient per grid point and one cubic coefficient per grid point.
//!
//! Populations starting below the threshold `a` die out, so the named
//! parameter sets decay toward zero and make good convergence benchmarks
//! for the truncated lifted hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::max_real_eigenvalue;
use crate::error::{CarlemanError, Result};
use crate::ode::PolynomialODE;
use crate::sparse::SparseMatrix;

/// Grid, reaction and initial-profile description for the discretized
/// reaction-diffusion system.
#[derive(Debug, Clone)]
pub struct ReactionDiffusionParams {
    /// Number of grid points; at least 2.
    pub n: usize,
    /// Domain length.
    pub length: f64,
    /// Reaction threshold, in `[0, 1/2]`. States between 0 and `a` decay.
    pub a: f64,
    /// Diffusion coefficient.
    pub kappa: f64,
    /// Height of the initial plateau.
    pub u_in: f64,
    /// Right edge of the initial plateau, strictly inside `(0, length)`.
    pub y_star: f64,
    /// Simulation horizon.
    pub t_final: f64,
    /// Sign convention for the linear reaction coefficient. The product
    /// `u(1-u)(u-a)` expands to `-a·u + (1+a)u² - u³`, so `true` puts `-a`
    /// on the diagonal, giving a strictly decaying linear part and making
    /// the right-hand side on constant data equal the pointwise reaction.
    /// `false` keeps the `+a` convention, under which the constant mode
    /// sits at `+a` and the decay precondition of the ratio diagnostics
    /// fails. Both conventions are in circulation for this benchmark; the
    /// named presets use the expanded form.
    pub expanded_reaction: bool,
    /// Whether the initial plateau includes the left boundary point. The
    /// profile is `u_in` on `0 < y < y_star` by default, which leaves
    /// `y = 0` empty; `true` widens the condition to `y < y_star`, matching
    /// plotted profiles that show the plateau starting at the boundary.
    /// The named presets use the inclusive form.
    pub inclusive_plateau: bool,
}

impl ReactionDiffusionParams {
    /// Validates and builds a parameter set with the default conventions:
    /// `+a` diagonal and a plateau that excludes the boundary point.
    pub fn new(
        n: usize,
        length: f64,
        a: f64,
        kappa: f64,
        u_in: f64,
        y_star: f64,
        t_final: f64,
    ) -> Result<Self> {
        let params = ReactionDiffusionParams {
            n,
            length,
            a,
            kappa,
            u_in,
            y_star,
            t_final,
            expanded_reaction: false,
            inclusive_plateau: false,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CarlemanError::InvalidInput(format!(
                "need at least 2 grid points, got {}",
                self.n
            )));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(CarlemanError::InvalidInput(format!(
                "domain length must be positive and finite, got {}",
                self.length
            )));
        }
        if !(0.0..=0.5).contains(&self.a) {
            return Err(CarlemanError::InvalidInput(format!(
                "reaction threshold must lie in [0, 1/2], got {}",
                self.a
            )));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(CarlemanError::InvalidInput(format!(
                "diffusion coefficient must be positive and finite, got {}",
                self.kappa
            )));
        }
        if !self.u_in.is_finite() {
            return Err(CarlemanError::InvalidInput(format!(
                "plateau height must be finite, got {}",
                self.u_in
            )));
        }
        if !(self.y_star > 0.0 && self.y_star < self.length) {
            return Err(CarlemanError::InvalidInput(format!(
                "plateau edge must lie strictly inside (0, {}), got {}",
                self.length, self.y_star
            )));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(CarlemanError::InvalidInput(format!(
                "horizon must be positive and finite, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Grid spacing `length / (n - 1)`.
    pub fn grid_spacing(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    /// The decaying benchmark: 10 points on a unit domain, threshold 1/4,
    /// diffusion tuned so the coupling weight is exactly one, low plateau
    /// `u_in = 0.03` up to `y* = 0.3`, horizon 1. Uses the expanded
    /// reaction sign and the inclusive plateau.
    pub fn fig1() -> Self {
        let n = 10;
        let length = 1.0;
        let dy = length / (n - 1) as f64;
        ReactionDiffusionParams {
            n,
            length,
            a: 0.25,
            kappa: dy * dy,
            u_in: 0.03,
            y_star: 0.3,
            t_final: 1.0,
            expanded_reaction: true,
            inclusive_plateau: true,
        }
    }

    /// Same grid as [`fig1`](Self::fig1) with a tall plateau `u_in = 0.5`,
    /// which pushes the dissipation ratio far above one while the solution
    /// still decays.
    pub fn fig2() -> Self {
        ReactionDiffusionParams {
            u_in: 0.5,
            ..Self::fig1()
        }
    }

    /// Variant of [`fig2`](Self::fig2) with `u_in = 0.3`.
    pub fn fig2_alt() -> Self {
        ReactionDiffusionParams {
            u_in: 0.3,
            ..Self::fig1()
        }
    }

    /// Looks up a named preset: `fig1`, `fig2` or `fig2-alt`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig1" => Some(Self::fig1()),
            "fig2" => Some(Self::fig2()),
            "fig2-alt" => Some(Self::fig2_alt()),
            _ => None,
        }
    }
}

/// Builds the degree-3 system for a parameter set: tridiagonal coupling
/// with coupling weight `beta = kappa/(grid spacing)²`, diagonal
/// `±a - 2·beta` in the interior and `±a - beta` at the reflecting ends,
/// quadratic coefficients `1 + a` and cubic coefficients `-1`, one per grid
/// point, each hitting that point's own square and cube. The initial state
/// is the plateau profile sampled on the grid.
pub fn build_reaction_diffusion(params: &ReactionDiffusionParams) -> Result<PolynomialODE> {
    params.validate()?;
    let n = params.n;
    let dy = params.grid_spacing();
    let beta = params.kappa / (dy * dy);
    let a_lin = if params.expanded_reaction {
        -params.a
    } else {
        params.a
    };

    let mut f1 = Vec::with_capacity(3 * n - 2);
    for i in 0..n {
        let diag = if i == 0 || i == n - 1 {
            a_lin - beta
        } else {
            a_lin - 2.0 * beta
        };
        f1.push((i, i, diag));
        if i + 1 < n {
            f1.push((i, i + 1, beta));
            f1.push((i + 1, i, beta));
        }
    }
    let f1 = SparseMatrix::from_triplets(n, n, f1)?;

    let f2 = SparseMatrix::from_triplets(
        n,
        n * n,
        (0..n).map(|i| (i, i * n + i, 1.0 + params.a)).collect(),
    )?;
    let f3 = SparseMatrix::from_triplets(
        n,
        n * n * n,
        (0..n)
            .map(|i| (i, i * (n * n + n + 1), -1.0))
            .collect(),
    )?;

    let x0: Vec<f64> = (0..n)
        .map(|i| {
            let y = i as f64 * dy;
            let inside = if params.inclusive_plateau {
                y < params.y_star
            } else {
                0.0 < y && y < params.y_star
            };
            if inside {
                params.u_in
            } else {
                0.0
            }
        })
        .collect();

    PolynomialODE::from_terms(n, 3, vec![(1, f1), (2, f2), (3, f3)], x0)
}

/// Largest eigenvalue of the linear part for a parameter set. The coupling
/// matrix is symmetric tridiagonal, so this is a small dense symmetric
/// eigensolve. The reflecting boundaries always admit the constant mode,
/// which feels no diffusion, so the result is exactly the linear reaction
/// coefficient: negative under the expanded sign convention, `+a` otherwise.
pub fn linear_decay_from_reaction(params: &ReactionDiffusionParams) -> Result<f64> {
    let ode = build_reaction_diffusion(params)?;
    max_real_eigenvalue(ode.f(1))
}

/// A small synthetic degree-3 system with dense random coefficients: a
/// strongly decaying linear part (`-1.2` on the diagonal plus noise) and
/// mild nonlinear terms, started close to the origin. Deterministic in the
/// seed. Useful wherever a well-behaved nonlinear instance is needed
/// without hand-tuning, such as comparing the two lifting routes.
pub fn sample_stable_cubic(seed: u64) -> PolynomialODE {
    fn dense_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f64) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                triplets.push((r, c, amp * rng.gen_range(-1.0..1.0)));
            }
        }
        SparseMatrix::from_triplets(rows, cols, triplets).unwrap()
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = dense_block(&mut rng, 2, 1, 0.02);
    let shift = SparseMatrix::from_triplets(2, 2, vec![(0, 0, -1.2), (1, 1, -1.2)]).unwrap();
    let f1 = dense_block(&mut rng, 2, 2, 0.2).add(&shift).unwrap();
    let f2 = dense_block(&mut rng, 2, 4, 0.2);
    let f3 = dense_block(&mut rng, 2, 8, 0.2);
    let x0 = vec![
        0.05 * rng.gen_range(-1.0..1.0),
        0.05 * rng.gen_range(-1.0..1.0),
    ];
    PolynomialODE::from_terms(2, 3, vec![(0, f0), (1, f1), (2, f2), (3, f3)], x0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{compute_rk0, decay_ratios};
    use crate::sparse::norm2;
    use approx::assert_relative_eq;

    #[test]
    fn unit_coupling_grid_layout() {
        // dy = 1/9 and kappa = dy² make beta exactly 1
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params).unwrap();
        assert_eq!(ode.n(), 10);
        assert_eq!(ode.k(), 3);
        assert_eq!(ode.f(0).nnz(), 0);
        // expanded sign: interior -a-2, ends -a-1
        assert_eq!(ode.f(1).get(0, 0), -1.25);
        assert_eq!(ode.f(1).get(5, 5), -2.25);
        assert_eq!(ode.f(1).get(9, 9), -1.25);
        assert_eq!(ode.f(1).get(4, 5), 1.0);
        assert_eq!(ode.f(1).get(5, 4), 1.0);

        // default sign convention keeps +a
        let mut verbatim = params.clone();
        verbatim.expanded_reaction = false;
        let ode_v = build_reaction_diffusion(&verbatim).unwrap();
        assert_eq!(ode_v.f(1).get(0, 0), -0.75);
        assert_eq!(ode_v.f(1).get(5, 5), -1.75);
    }

    #[test]
    fn pointwise_nonlinear_terms() {
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params).unwrap();
        let n = 10;
        for i in 0..n {
            let row2: Vec<_> = ode
                .f(2)
                .entries()
                .iter()
                .filter(|&&(r, _, _)| r == i)
                .collect();
            assert_eq!(row2.len(), 1);
            assert_eq!(*row2[0], (i, i * n + i, 1.25));
            let row3: Vec<_> = ode
                .f(3)
                .entries()
                .iter()
                .filter(|&&(r, _, _)| r == i)
                .collect();
            assert_eq!(row3.len(), 1);
            assert_eq!(*row3[0], (i, i * (n * n + n + 1), -1.0));
        }
        assert_eq!(ode.f(1).sparsity(), 3);
        assert_eq!(ode.f(2).sparsity(), 1);
        assert_eq!(ode.f(3).sparsity(), 1);
    }

    #[test]
    fn coupling_matrix_is_symmetric() {
        let ode = build_reaction_diffusion(&ReactionDiffusionParams::fig1()).unwrap();
        let f1 = ode.f(1);
        for &(r, c, v) in f1.entries() {
            assert_eq!(f1.get(c, r), v, "asymmetry at ({r},{c})");
        }
    }

    #[test]
    fn plateau_profiles() {
        // grid y_i = i/9; plateau edge 0.3 admits y = 1/9 and 2/9
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params).unwrap();
        let expected: Vec<f64> = (0..10)
            .map(|i| if i <= 2 { 0.03 } else { 0.0 })
            .collect();
        assert_eq!(ode.x0(), &expected[..]);

        // the default convention leaves the boundary point empty
        let mut strict = params;
        strict.inclusive_plateau = false;
        let ode_s = build_reaction_diffusion(&strict).unwrap();
        assert_eq!(ode_s.x0()[0], 0.0);
        assert_eq!(ode_s.x0()[1], 0.03);
        assert_eq!(ode_s.x0()[2], 0.03);
        assert_eq!(ode_s.x0()[3], 0.0);
    }

    #[test]
    fn constant_data_sees_only_the_reaction() {
        // on constant data the coupling cancels row by row, leaving the
        // expanded reaction c(1-c)(c-a) at every point
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params).unwrap();
        let c = 0.4;
        let rhs = ode.evaluate_rhs(&vec![c; 10]).unwrap();
        let reaction = c * (1.0 - c) * (c - params.a);
        for (i, &v) in rhs.iter().enumerate() {
            assert_relative_eq!(v, reaction, max_relative = 1e-12);
            let _ = i;
        }
    }

    #[test]
    fn constant_data_stays_constant() {
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params)
            .unwrap()
            .with_x0(vec![0.3; 10])
            .unwrap();
        let traj = ode.direct_integrate(0.5, 500).unwrap();
        for state in &traj.states {
            let first = state[0];
            for &v in state {
                assert!((v - first).abs() <= 1e-12, "spread {first} vs {v}");
            }
        }
    }

    #[test]
    fn leading_eigenvalue_is_the_reaction_coefficient() {
        // the constant mode feels no diffusion, so the leader is ±a exactly
        let params = ReactionDiffusionParams::fig1();
        assert_relative_eq!(
            linear_decay_from_reaction(&params).unwrap(),
            -0.25,
            max_relative = 1e-12
        );

        let mut verbatim = params.clone();
        verbatim.expanded_reaction = false;
        let lead = linear_decay_from_reaction(&verbatim).unwrap();
        assert_relative_eq!(lead, 0.25, max_relative = 1e-12);
        assert!(lead > 0.0, "legacy sign convention does not decay");

        // two-point system by hand: eigenvalues a_lin and a_lin - 2 beta
        let two = ReactionDiffusionParams {
            n: 2,
            ..ReactionDiffusionParams::fig1()
        };
        let lead2 = linear_decay_from_reaction(&two).unwrap();
        assert_relative_eq!(lead2, -0.25, max_relative = 1e-12);
    }

    #[test]
    fn low_plateau_dies_out() {
        // u_in below the threshold decays toward extinction, so the decay
        // ratios exceed one and the norm shrinks monotonically
        let params = ReactionDiffusionParams::fig1();
        let ode = build_reaction_diffusion(&params).unwrap();
        let traj = ode.direct_integrate(params.t_final, 1000).unwrap();
        let mut last = f64::INFINITY;
        for state in &traj.states {
            let n = norm2(state);
            assert!(n <= last + 1e-15, "norm grew: {last} -> {n}");
            last = n;
        }
        let (q, q_k) = decay_ratios(ode.x0(), traj.final_state(), 3).unwrap();
        assert!(q > 1.0);
        assert!(q_k > 1.0);
    }

    #[test]
    fn preset_ratio_values() {
        let fig1 = build_reaction_diffusion(&ReactionDiffusionParams::fig1()).unwrap();
        assert_relative_eq!(compute_rk0(&fig1).unwrap(), 0.9365693, max_relative = 1e-6);

        let fig2 = build_reaction_diffusion(&ReactionDiffusionParams::fig2()).unwrap();
        assert_relative_eq!(compute_rk0(&fig2).unwrap(), 20.621587, max_relative = 1e-6);

        let alt = build_reaction_diffusion(&ReactionDiffusionParams::fig2_alt()).unwrap();
        assert_relative_eq!(compute_rk0(&alt).unwrap(), 10.540379, max_relative = 1e-6);
    }

    #[test]
    fn parameter_validation() {
        assert!(ReactionDiffusionParams::new(1, 1.0, 0.25, 0.01, 0.03, 0.3, 1.0).is_err());
        assert!(ReactionDiffusionParams::new(10, 1.0, 0.75, 0.01, 0.03, 0.3, 1.0).is_err());
        assert!(ReactionDiffusionParams::new(10, 1.0, 0.25, 0.0, 0.03, 0.3, 1.0).is_err());
        assert!(ReactionDiffusionParams::new(10, 1.0, 0.25, 0.01, 0.03, 1.5, 1.0).is_err());
        assert!(ReactionDiffusionParams::new(10, 1.0, 0.25, 0.01, 0.03, 0.3, 0.0).is_err());
        assert!(ReactionDiffusionParams::new(10, 1.0, 0.25, 0.01, 0.03, 0.3, 1.0).is_ok());
    }

    #[test]
    fn presets_resolve_by_name() {
        assert!(ReactionDiffusionParams::preset("fig1").is_some());
        assert_eq!(ReactionDiffusionParams::preset("fig2").unwrap().u_in, 0.5);
        assert_eq!(
            ReactionDiffusionParams::preset("fig2-alt").unwrap().u_in,
            0.3
        );
        assert!(ReactionDiffusionParams::preset("fig3").is_none());
    }
}
