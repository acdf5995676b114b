//! Carleman linearization of polynomial ODE systems.
//!
//! The crate takes an autonomous ODE with polynomial right-hand side,
//! `dx/dt = F_0 + F_1 x + F_2 x^[2] + ... + F_k x^[k]` where `x^[i]` is the
//! `i`-th Kronecker power of the state, and turns it into a single truncated
//! linear system whose leading block tracks `x(t)`. Around that core sit the
//! pieces a study of the method needs:
//!
//! * [`sparse`]: coordinate-format matrices, Kronecker products, norms.
//! * [`ode`]: the polynomial system type, JSON loading, a Runge-Kutta
//!   reference integrator.
//! * [`quadratic`]: reduction of any degree-k system to an equivalent
//!   quadratic one on a stacked state.
//! * [`carleman`]: transfer matrices and the truncated lifted system.
//! * [`euler`]: forward Euler on the lifted system, both as a plain sweep
//!   and as one block lower-triangular solve over all time steps.
//! * [`diagnostics`]: the convergence ratios, rescaling, measurement
//!   probability and query-count expressions that decide whether a given
//!   problem is in the regime where the method pays off.
//! * [`models`]: ready-made test problems, including the discretized
//!   reaction-diffusion equation used throughout the examples.

pub mod capacity;
pub mod carleman;
pub mod diagnostics;
pub mod error;
pub mod euler;
pub mod matrixmarket;
pub mod models;
pub mod ode;
pub mod quadratic;
pub mod sparse;

pub use carleman::{
    assemble_truncated, carleman_dim, carleman_rhs, integrate_lifted, lift_state,
    transfer_matrix, transfer_matrix_recursive, CarlemanSystem,
};
pub use diagnostics::{
    complexity_expression, compute_r2, compute_rk, compute_rk0, decay_ratios,
    diagnostics_report, max_real_eigenvalue, p_measure_bound, rescale_gamma, DiagnosticsReport,
    RescaledSystem,
};
pub use error::{CarlemanError, Result};
pub use euler::{
    assemble_block, condition_estimate, default_step_count, euler_integrate, gmres_solve,
    measured_p, solution_error, solve_block, trajectory_error, write_error_csv,
    write_solution_csv, BlockEulerSystem, CarlemanSolution, ErrorReport, GmresOutcome,
};
pub use matrixmarket::{read_matrix_market, write_matrix_market};
pub use models::{
    build_reaction_diffusion, linear_decay_from_reaction, sample_stable_cubic,
    ReactionDiffusionParams,
};
pub use ode::{load_ode_spec, save_ode_spec, write_trajectory_csv, PolynomialODE, Trajectory};
pub use quadratic::{equivalence_check, quadratize, rhs_consistency_check, EquivalenceReport, QuadraticODE};
pub use sparse::{kron_power_vec, kron_vec, norm2, SparseMatrix};
