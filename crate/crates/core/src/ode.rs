//! Polynomial ODE systems and a dense reference integrator.
//!
//! A system is `dx/dt = F_0 + F_1 x + F_2 x^[2] + ... + F_k x^[k]` with
//! `x in R^n` and `x^[j]` the `j`-th Kronecker power, so `F_j` has shape
//! `n x n^j`. `F_0` is an `n x 1` column against the length-one vector
//! `x^[0] = (1)`.
//!
//! # File format
//!
//! [`load_ode_spec`] reads a JSON document of the form
//!
//! ```json
//! {
//!   "n": 2,
//!   "k": 2,
//!   "F": [
//!     {"degree": 1, "rows": 2, "cols": 2, "triplets": [[0, 0, -1.0], [1, 1, -2.0]]},
//!     {"degree": 2, "rows": 2, "cols": 4, "triplets": [[0, 3, 0.5]]}
//!   ],
//!   "x0": [1.0, 0.5]
//! }
//! ```
//!
//! Degrees that do not appear are zero. Each block's `rows`/`cols` must
//! match the shape implied by `n` and its degree.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::checked_dim_pow;
use crate::error::{CarlemanError, Result};
use crate::sparse::{kron_vec, norm2, SparseMatrix};

/// Autonomous ODE with polynomial right-hand side.
#[derive(Debug, Clone)]
pub struct PolynomialODE {
    n: usize,
    k: usize,
    /// `f[j]` is the coefficient of `x^[j]`, shape `n x n^j`, for `j = 0..=k`.
    f: Vec<SparseMatrix>,
    x0: Vec<f64>,
}

impl PolynomialODE {
    /// Builds a system from the full list of coefficients `f[0..=k]`.
    pub fn new(n: usize, k: usize, f: Vec<SparseMatrix>, x0: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(CarlemanError::InvalidInput(
                "state dimension n must be at least 1".into(),
            ));
        }
        if k == 0 {
            return Err(CarlemanError::InvalidInput(
                "polynomial degree k must be at least 1".into(),
            ));
        }
        if f.len() != k + 1 {
            return Err(CarlemanError::InvalidInput(format!(
                "expected {} coefficient matrices for degree {k}, got {}",
                k + 1,
                f.len()
            )));
        }
        for (j, m) in f.iter().enumerate() {
            let cols = checked_dim_pow(n, j as u32)?;
            if m.rows() != n || m.cols() != cols {
                return Err(CarlemanError::DimensionMismatch(format!(
                    "coefficient of degree {j} must be {n}x{cols}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if x0.len() != n {
            return Err(CarlemanError::DimensionMismatch(format!(
                "initial state has length {}, expected {n}",
                x0.len()
            )));
        }
        if let Some(v) = x0.iter().find(|v| !v.is_finite()) {
            return Err(CarlemanError::NonFinite(format!(
                "initial state contains {v}"
            )));
        }
        Ok(PolynomialODE { n, k, f, x0 })
    }

    /// Builds a system from `(degree, matrix)` pairs; degrees left out are zero.
    pub fn from_terms(
        n: usize,
        k: usize,
        terms: Vec<(usize, SparseMatrix)>,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let mut f: Vec<Option<SparseMatrix>> = vec![None; k + 1];
        for (degree, m) in terms {
            if degree > k {
                return Err(CarlemanError::InvalidInput(format!(
                    "term of degree {degree} in a system of degree {k}"
                )));
            }
            if f[degree].is_some() {
                return Err(CarlemanError::InvalidInput(format!(
                    "two coefficient matrices given for degree {degree}"
                )));
            }
            f[degree] = Some(m);
        }
        let f = f
            .into_iter()
            .enumerate()
            .map(|(j, m)| match m {
                Some(m) => Ok(m),
                None => Ok(SparseMatrix::zeros(n, checked_dim_pow(n, j as u32)?)),
            })
            .collect::<Result<Vec<_>>>()?;
        PolynomialODE::new(n, k, f, x0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Coefficient matrix of `x^[j]`.
    pub fn f(&self, j: usize) -> &SparseMatrix {
        &self.f[j]
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Same system from a different initial state.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self> {
        PolynomialODE::new(self.n, self.k, self.f.clone(), x0)
    }

    /// Right-hand side at state `x`, accumulating Kronecker powers of `x`
    /// incrementally.
    pub fn evaluate_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(CarlemanError::DimensionMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        let mut rhs = self.f[0].matvec(&[1.0])?;
        let mut power = vec![1.0];
        for j in 1..=self.k {
            power = kron_vec(x, &power)?;
            if self.f[j].nnz() == 0 {
                continue;
            }
            let term = self.f[j].matvec(&power)?;
            for (r, t) in rhs.iter_mut().zip(&term) {
                *r += t;
            }
        }
        Ok(rhs)
    }

    /// Integrates the system with classic fourth-order Runge-Kutta at fixed
    /// step `t_final / steps`, recording every step including `t = 0`. This
    /// is the reference trajectory the lifted solvers are judged against.
    pub fn direct_integrate(&self, t_final: f64, steps: usize) -> Result<Trajectory> {
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
        let mut x = self.x0.clone();
        times.push(0.0);
        states.push(x.clone());
        for step in 0..steps {
            let k1 = self.evaluate_rhs(&x)?;
            let k2 = self.evaluate_rhs(&axpy(&x, h / 2.0, &k1))?;
            let k3 = self.evaluate_rhs(&axpy(&x, h / 2.0, &k2))?;
            let k4 = self.evaluate_rhs(&axpy(&x, h, &k3))?;
            for i in 0..self.n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t = (step + 1) as f64 * h;
            if !norm2(&x).is_finite() {
                return Err(CarlemanError::NonFinite(format!(
                    "state diverged at t = {t:.6e} (step {})",
                    step + 1
                )));
            }
            times.push(t);
            states.push(x.clone());
        }
        Ok(Trajectory { times, states })
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// A time grid and the state at each grid point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

#[derive(Serialize, Deserialize)]
struct OdeSpecFile {
    n: usize,
    k: usize,
    #[serde(rename = "F")]
    f: Vec<MatrixBlock>,
    x0: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixBlock {
    degree: usize,
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

/// Reads a system from the JSON layout described in the module docs.
pub fn load_ode_spec(path: impl AsRef<Path>) -> Result<PolynomialODE> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let spec: OdeSpecFile = serde_json::from_str(&text)?;
    let mut terms = Vec::with_capacity(spec.f.len());
    for block in spec.f {
        let expected_cols = checked_dim_pow(spec.n, block.degree.min(u32::MAX as usize) as u32)?;
        if block.rows != spec.n || block.cols != expected_cols {
            return Err(CarlemanError::DimensionMismatch(format!(
                "degree {} block declared as {}x{}, expected {}x{}",
                block.degree, block.rows, block.cols, spec.n, expected_cols
            )));
        }
        let m = SparseMatrix::from_triplets(block.rows, block.cols, block.triplets)?;
        terms.push((block.degree, m));
    }
    PolynomialODE::from_terms(spec.n, spec.k, terms, spec.x0)
}

/// Writes a system in the same JSON layout. Degrees with no entries are
/// omitted; [`load_ode_spec`] treats them as zero.
pub fn save_ode_spec(ode: &PolynomialODE, path: impl AsRef<Path>) -> Result<()> {
    let blocks = (0..=ode.k())
        .filter(|&j| ode.f(j).nnz() > 0)
        .map(|j| MatrixBlock {
            degree: j,
            rows: ode.f(j).rows(),
            cols: ode.f(j).cols(),
            triplets: ode.f(j).entries().to_vec(),
        })
        .collect();
    let spec = OdeSpecFile {
        n: ode.n(),
        k: ode.k(),
        f: blocks,
        x0: ode.x0().to_vec(),
    };
    let text = serde_json::to_string_pretty(&spec)?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

/// Writes `t,x1,...,xn` rows with enough digits to round-trip an f64.
pub fn write_trajectory_csv(traj: &Trajectory, mut out: impl Write) -> Result<()> {
    let n = traj.states.first().map_or(0, |s| s.len());
    write!(out, "t")?;
    for i in 1..=n {
        write!(out, ",x{i}")?;
    }
    writeln!(out)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write!(out, "{t:.16e}")?;
        for v in state {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
