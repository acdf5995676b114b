//! Cross-checks of the sparse kernels against dense linear algebra. Every
//! quantity the library computes iteratively or through sparse assembly is
//! recomputed here the expensive way, so a silent change to an offset
//! convention or an iteration shows up as a numeric mismatch rather than a
//! plausible-looking wrong answer.

use carleman_core::diagnostics::real_parts_dense;
use carleman_core::euler::{assemble_block, condition_estimate, solve_block};
use carleman_core::{
    assemble_truncated, max_real_eigenvalue, transfer_matrix, PolynomialODE, SparseMatrix,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fill: f64) -> SparseMatrix {
    let mut triplets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.gen::<f64>() < fill {
                triplets.push((r, c, rng.gen_range(-2.0..2.0)));
            }
        }
    }
    // keep at least one entry so norms have something to bite on
    if triplets.is_empty() {
        triplets.push((0, 0, rng.gen_range(0.5..1.5)));
    }
    SparseMatrix::from_triplets(rows, cols, triplets).unwrap()
}

fn sigma_max_dense(m: &SparseMatrix) -> f64 {
    m.to_dense().svd(false, false).singular_values[0]
}

#[test]
fn spectral_norm_matches_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0101);
    for trial in 0..40 {
        let rows = rng.gen_range(1..=12);
        let cols = rng.gen_range(1..=12);
        let m = random_sparse(&mut rng, rows, cols, 0.6);
        let fast = m.spectral_norm(1e-10).unwrap();
        let exact = sigma_max_dense(&m);
        assert!(
            (fast - exact).abs() <= 1e-6 * exact.max(1.0),
            "trial {trial} ({rows}x{cols}): power iteration {fast} vs svd {exact}"
        );
    }
}

#[test]
fn kron_matches_dense_kronecker() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0102);
    for _ in 0..20 {
        let (ra, ca) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let a = random_sparse(&mut rng, ra, ca, 0.7);
        let (rb, cb) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let b = random_sparse(&mut rng, rb, cb, 0.7);
        let sparse = a.kron(&b).unwrap().to_dense();
        let dense = a.to_dense().kronecker(&b.to_dense());
        assert_eq!(sparse.nrows(), dense.nrows());
        assert_eq!(sparse.ncols(), dense.ncols());
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                assert_eq!(sparse[(r, c)], dense[(r, c)], "mismatch at ({r}, {c})");
            }
        }
    }
}

/// The coupling block for degree j acting on level i is a sum of i
/// Kronecker products, the degree-j coefficient sliding across the slots
/// with identities around it. Rebuild it densely from that definition.
fn dense_transfer(f_j: &DMatrix<f64>, n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let rows = n.pow(i as u32);
    let cols = n.pow((i + j - 1) as u32);
    let mut out = DMatrix::zeros(rows, cols);
    for slot in 1..=i {
        let left = DMatrix::<f64>::identity(n.pow((slot - 1) as u32), n.pow((slot - 1) as u32));
        let right = DMatrix::<f64>::identity(n.pow((i - slot) as u32), n.pow((i - slot) as u32));
        out += left.kronecker(f_j).kronecker(&right);
    }
    out
}

#[test]
fn transfer_blocks_match_dense_kronecker_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0103);
    let n = 2;
    let k = 3;
    for _ in 0..5 {
        let terms: Vec<(usize, SparseMatrix)> = (1..=k)
            .map(|j| (j, random_sparse(&mut rng, n, n.pow(j as u32), 0.6)))
            .collect();
        let ode = PolynomialODE::from_terms(n, k, terms, vec![0.3, -0.1]).unwrap();
        for i in 1..=3 {
            for j in 1..=k {
                let sparse = transfer_matrix(&ode, i, j).unwrap().to_dense();
                let dense = dense_transfer(&ode.f(j).to_dense(), n, i, j);
                let diff = (&sparse - &dense).norm();
                assert!(
                    diff == 0.0,
                    "block (i={i}, j={j}) differs from the dense Kronecker sum by {diff}"
                );
            }
        }
    }
}

#[test]
fn leading_real_part_matches_dense_eigensolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0104);
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let m = random_sparse(&mut rng, n, n, 0.7);
        let fast = max_real_eigenvalue(&m).unwrap();
        let exact = real_parts_dense(&m.to_dense())[0];
        assert!(
            (fast - exact).abs() <= 1e-9 * exact.abs().max(1.0),
            "leading real part {fast} vs dense {exact}"
        );
    }
}

fn logistic() -> PolynomialODE {
    let f1 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, -1.0)]).unwrap();
    let f2 = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 0.4)]).unwrap();
    PolynomialODE::from_terms(1, 2, vec![(1, f1), (2, f2)], vec![0.5]).unwrap()
}

#[test]
fn condition_estimate_matches_dense_svd() {
    let sys = assemble_truncated(&logistic(), 3).unwrap();
    let bes = assemble_block(&sys, 0.5, 6, 3).unwrap();
    let l = bes.matrix().unwrap();
    let estimated = condition_estimate(&l).unwrap();

    let sv = l.to_dense().svd(false, false).singular_values;
    let exact = sv[0] / sv[sv.len() - 1];
    assert!(
        (estimated - exact).abs() <= 0.1 * exact,
        "condition estimate {estimated} vs dense {exact}"
    );
}

#[test]
fn block_solve_matches_dense_lu() {
    let sys = assemble_truncated(&logistic(), 4).unwrap();
    let m = 8;
    let p = 2;
    let bes = assemble_block(&sys, 0.5, m, p).unwrap();
    let sol = solve_block(&bes).unwrap();

    let l = bes.matrix().unwrap().to_dense();
    let rhs = nalgebra::DVector::from_vec(bes.rhs().unwrap());
    let z = l.lu().solve(&rhs).expect("dense LU solve");

    let nc = sys.dim();
    for j in 0..=(m + p) {
        // leading entry of each per-step block is the recovered state
        let want = z[j * nc];
        let got = sol.x[j][0];
        assert!(
            (want - got).abs() <= 1e-10 * want.abs().max(1.0),
            "step {j}: substitution {got} vs dense LU {want}"
        );
    }
    for (i, &v) in sol.z_final.iter().enumerate() {
        let want = z[(m + p) * nc + i];
        assert!(
            (want - v).abs() <= 1e-10 * want.abs().max(1.0),
            "final lifted entry {i}: {v} vs {want}"
        );
    }
}
