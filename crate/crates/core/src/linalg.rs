//! Leading eigenpairs of symmetric positive semi-definite matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Above this order the Lanczos solver is used instead of a full
/// decomposition.
pub const DENSE_MAX_ORDER: usize = 600;

const LANCZOS_SEED: u64 = 0x5EED_1A2C;
const RESIDUAL_TOL: f64 = 1e-11;

/// Top eigenvalues in nonincreasing order with matching unit eigenvectors
/// as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn top_eigen(matrix: &DMatrix<f64>, count: usize) -> TopEigen {
    if matrix.nrows() <= DENSE_MAX_ORDER {
        top_eigen_dense(matrix, count)
    } else {
        top_eigen_lanczos(matrix, count)
    }
}

/// Full symmetric decomposition, truncated to the leading `count` pairs.
pub fn top_eigen_dense(matrix: &DMatrix<f64>, count: usize) -> TopEigen {
    let n = matrix.nrows();
    let count = count.min(n);
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = DMatrix::zeros(n, count);
    let mut values = Vec::with_capacity(count);
    for (c, &k) in order.iter().take(count).enumerate() {
        values.push(eig.eigenvalues[k]);
        vectors.set_column(c, &eig.eigenvectors.column(k));
    }
    TopEigen { values, vectors }
}

/// Lanczos iteration with full reorthogonalisation. Invariant subspaces
/// (breakdowns) are handled by restarting from a fresh vector orthogonal to
/// the current basis, so rank-deficient inputs still yield an orthonormal
/// set of `count` vectors.
pub fn top_eigen_lanczos(matrix: &DMatrix<f64>, count: usize) -> TopEigen {
    let n = matrix.nrows();
    let count = count.min(n);
    if count == 0 {
        return TopEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let scale = matrix.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let breakdown = 1e-13 * scale.max(f64::MIN_POSITIVE);

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut q = fresh_direction(&mut rng, n, &basis).expect("n > 0");
    let mut next_check = (count + 20).min(n);
    loop {
        let mut w = matrix * &q;
        let a = q.dot(&w);
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let nb = w.norm();
        let steps = basis.len();

        if steps == n || steps >= next_check {
            let (vals, vecs) = tridiagonal_eigen(&alpha, &beta);
            let top: Vec<usize> = (0..count).collect();
            let converged = nb <= breakdown
                || top.iter().all(|&i| {
                    let resid = nb * vecs[(steps - 1, i)].abs();
                    resid <= RESIDUAL_TOL * vals[0].abs().max(breakdown)
                });
            if converged || steps == n {
                return ritz(&basis, &vals, &vecs, count);
            }
            next_check = (steps + 20).min(n);
        }

        if nb > breakdown {
            beta.push(nb);
            q = w / nb;
        } else {
            beta.push(0.0);
            match fresh_direction(&mut rng, n, &basis) {
                Some(v) => q = v,
                None => {
                    let (vals, vecs) = tridiagonal_eigen(&alpha, &beta[..steps - 1]);
                    return ritz(&basis, &vals, &vecs, count);
                }
            }
        }
    }
}

fn fresh_direction(rng: &mut ChaCha8Rng, n: usize, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        for _ in 0..2 {
            for b in basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            return Some(v / nv);
        }
    }
    None
}

/// Eigen-decomposition of the Lanczos tridiagonal, sorted nonincreasing.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let top = top_eigen_dense(&t, k);
    (top.values, top.vectors)
}

fn ritz(basis: &[DVector<f64>], vals: &[f64], vecs: &DMatrix<f64>, count: usize) -> TopEigen {
    let n = basis[0].len();
    let q = DMatrix::from_columns(basis);
    let s = vecs.view((0, 0), (basis.len(), count));
    let vectors: DMatrix<f64> = q * s;
    debug_assert_eq!(vectors.nrows(), n);
    TopEigen {
        values: vals[..count].to_vec(),
        vectors,
    }
}
