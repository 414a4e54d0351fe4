//! Small dense and Krylov solvers used throughout the crate.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Solve a dense system with partial-pivoting LU.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::Internal("singular matrix in dense solve".into()))
}

/// Outcome of a Krylov solve.
pub struct KrylovResult {
    pub solution: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Restarted GMRES on a matrix-free operator.
///
/// Solves `op(x) = b` to relative residual `tol`. The caller is expected to
/// hand over an operator that is already preconditioned; convergence is then
/// governed by how far the preconditioned operator sits from the identity.
pub fn gmres<F>(
    op: F,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<KrylovResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(KrylovResult {
            solution: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut total_iters = 0;
    let mut res_norm = f64::INFINITY;

    while total_iters < max_iters {
        let ax = op(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        res_norm = norm(&r);
        if res_norm <= tol * bnorm {
            return Ok(KrylovResult {
                solution: x,
                residual: res_norm / bnorm,
                iterations: total_iters,
            });
        }
        let m = restart.min(max_iters - total_iters);
        // Arnoldi with modified Gram-Schmidt.
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        scale(&mut r, 1.0 / res_norm);
        v.push(r);
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        // Givens rotations for the least-squares problem.
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = res_norm;
        let mut k_used = 0;

        for k in 0..m {
            total_iters += 1;
            let mut w = op(&v[k]);
            for j in 0..=k {
                let hjk = dot(&w, &v[j]);
                h[(j, k)] = hjk;
                axpy(&mut w, -hjk, &v[j]);
            }
            let wnorm = norm(&w);
            h[(k + 1, k)] = wnorm;
            // Apply previous rotations to the new column.
            for j in 0..k {
                let t = cs[j] * h[(j, k)] + sn[j] * h[(j + 1, k)];
                h[(j + 1, k)] = -sn[j] * h[(j, k)] + cs[j] * h[(j + 1, k)];
                h[(j, k)] = t;
            }
            let denom = (h[(k, k)] * h[(k, k)] + wnorm * wnorm).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[(k, k)] / denom;
            sn[k] = wnorm / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            res_norm = g[k + 1].abs();
            if wnorm > 0.0 {
                scale(&mut w, 1.0 / wnorm);
            }
            v.push(w);
            if res_norm <= tol * bnorm {
                break;
            }
        }
        // Back substitution for y in the k_used x k_used triangular system.
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &v[j]);
        }
        if res_norm <= tol * bnorm {
            return Ok(KrylovResult {
                solution: x,
                residual: res_norm / bnorm,
                iterations: total_iters,
            });
        }
    }
    Err(Error::LinearSolve {
        residual: res_norm / bnorm,
        iterations: total_iters,
    })
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scale(v: &mut [f64], s: f64) {
    for x in v {
        *x *= s;
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
