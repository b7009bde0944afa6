//! Dense symmetric kernels (blocked Cholesky, triangular solves) and a
//! preconditioned conjugate gradient, shared by the potential-theory and
//! sampling backends. No external BLAS; the blocked update is written to
//! autovectorize and can use rayon in setup paths.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("conjugate gradient did not converge: residual {residual:.3e} after {iters} iterations")]
    CgStalled { residual: f64, iters: usize },
}

const CHOL_BLOCK: usize = 64;

/// In-place lower Cholesky of a row-major symmetric n x n matrix (upper
/// triangle is ignored and overwritten with zeros).
pub fn cholesky_in_place(a: &mut [f64], n: usize, parallel: bool) -> Result<(), LinalgError> {
    assert_eq!(a.len(), n * n);
    let mut panel = vec![0.0f64; 0];
    let mut k0 = 0usize;
    while k0 < n {
        let k1 = (k0 + CHOL_BLOCK).min(n);
        let bw = k1 - k0;
        // Unblocked factorization of the diagonal block.
        for j in k0..k1 {
            let mut d = a[j * n + j];
            for k in k0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite(j));
            }
            let dj = d.sqrt();
            a[j * n + j] = dj;
            let inv = 1.0 / dj;
            for i in (j + 1)..k1 {
                let mut s = a[i * n + j];
                for k in k0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s * inv;
            }
        }
        // Panel solve: rows below the block, columns k0..k1.
        for i in k1..n {
            for j in k0..k1 {
                let mut s = a[i * n + j];
                for k in k0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / a[j * n + j];
            }
        }
        // Copy panel for a borrow-free trailing update.
        if k1 < n {
            panel.clear();
            panel.resize((n - k1) * bw, 0.0);
            for i in k1..n {
                panel[(i - k1) * bw..(i - k1 + 1) * bw]
                    .copy_from_slice(&a[i * n + k0..i * n + k1]);
            }
            let trailing = &mut a[k1 * n..];
            let update_row = |(ri, row): (usize, &mut [f64])| {
                let i = ri;
                let pi = &panel[i * bw..(i + 1) * bw];
                for j in 0..=i {
                    let pj = &panel[j * bw..(j + 1) * bw];
                    let mut s = 0.0;
                    for k in 0..bw {
                        s += pi[k] * pj[k];
                    }
                    row[k1 + j] -= s;
                }
            };
            if parallel && n - k1 > 256 {
                trailing
                    .par_chunks_mut(n)
                    .take(n - k1)
                    .enumerate()
                    .for_each(update_row);
            } else {
                trailing
                    .chunks_mut(n)
                    .take(n - k1)
                    .enumerate()
                    .for_each(update_row);
            }
        }
        k0 = k1;
    }
    // Zero strict upper triangle for cleanliness.
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves L x = b in place.
pub fn solve_lower(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        let row = &l[i * n..i * n + i];
        for (k, &lik) in row.iter().enumerate() {
            s -= lik * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Solves L^T x = b in place.
pub fn solve_lower_transpose(l: &[f64], n: usize, x: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// y = L z for a lower-triangular L (covariance-side sampling).
pub fn lower_matvec(l: &[f64], n: usize, z: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        let mut s = 0.0;
        for (k, &lik) in row.iter().enumerate() {
            s += lik * z[k];
        }
        y[i] = s;
    }
}

/// Dense symmetric matvec y = A x (full storage).
pub fn sym_matvec(a: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut s = 0.0;
        for k in 0..n {
            s += row[k] * x[k];
        }
        y[i] = s;
    }
}

/// Preconditioned conjugate gradient with closures for A and M^{-1}.
/// Terminates on relative residual (euclidean) <= tol.
pub fn pcg<A, M>(
    apply_a: A,
    apply_minv: M,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize, LinalgError>
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    apply_a(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    apply_minv(&r, &mut z);
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(it);
        }
        apply_a(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        if !alpha.is_finite() {
            return Err(LinalgError::CgStalled { residual: rnorm / bnorm, iters: it });
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        apply_minv(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = dot(&r, &r).sqrt();
    if rnorm <= tol * bnorm {
        Ok(max_iter)
    } else {
        Err(LinalgError::CgStalled { residual: rnorm / bnorm, iters: max_iter })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
