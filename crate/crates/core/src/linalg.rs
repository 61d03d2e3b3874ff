//! Sparse Krylov solvers on CSR matrices and a dense LU fallback.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sprs::{CsMat, TriMat};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;
/// Systems smaller than this fall back to a dense LU when the Krylov method stalls.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations, best relative residual {best_residual:e}")]
    NotConverged { iterations: usize, best_residual: f64 },
    #[error("dimension mismatch: matrix {rows}x{cols}, vector {len}")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("singular matrix")]
    Singular,
    #[error("non-finite right-hand side")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cg,
    BiCgStab,
    DenseLu,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cg => "pcg-jacobi",
            Method::BiCgStab => "bicgstab-jacobi",
            Method::DenseLu => "dense-lu",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: Method,
}

/// Builds a CSR matrix from `(row, col, value)` triplets; duplicates are summed.
pub fn csr_from_triplets(n: usize, m: usize, entries: &[(usize, usize, f64)]) -> CsMat<f64> {
    let mut t = TriMat::with_capacity((n, m), entries.len());
    for &(i, j, v) in entries {
        t.add_triplet(i, j, v);
    }
    t.to_csr()
}

pub fn matvec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let ip = a.indptr();
    let ip = ip.raw_storage();
    let idx = a.indices();
    let data = a.data();
    (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for k in ip[i]..ip[i + 1] {
                s += data[k] * x[idx[k]];
            }
            s
        })
        .collect()
}

pub fn diagonal(a: &CsMat<f64>) -> Vec<f64> {
    let mut d = vec![0.0; a.rows()];
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            if i == j {
                d[i] += v;
            }
        }
    }
    d
}

/// Largest `|a_ij - a_ji|` relative to the largest entry.
pub fn asymmetry(a: &CsMat<f64>) -> f64 {
    let t = a.transpose_view().to_csr();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            scale = scale.max(v.abs());
            let w = t.get(i, j).copied().unwrap_or(0.0);
            worst = worst.max((v - w).abs());
        }
    }
    if scale == 0.0 { 0.0 } else { worst / scale }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn residual_norm(a: &CsMat<f64>, x: &[f64], b: &[f64]) -> f64 {
    let ax = matvec(a, x);
    ax.iter().zip(b).map(|(p, q)| (q - p).powi(2)).sum::<f64>().sqrt()
}

fn jacobi(a: &CsMat<f64>) -> Vec<f64> {
    diagonal(a)
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Preconditioned conjugate gradients with the diagonal preconditioner.
pub fn pcg(a: &CsMat<f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<Solution, SolveError> {
    let n = b.len();
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            method: Method::Cg,
        });
    }
    let m = jacobi(a);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&m).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = (f64::INFINITY, x.clone());
    for it in 1..=max_iter {
        let ap = matvec(a, &p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bn;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            // confirm with the true residual
            let true_rel = residual_norm(a, &x, b) / bn;
            if true_rel <= tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    relative_residual: true_rel,
                    method: Method::Cg,
                });
            }
            r = b.iter().zip(matvec(a, &x)).map(|(b, ax)| b - ax).collect();
        }
        for i in 0..n {
            z[i] = r[i] * m[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        best_residual: residual_norm(a, &best.1, b) / bn,
    })
}

/// BiCGSTAB with right diagonal preconditioning, for nonsymmetric systems.
pub fn bicgstab(a: &CsMat<f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<Solution, SolveError> {
    let n = b.len();
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            method: Method::BiCgStab,
        });
    }
    let m = jacobi(a);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut best = f64::INFINITY;
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph: Vec<f64> = p.iter().zip(&m).map(|(p, m)| p * m).collect();
        v = matvec(a, &ph);
        let rv = dot(&r0, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        let sh: Vec<f64> = s.iter().zip(&m).map(|(s, m)| s * m).collect();
        let t = matvec(a, &sh);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bn;
        best = best.min(rel);
        if rel <= tol {
            let true_rel = residual_norm(a, &x, b) / bn;
            if true_rel <= tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    relative_residual: true_rel,
                    method: Method::BiCgStab,
                });
            }
            r = b.iter().zip(matvec(a, &x)).map(|(b, ax)| b - ax).collect();
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        best_residual: best,
    })
}

pub fn dense_lu(a: &CsMat<f64>, b: &[f64]) -> Result<Solution, SolveError> {
    let n = a.rows();
    let mut m = DMatrix::<f64>::zeros(n, a.cols());
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            m[(i, j)] += v;
        }
    }
    let lu = m.lu();
    let x = lu.solve(&DVector::from_column_slice(b)).ok_or(SolveError::Singular)?;
    let x: Vec<f64> = x.iter().copied().collect();
    let bn = norm(b);
    let rel = if bn == 0.0 { 0.0 } else { residual_norm(a, &x, b) / bn };
    Ok(Solution {
        x,
        iterations: 1,
        relative_residual: rel,
        method: Method::DenseLu,
    })
}

/// Krylov solve (CG when `symmetric`, BiCGSTAB otherwise), dense LU if that fails on a small system.
pub fn solve(a: &CsMat<f64>, b: &[f64], symmetric: bool, tol: f64) -> Result<Solution, SolveError> {
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(SolveError::Dimension {
            rows: a.rows(),
            cols: a.cols(),
            len: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let first = if symmetric {
        pcg(a, b, tol, MAX_ITERATIONS)
    } else {
        bicgstab(a, b, tol, MAX_ITERATIONS)
    };
    match first {
        Ok(s) => Ok(s),
        Err(e) if a.rows() < DENSE_LIMIT => {
            let s = dense_lu(a, b)?;
            if s.relative_residual <= tol { Ok(s) } else { Err(e) }
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsMat<f64> {
        let h = 1.0 / (n + 1) as f64;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0 / (h * h)));
            if i > 0 {
                e.push((i, i - 1, -1.0 / (h * h)));
            }
            if i + 1 < n {
                e.push((i, i + 1, -1.0 / (h * h)));
            }
        }
        csr_from_triplets(n, n, &e)
    }

    #[test]
    fn identity_returns_rhs() {
        let id = csr_from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let s = solve(&id, &[1.0, -2.0, 3.0], true, 1e-12).unwrap();
        assert_eq!(s.x, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn poisson_1d() {
        let n = 63;
        let a = laplace_1d(n);
        let s = pcg(&a, &vec![1.0; n], 1e-12, 10_000).unwrap();
        let h = 1.0 / 64.0;
        let err = (0..n)
            .map(|i| {
                let x = (i + 1) as f64 * h;
                (s.x[i] - x * (1.0 - x) / 2.0).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn bicgstab_nonsymmetric() {
        let n = 50;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 4.0));
            if i > 0 {
                e.push((i, i - 1, -1.5));
            }
            if i + 1 < n {
                e.push((i, i + 1, -0.5));
            }
        }
        let a = csr_from_triplets(n, n, &e);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let s = bicgstab(&a, &b, 1e-12, 1000).unwrap();
        let d = dense_lu(&a, &b).unwrap();
        for (p, q) in s.x.iter().zip(&d.x) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(asymmetry(&a) > 0.1);
        assert_eq!(asymmetry(&laplace_1d(5)), 0.0);
    }
}
