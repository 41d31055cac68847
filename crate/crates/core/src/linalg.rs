//! Dense linear algebra helpers on top of `faer`.
//!
//! Vectors are plain `Vec<f64>`/`&[f64]`; matrices are `faer::Mat<f64>`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatMut, MatRef, Side};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense matrix-vector product `a * x`.
pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let xm = MatRef::from_column_major_slice(x, x.len(), 1);
    let y = a * xm;
    (0..a.nrows()).map(|i| y[(i, 0)]).collect()
}

/// Row-major flat storage to a `faer` matrix.
pub fn mat_from_row_major(data: &[f64], nrows: usize, ncols: usize) -> Mat<f64> {
    assert_eq!(data.len(), nrows * ncols);
    Mat::from_fn(nrows, ncols, |i, j| data[i * ncols + j])
}

/// LU factorization with partial pivoting and a pivot-ratio singularity test.
pub struct DenseLu {
    lu: PartialPivLu<f64>,
    n: usize,
    pivot_ratio: f64,
}

impl DenseLu {
    pub fn factor(a: MatRef<'_, f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Shape(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..n {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let pivot_ratio = if n == 0 {
            1.0
        } else if hi > 0.0 && hi.is_finite() && lo.is_finite() {
            lo / hi
        } else {
            0.0
        };
        Ok(DenseLu { lu, n, pivot_ratio })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `min |u_ii| / max |u_ii|`, a cheap lower bound proxy for the reciprocal condition.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn is_singular(&self) -> bool {
        !(self.pivot_ratio > self.n.max(1) as f64 * f64::EPSILON)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu
            .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu
            .solve_transpose_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }
}

/// Largest eigenvalue and unit eigenvector of a symmetric tridiagonal matrix.
fn top_eigenpair_tridiagonal(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
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
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .expect("tridiagonal eigendecomposition");
    let s = evd.S();
    let u = evd.U();
    let top = k - 1;
    (s[top], (0..k).map(|i| u[(i, top)]).collect())
}

/// Smallest eigenvalue of `AᵀA`, given an LU factorization of the square matrix `A`.
///
/// Runs Lanczos with full reorthogonalization on `(AᵀA)⁻¹ = A⁻¹A⁻ᵀ` and returns the
/// reciprocal of its dominant Ritz value. Returns `None` when the iteration budget is
/// exhausted before the Ritz residual drops below `1e-10` relative.
pub fn smallest_eigenvalue_normal(lu: &DenseLu) -> Option<f64> {
    let n = lu.dim();
    if n == 0 {
        return None;
    }
    if lu.is_singular() {
        return Some(0.0);
    }
    let max_iter = n.min(300);

    // Fixed start vector so repeated calls are bit-reproducible.
    let mut q: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract())
        .collect();
    let qn = norm2(&q);
    q.iter_mut().for_each(|v| *v /= qn);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alpha = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);

    for _ in 0..max_iter {
        let mut w = lu.solve(&lu.solve_transpose(&q));
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm2(&w);
        let (theta, s) = top_eigenpair_tridiagonal(&alpha, &beta);
        let residual = b * s.last().copied().unwrap_or(0.0).abs();
        if !(theta > 0.0) || !theta.is_finite() {
            return None;
        }
        if residual <= 1e-10 * theta || b <= f64::EPSILON * theta || basis.len() == n {
            return Some(1.0 / theta);
        }
        beta.push(b);
        q = w.iter().map(|v| v / b).collect();
    }
    None
}

/// Solve a small symmetric positive definite system by Cholesky.
///
/// Returns `None` when the factorization breaks down or the squared diagonal spread of
/// the factor exceeds `1/eps` (condition beyond double precision).
pub fn cholesky_solve(a: MatRef<'_, f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    let llt = a.llt(Side::Lower).ok()?;
    let l = llt.L();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..n {
        lo = lo.min(l[(i, i)].abs());
        hi = hi.max(l[(i, i)].abs());
    }
    if n > 0 && !((lo / hi).powi(2) > f64::EPSILON) {
        return None;
    }
    let mut x = b.to_vec();
    llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// 2-norm condition number from the singular values (small matrices only).
pub fn condition_number(a: MatRef<'_, f64>) -> f64 {
    match a.singular_values() {
        Ok(s) if !s.is_empty() => {
            let smax = s[0];
            let smin = s[s.len() - 1];
            if smin > 0.0 {
                smax / smin
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}
