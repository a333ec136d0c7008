//! Dense linear algebra helpers sized for GP work: blocked Cholesky and
//! blocked triangular solves that route the cubic work through nalgebra's
//! gemm, plus jitter-escalating factorization for noisy kernel matrices.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const BLOCK: usize = 64;

/// In-place lower Cholesky of a symmetric positive-definite matrix. Only the
/// lower triangle of `a` is read; on success the lower triangle holds L and
/// the strict upper triangle is zeroed.
pub fn cholesky_lower(a: &mut DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        // Factor the diagonal block unblocked.
        for j in k..k + b {
            let mut d = a[(j, j)];
            for p in k..j {
                d -= a[(j, p)] * a[(j, p)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::numerical(format!(
                    "cholesky failed at pivot {j}: diagonal {d}"
                )));
            }
            let d = d.sqrt();
            a[(j, j)] = d;
            for i in (j + 1)..(k + b) {
                let mut s = a[(i, j)];
                for p in k..j {
                    s -= a[(i, p)] * a[(j, p)];
                }
                a[(i, j)] = s / d;
            }
        }
        if k + b < n {
            // Panel solve: rows below the diagonal block against L_kk^T.
            for j in k..k + b {
                let d = a[(j, j)];
                for i in (k + b)..n {
                    let mut s = a[(i, j)];
                    for p in k..j {
                        s -= a[(i, p)] * a[(j, p)];
                    }
                    a[(i, j)] = s / d;
                }
            }
            // Trailing update: A22 -= P P^T through gemm.
            let panel = a.view((k + b, k), (n - k - b, b)).into_owned();
            let mut trailing = a.view((k + b, k + b), (n - k - b, n - k - b)).into_owned();
            trailing.gemm(-1.0, &panel, &panel.transpose(), 1.0);
            a.view_mut((k + b, k + b), (n - k - b, n - k - b))
                .copy_from(&trailing);
        }
        k += b;
    }
    for j in 0..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Solve L X = B for lower-triangular L, overwriting B with X. Blocked so the
/// off-diagonal updates run through gemm.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let rhs = b.ncols();
    let mut k = 0;
    while k < n {
        let blk = BLOCK.min(n - k);
        for j in k..k + blk {
            let d = l[(j, j)];
            for c in 0..rhs {
                let mut s = b[(j, c)];
                for p in k..j {
                    s -= l[(j, p)] * b[(p, c)];
                }
                b[(j, c)] = s / d;
            }
        }
        if k + blk < n {
            let l_panel = l.view((k + blk, k), (n - k - blk, blk)).into_owned();
            let x_block = b.view((k, 0), (blk, rhs)).into_owned();
            let mut rest = b.view((k + blk, 0), (n - k - blk, rhs)).into_owned();
            rest.gemm(-1.0, &l_panel, &x_block, 1.0);
            b.view_mut((k + blk, 0), (n - k - blk, rhs)).copy_from(&rest);
        }
        k += blk;
    }
}

/// Solve L^T X = B, overwriting B with X.
pub fn solve_lower_transpose_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let rhs = b.ncols();
    let mut k = n;
    while k > 0 {
        let blk = BLOCK.min(k);
        let start = k - blk;
        for j in (start..k).rev() {
            let d = l[(j, j)];
            for c in 0..rhs {
                let mut s = b[(j, c)];
                for p in (j + 1)..k {
                    s -= l[(p, j)] * b[(p, c)];
                }
                b[(j, c)] = s / d;
            }
        }
        if start > 0 {
            // Remaining rows depend on the solved block: B_top -= L_panel^T X_blk.
            let l_panel = l.view((start, 0), (blk, start)).into_owned();
            let x_block = b.view((start, 0), (blk, rhs)).into_owned();
            let mut top = b.view((0, 0), (start, rhs)).into_owned();
            top.gemm(-1.0, &l_panel.transpose(), &x_block, 1.0);
            b.view_mut((0, 0), (start, rhs)).copy_from(&top);
        }
        k = start;
    }
}

pub fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_in_place(l, &mut m);
    DVector::from_column_slice(m.as_slice())
}

/// (K + noise I)^{-1} b given the lower Cholesky factor of (K + noise I).
pub fn cholesky_solve_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_in_place(l, &mut m);
    solve_lower_transpose_in_place(l, &mut m);
    DVector::from_column_slice(m.as_slice())
}

/// Full inverse from a lower Cholesky factor: (L L^T)^{-1}.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::identity(n, n);
    solve_lower_in_place(l, &mut inv);
    solve_lower_transpose_in_place(l, &mut inv);
    inv
}

/// Cholesky with escalating diagonal jitter from `base_jitter` up to
/// `max_jitter` (both relative to the mean diagonal). Returns the factor and
/// the absolute jitter that succeeded.
pub fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
    base_jitter: f64,
    max_jitter: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = matrix.nrows();
    let mean_diag = matrix.diagonal().iter().sum::<f64>() / n.max(1) as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };

    let mut attempt = matrix.clone();
    if cholesky_lower(&mut attempt).is_ok() {
        return Ok((attempt, 0.0));
    }
    let mut jitter = base_jitter;
    while jitter <= max_jitter {
        let mut attempt = matrix.clone();
        let abs = jitter * scale;
        for i in 0..n {
            attempt[(i, i)] += abs;
        }
        if cholesky_lower(&mut attempt).is_ok() {
            return Ok((attempt, abs));
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(format!(
        "cholesky failed at every jitter level up to {max_jitter}"
    )))
}
