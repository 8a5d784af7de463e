//! Dense kernels used by the Gaussian-process code.
//!
//! The factorizations here are blocked so the bulk of the work goes through
//! `gemm` (which nalgebra hands to `matrixmultiply`); at the matrix sizes the
//! solvers reach (a few thousand rows for Thompson sampling) that is several
//! times faster than nalgebra's column-at-a-time `Cholesky`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const BLOCK: usize = 64;

/// First jitter tried after a failed factorization.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Unblocked lower Cholesky of the `n × n` block starting at `off`.
fn potrf_unblocked(a: &mut DMatrix<f64>, off: usize, n: usize) -> bool {
    for j in off..off + n {
        let mut d = a[(j, j)];
        for k in off..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..off + n {
            let mut s = a[(i, j)];
            for k in off..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    true
}

/// In-place lower Cholesky factorization. Only the lower triangle of `a` is
/// read; on success the strict upper triangle is zeroed. Returns `false` when
/// the matrix is not numerically positive definite.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky of a non-square matrix");
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        if !potrf_unblocked(a, k, b) {
            return false;
        }
        let rest = n - k - b;
        if rest > 0 {
            // panel: A21 <- A21 * L11^{-T}
            for j in k..k + b {
                let djj = a[(j, j)];
                for l in k..j {
                    let ljl = a[(j, l)];
                    if ljl != 0.0 {
                        for i in k + b..n {
                            let v = a[(i, l)];
                            a[(i, j)] -= v * ljl;
                        }
                    }
                }
                for i in k + b..n {
                    a[(i, j)] /= djj;
                }
            }
            let panel = a.view((k + b, k), (rest, b)).into_owned();
            let panel_t = panel.transpose();
            // trailing update, lower block columns only
            let mut c = 0;
            while c < rest {
                let w = BLOCK.min(rest - c);
                let rows = rest - c;
                let lhs = panel.view((c, 0), (rows, b));
                let rhs = panel_t.view((0, c), (b, w));
                let mut target = a.view_mut((k + b + c, k + b + c), (rows, w));
                target.gemm(-1.0, &lhs, &rhs, 1.0);
                c += w;
            }
        }
        k += b;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    true
}

/// Cholesky factor of `a`, adding diagonal jitter on failure: first
/// `1e-10`, then ten times more per retry up to `1e-4`. Returns the factor
/// and the jitter that was needed (0 when none).
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let mut l = a.clone();
    if cholesky_in_place(&mut l) {
        return Ok((l, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        l.copy_from(a);
        for i in 0..a.nrows() {
            l[(i, i)] += jitter;
        }
        if cholesky_in_place(&mut l) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "matrix of size {} not positive definite with jitter up to {JITTER_MAX:e}",
        a.nrows()
    )))
}

/// Inverse of the lower-triangular diagonal block of `l` at `off`.
fn invert_diag_block(l: &DMatrix<f64>, off: usize, w: usize) -> DMatrix<f64> {
    let mut inv = DMatrix::<f64>::zeros(w, w);
    for c in 0..w {
        inv[(c, c)] = 1.0 / l[(off + c, off + c)];
        for i in c + 1..w {
            let mut s = 0.0;
            for j in c..i {
                s -= l[(off + i, off + j)] * inv[(j, c)];
            }
            inv[(i, c)] = s / l[(off + i, off + i)];
        }
    }
    inv
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let m = b.ncols();
    let mut scratch = DMatrix::<f64>::zeros(BLOCK.min(n), m);
    let mut k = 0;
    while k < n {
        let w = BLOCK.min(n - k);
        let (solved, mut cur) = b.rows_range_pair_mut(0..k, k..k + w);
        if k > 0 {
            cur.gemm(-1.0, &l.view((k, 0), (w, k)), &solved, 1.0);
        }
        let inv = invert_diag_block(l, k, w);
        let mut tmp = scratch.rows_mut(0, w);
        tmp.gemm(1.0, &inv, &cur, 0.0);
        cur.copy_from(&tmp);
        k += w;
    }
}

/// Solves `Lᵀ X = B` in place for lower-triangular `L`.
pub fn solve_lower_transpose_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let m = b.ncols();
    let lt = l.transpose();
    let mut scratch = DMatrix::<f64>::zeros(BLOCK.min(n), m);
    let mut end = n;
    while end > 0 {
        let w = BLOCK.min(end);
        let k = end - w;
        let (mut cur, solved) = b.rows_range_pair_mut(k..end, end..n);
        if end < n {
            cur.gemm(-1.0, &lt.view((k, end), (w, n - end)), &solved, 1.0);
        }
        // (L_kk)ᵀ⁻¹ = (L_kk⁻¹)ᵀ
        let inv_t = invert_diag_block(l, k, w).transpose();
        let mut tmp = scratch.rows_mut(0, w);
        tmp.gemm(1.0, &inv_t, &cur, 0.0);
        cur.copy_from(&tmp);
        end = k;
    }
}

pub fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    x
}

/// Solves `(L Lᵀ) x = b`.
pub fn cholesky_solve_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// `(L Lᵀ)⁻¹` from its lower Cholesky factor.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut linv = DMatrix::<f64>::identity(n, n);
    solve_lower_in_place(l, &mut linv);
    let mut out = DMatrix::<f64>::zeros(n, n);
    gemm_tn(&mut out, 1.0, &linv, &linv, 0.0);
    out
}

/// `c <- alpha · aᵀ b + beta · c`. nalgebra's `gemm_tr` computes this with
/// dot products; an explicit transpose lets `gemm` use the blocked kernel.
pub fn gemm_tn(c: &mut DMatrix<f64>, alpha: f64, a: &DMatrix<f64>, b: &DMatrix<f64>, beta: f64) {
    let at = a.transpose();
    c.gemm(alpha, &at, b, beta);
}

pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
