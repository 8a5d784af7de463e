//! Search-space transformations shared by the benchmark functions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// `i / (D - 1)`, the exponent ramp used by the conditioning transforms.
#[inline]
pub fn ramp(i: usize, dim: usize) -> f64 {
    if dim <= 1 { 0.0 } else { i as f64 / (dim - 1) as f64 }
}

/// Oscillation transform applied coordinate-wise.
pub fn t_osz(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let xh = v.abs().ln();
    let (c1, c2) = if v > 0.0 { (10.0, 7.9) } else { (5.5, 3.1) };
    v.signum() * (xh + 0.049 * ((c1 * xh).sin() + (c2 * xh).sin())).exp()
}

pub fn t_osz_vec(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = t_osz(*x);
    }
}

/// Asymmetry transform with exponent `beta`.
pub fn t_asy(v: &mut [f64], beta: f64) {
    let d = v.len();
    for (i, x) in v.iter_mut().enumerate() {
        if *x > 0.0 {
            *x = x.powf(1.0 + beta * ramp(i, d) * x.sqrt());
        }
    }
}

/// Diagonal of the conditioning matrix with ratio `alpha`.
pub fn lambda(alpha: f64, dim: usize) -> Vec<f64> {
    (0..dim).map(|i| alpha.powf(0.5 * ramp(i, dim))).collect()
}

/// Boundary penalty `Σ max(0, |x_i| - 5)²`.
pub fn f_pen(x: &[f64]) -> f64 {
    x.iter().map(|v| (v.abs() - 5.0).max(0.0).powi(2)).sum()
}

/// Haar-distributed random rotation: QR of a Gaussian matrix with the sign
/// of `R`'s diagonal folded into `Q`.
pub fn random_rotation<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `m · v` for a square matrix and a slice.
pub fn mul(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let out: DVector<f64> = m * DVector::from_column_slice(v);
    out.data.into()
}

/// `diag(d) · m`.
pub fn scale_rows(d: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &s) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(s);
    }
    out
}
