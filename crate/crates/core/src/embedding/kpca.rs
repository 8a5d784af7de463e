//! Weighted kernel PCA with an RBF kernel and a gradient-based pre-image.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{retained_count, sorted_eigen};
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::Bounds;
use crate::optim::{minimize_bounded, LbfgsOptions};

const GRID_SIZE: usize = 20;

#[derive(Debug, Clone)]
pub struct KernelMap {
    pub(super) train: Vec<Vec<f64>>,
    pub(super) weights: Vec<f64>,
    /// RBF scale: `k(x, y) = exp(-gamma ‖x - y‖²)`.
    pub(super) gamma: f64,
    /// `n × k` expansion coefficients of the retained components.
    pub(super) coeffs: DMatrix<f64>,
    /// `k × n` matrix mapping a raw kernel vector to the projection.
    pub(super) proj: DMatrix<f64>,
    /// Constant part of the projection.
    pub(super) offset: DVector<f64>,
    pub(super) eigenvalues: Vec<f64>,
    pub(super) explained: f64,
    /// Projections of the training points.
    pub(super) images: Vec<Vec<f64>>,
}

fn rbf_matrix(x: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let v = (-gamma * linalg::sq_dist(&x[i], &x[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `D^½ (I - 1wᵀ) K (I - w1ᵀ) D^½`, whose eigenpairs give the weighted
/// feature-space principal components.
fn weighted_centered(k: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let kw: Vec<f64> = (0..n).map(|i| (0..n).map(|l| k[(i, l)] * w[l]).sum()).collect();
    let wkw: f64 = kw.iter().zip(w).map(|(a, b)| a * b).sum();
    DMatrix::from_fn(n, n, |i, j| (k[(i, j)] - kw[i] - kw[j] + wkw) * (w[i] * w[j]).sqrt())
}

/// Median-heuristic scale `1 / (2 · median squared distance)`.
fn median_gamma(x: &[Vec<f64>]) -> f64 {
    let mut d2: Vec<f64> = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d2.push(linalg::sq_dist(&x[i], &x[j]));
        }
    }
    d2.retain(|v| *v > 0.0);
    if d2.is_empty() {
        return 1.0;
    }
    d2.sort_by(f64::total_cmp);
    1.0 / (2.0 * d2[d2.len() / 2])
}

fn spectrum(x: &[Vec<f64>], w: &[f64], gamma: f64) -> (Vec<f64>, DMatrix<f64>) {
    let m = weighted_centered(&rbf_matrix(x, gamma), w);
    sorted_eigen(SymmetricEigen::new(m))
}

fn top_share(vals: &[f64], k: usize) -> f64 {
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    vals.iter().take(k).map(|v| v.max(0.0)).sum::<f64>() / total
}

/// Fits the kernel map. The RBF scale is chosen from a log grid spanning a
/// decade either side of the median heuristic: the scale whose leading
/// `k_ref` components keep the largest variance share wins, where `k_ref`
/// is what the heuristic scale itself needs (at most `dim`).
pub fn fit(x: &[Vec<f64>], w: &[f64], threshold: f64) -> Result<KernelMap> {
    let n = x.len();
    let d = x[0].len();
    let g0 = median_gamma(x);
    let (vals0, _) = spectrum(x, w, g0);
    if top_share(&vals0, n) <= 0.0 {
        return Err(Error::DegenerateData("kernel matrix has no variance".into()));
    }
    let k_ref = retained_count(&vals0, threshold).min(d).max(1);
    let mut best: Option<(f64, f64)> = None;
    for t in 0..GRID_SIZE {
        let gamma = g0 * 10f64.powf(-1.0 + 2.0 * t as f64 / (GRID_SIZE - 1) as f64);
        let (vals, _) = spectrum(x, w, gamma);
        let share = top_share(&vals, k_ref);
        if best.is_none_or(|(s, _)| share > s) {
            best = Some((share, gamma));
        }
    }
    let gamma = best.expect("non-empty grid").1;
    build(x, w, gamma, threshold)
}

/// Builds the map at a fixed RBF scale.
pub fn build(x: &[Vec<f64>], w: &[f64], gamma: f64, threshold: f64) -> Result<KernelMap> {
    let n = x.len();
    let d = x[0].len();
    let kmat = rbf_matrix(x, gamma);
    let (vals, vecs) = sorted_eigen(SymmetricEigen::new(weighted_centered(&kmat, w)));
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("kernel matrix has no variance".into()));
    }
    let k = retained_count(&vals, threshold).min(d).max(1);
    let k = k.min(vals.iter().filter(|v| **v > 1e-12 * total).count()).max(1);
    let explained = top_share(&vals, k);

    let mut coeffs = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let s = vals[j].sqrt();
        for i in 0..n {
            coeffs[(i, j)] = w[i].sqrt() * vecs[(i, j)] / s;
        }
    }
    // z = Aᵀ k̃(x), k̃(x) = k(x) - (wᵀk(x)) 1 - K w + (wᵀ K w) 1
    let kw: DVector<f64> = &kmat * DVector::from_column_slice(w);
    let wkw = kw.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let colsum: Vec<f64> = (0..k).map(|j| coeffs.column(j).sum()).collect();
    let proj = DMatrix::from_fn(k, n, |j, i| coeffs[(i, j)] - colsum[j] * w[i]);
    let offset = DVector::from_fn(k, |j, _| -coeffs.column(j).dot(&kw) + colsum[j] * wkw);
    let mut map = KernelMap {
        train: x.to_vec(),
        weights: w.to_vec(),
        gamma,
        coeffs,
        proj,
        offset,
        eigenvalues: vals[..k].to_vec(),
        explained,
        images: Vec::new(),
    };
    map.images = x.iter().map(|p| map.forward(p)).collect();
    Ok(map)
}

impl KernelMap {
    /// Normalized point weights the map was fitted with.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Retained eigenvalues of the weighted centered kernel matrix.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn training_images(&self) -> &[Vec<f64>] {
        &self.images
    }

    fn kernel_vec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.train.len(), self.train.iter().map(|t| (-self.gamma * linalg::sq_dist(t, x)).exp()))
    }

    pub(super) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = &self.proj * self.kernel_vec(x) + &self.offset;
        z.iter().copied().collect()
    }

    /// `‖z(x) - target‖²` and its gradient.
    fn preimage_loss(&self, x: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let kv = self.kernel_vec(x);
        let z = &self.proj * &kv + &self.offset;
        let r: Vec<f64> = z.iter().zip(target).map(|(a, b)| a - b).collect();
        // dL/dk_i = 2 Σ_j r_j P_ji ; dk_i/dx = -2 gamma (x - x_i) k_i
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, t) in self.train.iter().enumerate() {
            let mut c = 0.0;
            for (j, rj) in r.iter().enumerate() {
                c += rj * self.proj[(j, i)];
            }
            let c = 2.0 * c * (-2.0 * self.gamma) * kv[i];
            for ((g, xv), tv) in grad.iter_mut().zip(x).zip(t) {
                *g += c * (xv - tv);
            }
        }
        r.iter().map(|v| v * v).sum()
    }

    /// Approximate pre-image of `z` inside `bounds`. Returns the point and
    /// whether the search failed and fell back to the nearest archive point.
    pub(super) fn back(&self, z: &[f64], bounds: &Bounds, starts: usize, steps: usize) -> (Vec<f64>, bool) {
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        let dist: Vec<f64> = self.images.iter().map(|im| linalg::sq_dist(im, z)).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let opts = LbfgsOptions { max_iter: steps, pg_tol: 1e-12, f_tol: 1e-14, ..Default::default() };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &s in order.iter().take(starts) {
            let m = minimize_bounded(
                |x, g| self.preimage_loss(x, z, g),
                &self.train[s],
                bounds.lower(),
                bounds.upper(),
                &opts,
            );
            if m.f.is_finite() && m.x.iter().all(|v| v.is_finite()) && best.as_ref().is_none_or(|(f, _)| m.f < *f) {
                best = Some((m.f, m.x));
            }
        }
        match best {
            Some((_, x)) => (bounds.clamp(&x), false),
            None => (bounds.clamp(&self.train[order[0]]), true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn preimage_gradient_matches_finite_differences() {
        let mut rng = seed::rng(1);
        let x: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let w = vec![1.0 / 12.0; 12];
        let map = build(&x, &w, 0.3, 0.9).unwrap();
        let target: Vec<f64> = (0..map.eigenvalues.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = [0.3, -0.7, 1.1];
        let mut g = [0.0; 3];
        map.preimage_loss(&p, &target, &mut g);
        let mut scratch = [0.0; 3];
        for i in 0..3 {
            let h = 1e-6;
            let mut a = p;
            a[i] += h;
            let mut b = p;
            b[i] -= h;
            let fd = (map.preimage_loss(&a, &target, &mut scratch) - map.preimage_loss(&b, &target, &mut scratch)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }
}
