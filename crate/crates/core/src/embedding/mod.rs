//! BO in a learned low-dimensional space: weighted PCA (PCA-BO) and weighted
//! RBF kernel PCA (KPCA-BO).
//!
//! Each iteration weights the archive by objective rank, fits the map, fits
//! a GP on the mapped points, maximizes EI in a box around the image of the
//! search domain and maps the maximizer back.

mod kpca;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kpca::KernelMap;

use crate::acquisition::{maximize_acquisition, AcqConfig};
use crate::bo::{dedup_proposal, evaluate_doe};
use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::run::{Archive, Extra, Observer, RunConfig, Session};
use crate::seed;
use crate::surrogate::{GpConfig, GpModel};
use crate::timing::{time_phase, Phase};

const WEIGHT_FLOOR: f64 = 1e-12;
const BOX_INFLATION: f64 = 1.1;
/// Above this dimension the corner set is sampled instead of enumerated.
const MAX_ENUMERATED_CORNER_DIM: usize = 12;
const SAMPLED_CORNERS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    LinearPca,
    KernelPca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    /// Variance share the linear map keeps.
    pub explained_variance: f64,
    /// Variance share the kernel map may drop.
    pub max_information_loss: f64,
    /// Infill points per iteration.
    pub n_point: usize,
    pub preimage_starts: usize,
    pub preimage_steps: usize,
}

impl EmbeddingConfig {
    pub fn linear() -> Self {
        EmbeddingConfig {
            kind: EmbeddingKind::LinearPca,
            explained_variance: 0.90,
            max_information_loss: 0.1,
            n_point: 1,
            preimage_starts: 5,
            preimage_steps: 200,
        }
    }

    pub fn kernel() -> Self {
        EmbeddingConfig { kind: EmbeddingKind::KernelPca, ..Self::linear() }
    }

    /// Share of variance the retained components must reach.
    pub fn threshold(&self) -> f64 {
        match self.kind {
            EmbeddingKind::LinearPca => self.explained_variance,
            EmbeddingKind::KernelPca => 1.0 - self.max_information_loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.explained_variance > 0.0 && self.explained_variance <= 1.0) {
            return Err(Error::invalid("explained_variance must lie in (0, 1]"));
        }
        if !(self.max_information_loss > 0.0 && self.max_information_loss < 1.0) {
            return Err(Error::invalid("max_information_loss must lie in (0, 1)"));
        }
        if self.n_point != 1 {
            return Err(Error::invalid("only one infill point per iteration is supported"));
        }
        if self.preimage_starts == 0 {
            return Err(Error::invalid("preimage_starts must be at least 1"));
        }
        Ok(())
    }
}

/// Rank-based weights for minimization: `w ∝ ln n - ln rank` (rank 1 is the
/// best value), floored at `1e-12` and normalized. Tied values share the mean
/// weight of their rank block.
pub fn compute_weights(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let ln_n = (n as f64).ln();
    let raw: Vec<f64> = (1..=n).map(|r| (ln_n - (r as f64).ln()).max(WEIGHT_FLOOR)).collect();
    let mut w = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && y[order[end]] == y[order[start]] {
            end += 1;
        }
        let mean = raw[start..end].iter().sum::<f64>() / (end - start) as f64;
        for &i in &order[start..end] {
            w[i] = mean;
        }
        start = end;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Eigenpairs sorted by decreasing eigenvalue.
pub(crate) fn sorted_eigen(e: SymmetricEigen<f64, nalgebra::Dyn>) -> (Vec<f64>, DMatrix<f64>) {
    let n = e.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), n, |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Smallest count of leading eigenvalues whose share reaches `threshold`.
pub(crate) fn retained_count(vals: &[f64], threshold: f64) -> usize {
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    for (i, v) in vals.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= (threshold - 1e-12) * total {
            return i + 1;
        }
    }
    vals.len()
}

#[derive(Debug, Clone)]
pub struct LinearMap {
    mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    components: DMatrix<f64>,
    variances: Vec<f64>,
    explained: f64,
}

impl LinearMap {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Weighted variance along each retained component.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

#[derive(Debug, Clone)]
pub enum ForwardMap {
    Linear(LinearMap),
    Kernel(KernelMap),
}

fn check_rows(x: &[Vec<f64>], w: &[f64]) -> Result<usize> {
    if x.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: x.len() });
    }
    if w.len() != x.len() {
        return Err(Error::invalid("one weight per point is required"));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("points must share a non-zero dimension"));
    }
    if w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    Ok(d)
}

/// Weighted PCA: the eigenvectors of `Σ w_i (x_i - m)(x_i - m)ᵀ` with
/// `m = Σ w_i x_i` (weights summing to one).
fn fit_linear(x: &[Vec<f64>], w: &[f64], threshold: f64) -> Result<LinearMap> {
    let d = x[0].len();
    let total_w: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total_w).collect();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().zip(&w).map(|(r, wi)| wi * r[j]).sum()).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (r, wi) in x.iter().zip(&w) {
        for a in 0..d {
            let ca = r[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += wi * ca * (r[b] - mean[b]);
            }
        }
    }
    cov.fill_upper_triangle_with_lower_triangle();
    let (vals, vecs) = sorted_eigen(SymmetricEigen::new(cov));
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let scale = x.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if !(total > 1e-24 * scale * scale) {
        return Err(Error::DegenerateData("points have zero weighted variance".into()));
    }
    let k = retained_count(&vals, threshold).max(1);
    let components = DMatrix::from_fn(k, d, |r, c| vecs[(c, r)]);
    let explained = vals.iter().take(k).map(|v| v.max(0.0)).sum::<f64>() / total;
    Ok(LinearMap { mean, components, variances: vals[..k].to_vec(), explained })
}

/// Fits the forward map of `config.kind` to the weighted points.
pub fn fit_forward_map(x: &[Vec<f64>], weights: &[f64], config: &EmbeddingConfig) -> Result<ForwardMap> {
    config.validate()?;
    check_rows(x, weights)?;
    match config.kind {
        EmbeddingKind::LinearPca => Ok(ForwardMap::Linear(fit_linear(x, weights, config.threshold())?)),
        EmbeddingKind::KernelPca => {
            let total: f64 = weights.iter().sum();
            let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
            Ok(ForwardMap::Kernel(kpca::fit(x, &w, config.threshold())?))
        }
    }
}

impl ForwardMap {
    /// Number of retained components.
    pub fn k(&self) -> usize {
        match self {
            ForwardMap::Linear(m) => m.components.nrows(),
            ForwardMap::Kernel(m) => m.eigenvalues.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ForwardMap::Linear(m) => m.mean.len(),
            ForwardMap::Kernel(m) => m.train[0].len(),
        }
    }

    /// Variance share kept by the retained components.
    pub fn explained(&self) -> f64 {
        match self {
            ForwardMap::Linear(m) => m.explained,
            ForwardMap::Kernel(m) => m.explained,
        }
    }

    pub fn map_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!("expected a point of length {}, got {}", self.input_dim(), x.len())));
        }
        Ok(match self {
            ForwardMap::Linear(m) => {
                let c: Vec<f64> = x.iter().zip(&m.mean).map(|(a, b)| a - b).collect();
                (0..m.components.nrows())
                    .map(|r| (0..c.len()).map(|j| m.components[(r, j)] * c[j]).sum())
                    .collect()
            }
            ForwardMap::Kernel(m) => m.forward(x),
        })
    }

    /// Maps `z` back to the input space and clamps it into `bounds`. The flag
    /// reports a kernel pre-image search that fell back to an archive point.
    pub fn map_back(&self, z: &[f64], bounds: &Bounds, config: &EmbeddingConfig) -> Result<(Vec<f64>, bool)> {
        if z.len() != self.k() {
            return Err(Error::invalid(format!("expected a reduced point of length {}, got {}", self.k(), z.len())));
        }
        if bounds.dim() != self.input_dim() {
            return Err(Error::invalid("bounds do not match the input dimension"));
        }
        Ok(match self {
            ForwardMap::Linear(m) => {
                let d = m.mean.len();
                let x: Vec<f64> = (0..d)
                    .map(|j| m.mean[j] + (0..z.len()).map(|r| m.components[(r, j)] * z[r]).sum::<f64>())
                    .collect();
                (bounds.clamp(&x), false)
            }
            ForwardMap::Kernel(m) => m.back(z, bounds, config.preimage_starts, config.preimage_steps),
        })
    }

    /// Search box of the reduced space: the bounding box of the image of the
    /// corners of `bounds` (plus, for the kernel map, the training images),
    /// scaled by 1.1 about its centre.
    pub fn reduced_box(&self, bounds: &Bounds, seed: u64) -> Result<Bounds> {
        let k = self.k();
        let (mut lo, mut hi) = (vec![f64::INFINITY; k], vec![f64::NEG_INFINITY; k]);
        let mut include = |z: &[f64]| {
            for j in 0..k {
                lo[j] = lo[j].min(z[j]);
                hi[j] = hi[j].max(z[j]);
            }
        };
        match self {
            ForwardMap::Linear(m) => {
                // exact extent of a linear image of a box
                for r in 0..k {
                    let (mut a, mut b) = (0.0, 0.0);
                    for j in 0..m.mean.len() {
                        let c = m.components[(r, j)];
                        let u = c * (bounds.lower()[j] - m.mean[j]);
                        let v = c * (bounds.upper()[j] - m.mean[j]);
                        a += u.min(v);
                        b += u.max(v);
                    }
                    let mut z = vec![0.0; k];
                    z[r] = a;
                    include(&z);
                    z[r] = b;
                    include(&z);
                }
            }
            ForwardMap::Kernel(m) => {
                for im in &m.images {
                    include(im);
                }
                let d = bounds.dim();
                let corner = |bits: &dyn Fn(usize) -> bool| -> Vec<f64> {
                    (0..d).map(|j| if bits(j) { bounds.upper()[j] } else { bounds.lower()[j] }).collect()
                };
                if d <= MAX_ENUMERATED_CORNER_DIM {
                    for mask in 0..(1usize << d) {
                        include(&m.forward(&corner(&|j| mask >> j & 1 == 1)));
                    }
                } else {
                    let mut rng = seed::rng(seed::derive(seed, "corners"));
                    for _ in 0..SAMPLED_CORNERS {
                        let bits: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
                        include(&m.forward(&corner(&|j| bits[j])));
                    }
                }
            }
        }
        let (mut lower, mut upper) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for j in 0..k {
            let c = 0.5 * (lo[j] + hi[j]);
            let half = (0.5 * (hi[j] - lo[j]) * BOX_INFLATION).max(1e-9);
            lower.push(c - half);
            upper.push(c + half);
        }
        Bounds::new(lower, upper)
    }
}

/// PCA-BO / KPCA-BO. `acq` supplies the restart and step settings; its box
/// is replaced every iteration by the unit cube of the reduced space.
pub fn run_embedding_bo(
    objective: &dyn Objective,
    config: &RunConfig,
    emb: &EmbeddingConfig,
    gp: &GpConfig,
    acq: &AcqConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    emb.validate()?;
    gp.validate()?;
    acq.validate()?;
    let bounds = objective.bounds().clone();
    let mut session = Session::new(objective, config, observer)?;
    evaluate_doe(&mut session, config.n0, config.seed)?;
    let mut rng = seed::rng(seed::derive(config.seed, "embedding-fallback"));
    let mut iter = 0u64;
    while session.remaining() > 0 {
        let archive = session.archive();
        if archive.len() < 2 {
            let p = crate::doe::uniform(1, &bounds, &mut rng).pop().expect("one point");
            session.evaluate(&p, (0.0, 0.0), &Extra::default());
            continue;
        }
        let x = archive.x().to_vec();
        let y = archive.y().to_vec();
        let f_best = archive.best_y();
        let fit = || -> Result<(ForwardMap, Bounds, GpModel)> {
            let w = compute_weights(&y);
            let map = fit_forward_map(&x, &w, emb)?;
            let zbox = map.reduced_box(&bounds, seed::derive_indexed(config.seed, "zbox", iter))?;
            let zu: Vec<Vec<f64>> =
                x.iter().map(|p| map.map_forward(p).map(|z| zbox.to_unit(&z))).collect::<Result<_>>()?;
            let model = GpModel::fit(&zu, &y, gp, seed::derive_indexed(config.seed, "gp", iter))?;
            Ok((map, zbox, model))
        };
        let (fitted, fit_s) = time_phase(Phase::ModelFit, fit);
        let (map, zbox, model) = fitted?;
        let k = map.k();
        let search = || -> Result<(Vec<f64>, bool)> {
            let unit = AcqConfig { bounds: Bounds::unit(k), ..acq.clone() };
            let best = maximize_acquisition(&model, f_best, &unit, seed::derive_indexed(config.seed, "acq", iter))?;
            map.map_back(&zbox.from_unit(&best.x), &bounds, emb)
        };
        let (found, acq_s) = time_phase(Phase::AcqOpt, search);
        let (xnew, fell_back) = found?;
        let (xnew, replaced) = dedup_proposal(session.archive(), &bounds, xnew, &mut rng);
        let note = match (fell_back, replaced) {
            (true, true) => Some("preimage-fallback,duplicate-replaced".to_string()),
            (true, false) => Some("preimage-fallback".to_string()),
            (false, true) => Some("duplicate-replaced".to_string()),
            (false, false) => None,
        };
        let extra = Extra { k: Some(k), explained: Some(map.explained()), note, ..Default::default() };
        session.evaluate(&xnew, (fit_s, acq_s), &extra);
        iter += 1;
    }
    Ok(session.into_archive())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_follow_rank() {
        let w = compute_weights(&[3.0, 1.0, 2.0]);
        assert!(w[1] > w[2] && w[2] > w[0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let eq = compute_weights(&[5.0; 4]);
        assert!(eq.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn four_distinct_values_give_log_rank_weights() {
        let w = compute_weights(&[0.4, 0.1, 0.3, 0.2]);
        let raw = [4f64.ln(), 4f64.ln() - 2f64.ln(), 4f64.ln() - 3f64.ln(), 1e-12];
        let z: f64 = raw.iter().sum();
        // value order: 0.1 (rank 1), 0.2, 0.3, 0.4
        let expect = [raw[3] / z, raw[0] / z, raw[2] / z, raw[1] / z];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{w:?}");
        }
    }

    #[test]
    fn retained_count_on_equal_spectrum() {
        assert_eq!(retained_count(&[1.0, 1.0, 1.0], 0.9), 3);
        assert_eq!(retained_count(&[8.0, 1.0, 1.0], 0.8), 1);
    }
}
