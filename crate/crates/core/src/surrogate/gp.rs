use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernel::KernelKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const DEDUP_TOL: f64 = 1e-10;
const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub kernel: KernelKind,
    /// Fixed observation noise variance, in standardized target units.
    pub noise_variance: f64,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub fit_restarts: usize,
    /// Iteration cap for each quasi-Newton start.
    pub max_fit_iters: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel: KernelKind::Matern52Ard,
            noise_variance: 0.01,
            lengthscale_bounds: (1e-3, 1e3),
            signal_variance_bounds: (1e-3, 1e3),
            fit_restarts: 5,
            max_fit_iters: 100,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
        if !positive(self.lengthscale_bounds) || !positive(self.signal_variance_bounds) {
            return Err(Error::invalid("GP hyperparameter bounds must be positive intervals"));
        }
        if self.fit_restarts == 0 {
            return Err(Error::invalid("fit_restarts must be at least 1"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Hyperparams {
    /// Packs the optimized parameters as `[log l.., log signal_variance]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v
    }

    pub fn from_log(theta: &[f64], noise_variance: f64) -> Self {
        let (ls, sv) = theta.split_at(theta.len() - 1);
        Hyperparams { lengthscales: ls.iter().map(|v| v.exp()).collect(), signal_variance: sv[0].exp(), noise_variance }
    }
}

/// Covariance between the rows of `a` and the rows of `b`.
pub fn cross_covariance(kind: KernelKind, hp: &Hyperparams, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ra: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rb: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(ra.len(), rb.len(), |i, j| {
        hp.signal_variance * kind.corr(kind.scaled_sq_dist(&ra[i], &rb[j], &hp.lengthscales))
    })
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Log marginal likelihood of standardized targets and its gradient with
/// respect to `theta = [log l.., log signal_variance]`.
///
/// Returns `None` when the covariance cannot be factorized even with jitter.
pub fn log_marginal_likelihood(
    kind: KernelKind,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_variance: f64,
    theta: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let n = x.nrows();
    let d = x.ncols();
    let hp = Hyperparams::from_log(theta, noise_variance);
    let rows = rows_of(x);
    let n_ls = hp.lengthscales.len();

    let mut r2 = DMatrix::<f64>::zeros(n, n);
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kind.scaled_sq_dist(&rows[i], &rows[j], &hp.lengthscales);
            r2[(i, j)] = v;
            r2[(j, i)] = v;
            let c = hp.signal_variance * kind.corr(v);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    let mut ky = k.clone();
    for i in 0..n {
        ky[(i, i)] += noise_variance;
    }
    let (l, _) = linalg::cholesky_with_jitter(&ky).ok()?;
    let alpha = linalg::cholesky_solve_vec(&l, y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * linalg::log_det_from_cholesky(&l) - 0.5 * n as f64 * LN_2PI;

    // W = alpha alphaᵀ - K⁻¹ ; dLML/dθ = ½ tr(W dK/dθ)
    let mut w = linalg::cholesky_inverse(&l);
    w.ger(1.0, &alpha, &alpha, -1.0);

    let mut grad = vec![0.0; n_ls + 1];
    // signal variance: dK/dlog s = K
    grad[n_ls] = 0.5 * w.component_mul(&k).sum();

    // G_ab = W_ab * s * factor(r²_ab)
    let mut g = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            g[(i, j)] = w[(i, j)] * hp.signal_variance * kind.dcorr_dlog_l_factor(r2[(i, j)]);
        }
    }
    match kind {
        KernelKind::Matern52Ard => {
            // Σ_ab G_ab (x_ai - x_bi)² = 2 (Σ_a x_ai² rowsum_a - x_iᵀ G x_i)
            let gx = &g * x;
            let rowsum: Vec<f64> = (0..n).map(|a| g.row(a).sum()).collect();
            for i in 0..d {
                let mut s = 0.0;
                for a in 0..n {
                    let xa = x[(a, i)];
                    s += xa * xa * rowsum[a] - xa * gx[(a, i)];
                }
                let li = hp.lengthscales[i];
                grad[i] = 0.5 * 2.0 * s / (li * li);
            }
        }
        KernelKind::RbfIsotropic => {
            grad[0] = 0.5 * g.component_mul(&r2).sum();
        }
    }
    Some((lml, grad))
}

/// A fitted Gaussian-process posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    config: GpConfig,
    train_x: DMatrix<f64>,
    /// Standardized targets.
    train_y: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: Hyperparams,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

/// Merges rows closer than the dedup tolerance, averaging their targets.
fn deduplicate(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for (row, &v) in x.iter().zip(y) {
        match xs.iter().position(|r| linalg::sq_dist(r, row).sqrt() < DEDUP_TOL) {
            Some(k) => {
                sums[k].0 += v;
                sums[k].1 += 1;
            }
            None => {
                xs.push(row.clone());
                sums.push((v, 1));
            }
        }
    }
    let ys = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (xs, ys)
}

impl GpModel {
    /// Fits hyperparameters by maximizing the log marginal likelihood from
    /// `config.fit_restarts` seeded starts.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &GpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Self::check_data(x, y)?;
        let (xs, ys) = deduplicate(x, y);
        let d = xs[0].len();
        let n_ls = config.kernel.n_lengthscales(d);
        let (train_x, train_y, y_mean, y_scale) = Self::standardize(&xs, &ys);

        let (ll_lo, ll_hi) = (config.lengthscale_bounds.0.ln(), config.lengthscale_bounds.1.ln());
        let (ls_lo, ls_hi) = (config.signal_variance_bounds.0.ln(), config.signal_variance_bounds.1.ln());
        let mut lower = vec![ll_lo; n_ls];
        lower.push(ls_lo);
        let mut upper = vec![ll_hi; n_ls];
        upper.push(ls_hi);

        let mut rng = seed::rng(seed);
        let mut starts = Vec::with_capacity(config.fit_restarts);
        let mut first = vec![0.5f64.ln().clamp(ll_lo, ll_hi); n_ls];
        first.push(0.0f64.clamp(ls_lo, ls_hi));
        starts.push(first);
        // random starts from the central part of the box
        let (rl_lo, rl_hi) = (0.05f64.ln().max(ll_lo), 5f64.ln().min(ll_hi));
        let (rs_lo, rs_hi) = (0.1f64.ln().max(ls_lo), 10f64.ln().min(ls_hi));
        while starts.len() < config.fit_restarts {
            let mut s: Vec<f64> = (0..n_ls).map(|_| rng.random_range(rl_lo.min(rl_hi)..=rl_hi.max(rl_lo))).collect();
            s.push(rng.random_range(rs_lo.min(rs_hi)..=rs_hi.max(rs_lo)));
            starts.push(s);
        }

        let opts = LbfgsOptions { max_iter: config.max_fit_iters, pg_tol: 1e-6, f_tol: 1e-10, ..Default::default() };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in &starts {
            let objective = |theta: &[f64], grad: &mut [f64]| match log_marginal_likelihood(
                config.kernel,
                &train_x,
                &train_y,
                config.noise_variance,
                theta,
            ) {
                Some((v, g)) => {
                    for (o, gi) in grad.iter_mut().zip(g) {
                        *o = -gi;
                    }
                    -v
                }
                None => f64::INFINITY,
            };
            let m = minimize_bounded(objective, start, &lower, &upper, &opts);
            if m.f.is_finite() && best.as_ref().is_none_or(|(f, _)| m.f < *f) {
                best = Some((m.f, m.x));
            }
        }
        let (_, theta) = best.ok_or_else(|| Error::Numerical("no hyperparameter start produced a factorizable covariance".into()))?;
        let hyper = Hyperparams::from_log(&theta, config.noise_variance);
        Self::assemble(config.clone(), train_x, train_y, y_mean, y_scale, hyper)
    }

    /// Builds a model at fixed hyperparameters (no fitting).
    pub fn with_hyperparams(x: &[Vec<f64>], y: &[f64], config: &GpConfig, hyper: Hyperparams) -> Result<Self> {
        config.validate()?;
        Self::check_data(x, y)?;
        let d = x[0].len();
        if hyper.lengthscales.len() != config.kernel.n_lengthscales(d) {
            return Err(Error::invalid("lengthscale count does not match the kernel"));
        }
        let (xs, ys) = deduplicate(x, y);
        let (train_x, train_y, y_mean, y_scale) = Self::standardize(&xs, &ys);
        Self::assemble(config.clone(), train_x, train_y, y_mean, y_scale, hyper)
    }

    fn check_data(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("{} inputs but {} targets", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: x.len() });
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("input rows must share a non-zero dimension"));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training data must be finite"));
        }
        Ok(())
    }

    fn standardize(xs: &[Vec<f64>], ys: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64, f64) {
        let n = xs.len();
        let d = xs[0].len();
        let train_x = DMatrix::from_fn(n, d, |i, j| xs[i][j]);
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = var.sqrt().max(STD_FLOOR);
        let train_y = DVector::from_iterator(n, ys.iter().map(|v| (v - mean) / scale));
        (train_x, train_y, mean, scale)
    }

    fn assemble(
        config: GpConfig,
        train_x: DMatrix<f64>,
        train_y: DVector<f64>,
        y_mean: f64,
        y_scale: f64,
        hyper: Hyperparams,
    ) -> Result<Self> {
        let mut ky = cross_covariance(config.kernel, &hyper, &train_x, &train_x);
        for i in 0..ky.nrows() {
            ky[(i, i)] += hyper.noise_variance;
        }
        let (chol, jitter) = linalg::cholesky_with_jitter(&ky)?;
        let alpha = linalg::cholesky_solve_vec(&chol, &train_y);
        let n = train_y.len();
        let lml = -0.5 * train_y.dot(&alpha) - 0.5 * linalg::log_det_from_cholesky(&chol) - 0.5 * n as f64 * LN_2PI;
        Ok(GpModel { config, train_x, train_y, y_mean, y_scale, hyper, chol, alpha, jitter, lml })
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.train_x.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the standardized targets at the fitted
    /// hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn standardization(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    pub fn train_x(&self) -> &DMatrix<f64> {
        &self.train_x
    }

    /// Standardized training targets.
    pub fn train_y_standardized(&self) -> &DVector<f64> {
        &self.train_y
    }

    /// Effective lengthscale of every input dimension.
    pub fn lengthscales_per_dim(&self) -> Vec<f64> {
        match self.config.kernel {
            KernelKind::Matern52Ard => self.hyper.lengthscales.clone(),
            KernelKind::RbfIsotropic => vec![self.hyper.lengthscales[0]; self.dim()],
        }
    }

    fn cross_cov_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        cross_covariance(self.config.kernel, &self.hyper, &self.train_x, x)
    }

    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("expected a point of length {}, got {}", self.dim(), x.len())));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (f64, f64) {
        let kind = self.config.kernel;
        let n = self.n_train();
        let mut kstar = DVector::<f64>::zeros(n);
        let mut row = vec![0.0; self.dim()];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.train_x[(i, j)];
            }
            kstar[i] = self.hyper.signal_variance * kind.corr(kind.scaled_sq_dist(&row, x, &self.hyper.lengthscales));
        }
        let mean = kstar.dot(&self.alpha);
        let v = linalg::solve_lower_vec(&self.chol, &kstar);
        let var = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        (mean * self.y_scale + self.y_mean, var.sqrt() * self.y_scale)
    }

    /// Batched [`predict`](Self::predict) over the rows of `points`.
    pub fn predict_many(&self, points: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        if points.iter().any(|p| p.len() != self.dim()) {
            return Err(Error::invalid("point dimension does not match the model"));
        }
        let xm = DMatrix::from_fn(points.len(), self.dim(), |i, j| points[i][j]);
        let kstar = self.cross_cov_rows(&xm);
        let means = kstar.tr_mul(&self.alpha);
        let mut v = kstar;
        linalg::solve_lower_in_place(&self.chol, &mut v);
        Ok((0..points.len())
            .map(|c| {
                let var = (self.hyper.signal_variance - v.column(c).norm_squared()).max(0.0);
                (means[c] * self.y_scale + self.y_mean, var.sqrt() * self.y_scale)
            })
            .collect())
    }

    /// Joint posterior draws at `points`: row `s` of the result is sample `s`.
    pub fn sample_posterior(&self, points: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n_samples == 0 {
            return Ok(Vec::new());
        }
        if points.is_empty() {
            return Err(Error::invalid("posterior sampling needs at least one point"));
        }
        if points.iter().any(|p| p.len() != self.dim()) {
            return Err(Error::invalid("point dimension does not match the model"));
        }
        let m = points.len();
        let xm = DMatrix::from_fn(m, self.dim(), |i, j| points[i][j]);
        let mut v = self.cross_cov_rows(&xm);
        let means = v.tr_mul(&self.alpha);
        linalg::solve_lower_in_place(&self.chol, &mut v);
        let mut cov = cross_covariance(self.config.kernel, &self.hyper, &xm, &xm);
        linalg::gemm_tn(&mut cov, -1.0, &v, &v, 1.0);
        drop(v);
        let (l, _) = linalg::cholesky_with_jitter(&cov)?;
        drop(cov);

        let mut rng = seed::rng(seed);
        let z = DMatrix::<f64>::from_fn(m, n_samples, |_, _| rng.sample(StandardNormal));
        let draws = &l * z;
        Ok((0..n_samples)
            .map(|s| (0..m).map(|i| (means[i] + draws[(i, s)]) * self.y_scale + self.y_mean).collect())
            .collect())
    }
}
