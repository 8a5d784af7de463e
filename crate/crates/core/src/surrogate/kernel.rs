use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Matérn 5/2 with one lengthscale per input dimension.
    Matern52Ard,
    /// Squared exponential with a single lengthscale.
    RbfIsotropic,
}

impl KernelKind {
    /// Number of lengthscale parameters for inputs of dimension `dim`.
    pub fn n_lengthscales(self, dim: usize) -> usize {
        match self {
            KernelKind::Matern52Ard => dim,
            KernelKind::RbfIsotropic => 1,
        }
    }

    /// Scaled squared distance `r²` between two points.
    #[inline]
    pub fn scaled_sq_dist(self, a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
        match self {
            KernelKind::Matern52Ard => a
                .iter()
                .zip(b)
                .zip(lengthscales)
                .map(|((x, y), l)| {
                    let t = (x - y) / l;
                    t * t
                })
                .sum(),
            KernelKind::RbfIsotropic => {
                let l = lengthscales[0];
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (l * l)
            }
        }
    }

    /// Correlation (unit signal variance) as a function of `r²`.
    #[inline]
    pub fn corr(self, r2: f64) -> f64 {
        match self {
            KernelKind::Matern52Ard => {
                let r = r2.max(0.0).sqrt();
                (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
            KernelKind::RbfIsotropic => (-0.5 * r2).exp(),
        }
    }

    /// `-d corr / d(r²) * 2`, the factor multiplying `(x_i - y_i)² / l_i²` in
    /// the derivative of the correlation with respect to `log l_i`.
    #[inline]
    pub fn dcorr_dlog_l_factor(self, r2: f64) -> f64 {
        match self {
            KernelKind::Matern52Ard => {
                let r = r2.max(0.0).sqrt();
                5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
            KernelKind::RbfIsotropic => (-0.5 * r2).exp(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_at_zero_distance() {
        assert_eq!(KernelKind::Matern52Ard.corr(0.0), 1.0);
        assert_eq!(KernelKind::RbfIsotropic.corr(0.0), 1.0);
    }

    #[test]
    fn log_lengthscale_derivative_matches_finite_difference() {
        for kind in [KernelKind::Matern52Ard, KernelKind::RbfIsotropic] {
            let a = [0.3, -0.2];
            let b = [0.1, 0.4];
            let l = [0.7, 0.7];
            let k = |l: &[f64]| kind.corr(kind.scaled_sq_dist(&a, &b, l));
            let h: f64 = 1e-6;
            let lp: Vec<f64> = l.iter().map(|v| v * h.exp()).collect();
            let lm: Vec<f64> = l.iter().map(|v| v * (-h).exp()).collect();
            let fd = (k(&lp) - k(&lm)) / (2.0 * h);
            let r2 = kind.scaled_sq_dist(&a, &b, &l);
            let analytic = kind.dcorr_dlog_l_factor(r2) * r2;
            assert!((fd - analytic).abs() < 1e-8, "{kind:?}: {fd} vs {analytic}");
        }
    }
}
