//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! A projected L-BFGS: the two-loop recursion runs on the variables that are
//! not pinned at a bound, steps are projected back onto the box, and an
//! Armijo backtracking search along the projected path accepts the step.

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub pg_tol: f64,
    /// Stop when the relative decrease of the objective drops below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 100, memory: 10, pg_tol: 1e-8, f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// `f` returns the objective and writes the gradient into its second
/// argument. Non-finite objective values are treated as infeasible by the
/// line search.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bound dimension mismatch");
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut iterations = 0;

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    if !fx.is_finite() {
        return Minimum { x, f: fx, iterations, evaluations };
    }

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory.max(1)];

    while iterations < opts.max_iter {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < opts.pg_tol {
            break;
        }

        // two-loop recursion restricted to the free variables
        for i in 0..n {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        let m = s_hist.len();
        for k in (0..m).rev() {
            let a = rho_hist[k] * dot(&s_hist[k], &d);
            alpha[k] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y_hist[k][i];
                }
            }
        }
        if m > 0 {
            let yy = dot(&y_hist[m - 1], &y_hist[m - 1]);
            let gamma = if yy > 0.0 { 1.0 / (rho_hist[m - 1] * yy) } else { 1.0 };
            for v in d.iter_mut() {
                *v *= gamma;
            }
        }
        for k in 0..m {
            let b = rho_hist[k] * dot(&y_hist[k], &d);
            for i in 0..n {
                if free[i] {
                    d[i] += s_hist[k][i] * (alpha[k] - b);
                }
            }
        }
        if dot(&d, &g) >= 0.0 {
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        let mut step = if s_hist.is_empty() {
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dn > 0.0 { (1.0 / dn).min(1.0) } else { 1.0 }
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lower, upper);
            let moved: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            if moved == 0.0 {
                break;
            }
            f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            let decrease: f64 = x_new.iter().zip(&x).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease.min(0.0) && f_new <= fx {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;

        if !accepted {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }

        let rel = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if rel < opts.f_tol {
            break;
        }
    }

    Minimum { x, f: fx, iterations, evaluations }
}
