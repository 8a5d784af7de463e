use std::f64::consts::PI;

use super::transforms::{f_pen, lambda, mul, ramp, t_asy, t_osz, t_osz_vec};
use super::Problem;

fn rastrigin_sum(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    10.0 * (d - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>()) + z.iter().map(|v| v * v).sum::<f64>()
}

fn rosenbrock_sum(z: &[f64]) -> f64 {
    z.windows(2)
        .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn schaffer(z: &[f64]) -> f64 {
    let d = z.len();
    let mut acc = 0.0;
    for w in z.windows(2) {
        let s = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let rs = s.sqrt();
        acc += rs + rs * (50.0 * s.powf(0.2)).sin().powi(2);
    }
    (acc / (d - 1) as f64).powi(2)
}

impl Problem {
    fn shifted(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect()
    }

    fn rot(&self) -> &nalgebra::DMatrix<f64> {
        self.land.rot.as_ref().expect("instance has a rotation")
    }

    fn linear(&self) -> &nalgebra::DMatrix<f64> {
        self.land.linear.as_ref().expect("instance has a linear map")
    }

    fn linear2(&self) -> &nalgebra::DMatrix<f64> {
        self.land.linear2.as_ref().expect("instance has a second linear map")
    }

    /// Formula value before the optimum offset is applied.
    pub(super) fn raw(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let df = d as f64;
        match self.fid {
            1 => self.shifted(x).iter().map(|v| v * v).sum(),
            2 => {
                let mut z = self.shifted(x);
                t_osz_vec(&mut z);
                z.iter().enumerate().map(|(i, v)| 1e6f64.powf(ramp(i, d)) * v * v).sum()
            }
            3 => {
                let mut z = self.shifted(x);
                t_osz_vec(&mut z);
                t_asy(&mut z, 0.2);
                for (v, l) in z.iter_mut().zip(lambda(10.0, d)) {
                    *v *= l;
                }
                rastrigin_sum(&z)
            }
            4 => {
                let mut z = self.shifted(x);
                t_osz_vec(&mut z);
                for (i, v) in z.iter_mut().enumerate() {
                    let mut s = 10f64.powf(0.5 * ramp(i, d));
                    if *v > 0.0 && i % 2 == 0 {
                        s *= 10.0;
                    }
                    *v *= s;
                }
                rastrigin_sum(&z) + 100.0 * f_pen(x)
            }
            5 => x
                .iter()
                .zip(&self.x_opt)
                .enumerate()
                .map(|(i, (&xi, &oi))| {
                    let s = oi.signum() * 10f64.powf(ramp(i, d));
                    let z = if oi * xi < 25.0 { xi } else { oi };
                    5.0 * s.abs() - s * z
                })
                .sum(),
            6 => {
                let z = mul(self.linear(), &self.shifted(x));
                let sum: f64 = z
                    .iter()
                    .zip(&self.x_opt)
                    .map(|(&zi, &oi)| {
                        let s = if zi * oi > 0.0 { 100.0 } else { 1.0 };
                        (s * zi).powi(2)
                    })
                    .sum();
                t_osz(sum).powf(0.9)
            }
            7 => {
                let zh = mul(self.linear(), &self.shifted(x));
                let zt: Vec<f64> = zh
                    .iter()
                    .map(|&v| if v.abs() > 0.5 { (0.5 + v).floor() } else { (0.5 + 10.0 * v).floor() / 10.0 })
                    .collect();
                let z = mul(self.linear2(), &zt);
                let ell: f64 = z.iter().enumerate().map(|(i, v)| 100f64.powf(ramp(i, d)) * v * v).sum();
                0.1 * (zh[0].abs() / 1e4).max(ell) + f_pen(x)
            }
            8 => {
                let c = (df.sqrt() / 8.0).max(1.0);
                let z: Vec<f64> = self.shifted(x).iter().map(|v| c * v + 1.0).collect();
                rosenbrock_sum(&z)
            }
            9 => {
                let c = (df.sqrt() / 8.0).max(1.0);
                let z: Vec<f64> = mul(self.rot(), x).iter().map(|v| c * v + 0.5).collect();
                rosenbrock_sum(&z)
            }
            10 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_osz_vec(&mut z);
                z.iter().enumerate().map(|(i, v)| 1e6f64.powf(ramp(i, d)) * v * v).sum()
            }
            11 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_osz_vec(&mut z);
                1e6 * z[0] * z[0] + z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            12 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_asy(&mut z, 0.5);
                let z = mul(self.rot(), &z);
                z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            13 => {
                let z = mul(self.linear(), &self.shifted(x));
                z[0] * z[0] + 100.0 * z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            14 => {
                let z = mul(self.rot(), &self.shifted(x));
                z.iter()
                    .enumerate()
                    .map(|(i, v)| v.abs().powf(2.0 + 4.0 * ramp(i, d)))
                    .sum::<f64>()
                    .sqrt()
            }
            15 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_osz_vec(&mut z);
                t_asy(&mut z, 0.2);
                let z = mul(self.linear2(), &z);
                rastrigin_sum(&z)
            }
            16 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_osz_vec(&mut z);
                let z = mul(self.linear2(), &z);
                let f0: f64 = (0..12).map(|k| 0.5f64.powi(k) * (2.0 * PI * 3f64.powi(k) * 0.5).cos()).sum();
                let mut acc = 0.0;
                for v in &z {
                    for k in 0..12 {
                        acc += 0.5f64.powi(k) * (2.0 * PI * 3f64.powi(k) * (v + 0.5)).cos();
                    }
                }
                10.0 * (acc / df - f0).powi(3) + 10.0 / df * f_pen(x)
            }
            17 | 18 => {
                let mut z = mul(self.rot(), &self.shifted(x));
                t_asy(&mut z, 0.5);
                let z = mul(self.linear2(), &z);
                schaffer(&z) + 10.0 * f_pen(x)
            }
            19 => {
                let c = (df.sqrt() / 8.0).max(1.0);
                let z: Vec<f64> = mul(self.rot(), x).iter().map(|v| c * v + 0.5).collect();
                let sum: f64 = z
                    .windows(2)
                    .map(|w| {
                        let s = 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2);
                        s / 4000.0 - s.cos()
                    })
                    .sum();
                10.0 / (df - 1.0) * sum + 10.0
            }
            20 => {
                let two_abs: Vec<f64> = self.x_opt.iter().map(|v| 2.0 * v.abs()).collect();
                let xh: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, o)| 2.0 * o.signum() * a).collect();
                let mut zh = xh.clone();
                for i in 1..d {
                    zh[i] = xh[i] + 0.25 * (xh[i - 1] - two_abs[i - 1]);
                }
                let lam = lambda(10.0, d);
                let z: Vec<f64> = (0..d).map(|i| 100.0 * (lam[i] * (zh[i] - two_abs[i]) + two_abs[i])).collect();
                let scaled: Vec<f64> = z.iter().map(|v| v / 100.0).collect();
                -z.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>() / (100.0 * df) + 4.189_828_872_724_339 + 100.0 * f_pen(&scaled)
            }
            21 | 22 => {
                let peaks = self.land.peaks.as_ref().expect("gallagher instance has peaks");
                let rx = mul(self.rot(), x);
                let mut best = f64::NEG_INFINITY;
                for ((w, c), s) in peaks.weights.iter().zip(&peaks.centers).zip(&peaks.scales) {
                    let q: f64 = rx.iter().zip(c).zip(s).map(|((a, b), si)| si * (a - b) * (a - b)).sum();
                    best = best.max(w * (-q / (2.0 * df)).exp());
                }
                t_osz(10.0 - best).powi(2) + f_pen(x)
            }
            23 => {
                let z = mul(self.linear(), &self.shifted(x));
                let expo = 10.0 / df.powf(1.2);
                let mut prod = 1.0;
                for (i, v) in z.iter().enumerate() {
                    let mut s = 0.0;
                    for j in 1..=32 {
                        let p = 2f64.powi(j) * v;
                        s += (p - p.round()).abs() / 2f64.powi(j);
                    }
                    prod *= (1.0 + (i + 1) as f64 * s).powf(expo);
                }
                10.0 / (df * df) * prod - 10.0 / (df * df) + f_pen(x)
            }
            24 => {
                let mu0 = 2.5;
                let dd = 1.0;
                let s = 1.0 - 1.0 / (2.0 * (df + 20.0).sqrt() - 8.2);
                let mu1 = -((mu0 * mu0 - dd) / s).sqrt();
                let xh: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, o)| 2.0 * o.signum() * a).collect();
                let centered: Vec<f64> = xh.iter().map(|v| v - mu0).collect();
                let z = mul(self.linear(), &centered);
                let a: f64 = xh.iter().map(|v| (v - mu0).powi(2)).sum();
                let b: f64 = dd * df + s * xh.iter().map(|v| (v - mu1).powi(2)).sum::<f64>();
                a.min(b) + 10.0 * (df - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>()) + 1e4 * f_pen(x)
            }
            _ => unreachable!("fid validated at construction"),
        }
    }
}
