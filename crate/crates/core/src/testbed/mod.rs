//! The 24 noiseless BBOB-style benchmark functions.
//!
//! A [`Problem`] is one seeded instance `(fid, dim, instance_id)` of a
//! function on `[-5, 5]^dim`. Instances differ by a random optimum location,
//! a random optimum value in `[-100, 100]` and, for non-separable functions,
//! random rotations. The formulas follow the usual BBOB definitions; the
//! random streams are this crate's own, so values do not match COCO
//! bit-for-bit.

mod functions;
pub mod transforms;

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::seed::{self, SeedHasher};

pub const NUM_FUNCTIONS: u32 = 24;
pub const LOWER: f64 = -5.0;
pub const UPPER: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Separable,
    LowModerateConditioning,
    HighConditioningUnimodal,
    MultimodalGlobalStructure,
    MultimodalWeakStructure,
}

impl Group {
    pub fn of(fid: u32) -> Option<Group> {
        Some(match fid {
            1..=5 => Group::Separable,
            6..=9 => Group::LowModerateConditioning,
            10..=14 => Group::HighConditioningUnimodal,
            15..=19 => Group::MultimodalGlobalStructure,
            20..=24 => Group::MultimodalWeakStructure,
            _ => return None,
        })
    }

    pub const ALL: [Group; 5] = [
        Group::Separable,
        Group::LowModerateConditioning,
        Group::HighConditioningUnimodal,
        Group::MultimodalGlobalStructure,
        Group::MultimodalWeakStructure,
    ];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::Separable => "separable",
            Group::LowModerateConditioning => "low-moderate-conditioning",
            Group::HighConditioningUnimodal => "high-conditioning-unimodal",
            Group::MultimodalGlobalStructure => "multimodal-global-structure",
            Group::MultimodalWeakStructure => "multimodal-weak-structure",
        };
        f.write_str(s)
    }
}

pub fn function_name(fid: u32) -> &'static str {
    match fid {
        1 => "sphere",
        2 => "ellipsoid-separable",
        3 => "rastrigin-separable",
        4 => "bueche-rastrigin",
        5 => "linear-slope",
        6 => "attractive-sector",
        7 => "step-ellipsoid",
        8 => "rosenbrock",
        9 => "rosenbrock-rotated",
        10 => "ellipsoid",
        11 => "discus",
        12 => "bent-cigar",
        13 => "sharp-ridge",
        14 => "different-powers",
        15 => "rastrigin",
        16 => "weierstrass",
        17 => "schaffers-f7",
        18 => "schaffers-f7-ill-conditioned",
        19 => "griewank-rosenbrock",
        20 => "schwefel",
        21 => "gallagher-101",
        22 => "gallagher-21",
        23 => "katsuura",
        24 => "lunacek-bi-rastrigin",
        _ => "unknown",
    }
}

/// Gallagher peak set.
#[derive(Debug, Clone)]
pub(crate) struct Peaks {
    weights: Vec<f64>,
    /// Peak centers, already rotated.
    centers: Vec<Vec<f64>>,
    /// Per-peak diagonal of the rotated quadratic form.
    scales: Vec<Vec<f64>>,
}

/// Instance data consumed by the function formulas.
#[derive(Debug, Clone, Default)]
pub(crate) struct Landscape {
    /// Main rotation `R`.
    rot: Option<DMatrix<f64>>,
    /// Pre-multiplied linear map, function specific (e.g. `Q Λ R`).
    linear: Option<DMatrix<f64>>,
    /// Second pre-multiplied map applied after a nonlinearity.
    linear2: Option<DMatrix<f64>>,
    peaks: Option<Peaks>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    fid: u32,
    dim: usize,
    instance_id: u64,
    bounds: Bounds,
    x_opt: Vec<f64>,
    f_opt: f64,
    group: Group,
    land: Landscape,
    /// Raw formula value at `x_opt`, subtracted so the optimum is exact.
    raw_at_opt: f64,
}

/// Builds instance `instance_id` of function `fid` in dimension `dim`.
pub fn make_problem(fid: u32, dim: usize, instance_id: u64) -> Result<Problem> {
    Problem::new(fid, dim, instance_id)
}

fn instance_seed(fid: u32, dim: usize, instance_id: u64) -> u64 {
    SeedHasher::new()
        .str("bbob-instance")
        .u64(u64::from(fid))
        .u64(dim as u64)
        .u64(instance_id)
        .finish()
}

fn uniform_vec<R: Rng>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(lo..=hi)).collect()
}

fn random_signs<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

impl Problem {
    pub fn new(fid: u32, dim: usize, instance_id: u64) -> Result<Self> {
        let group = Group::of(fid).ok_or_else(|| Error::invalid(format!("fid must be in 1..=24, got {fid}")))?;
        if dim < 2 {
            return Err(Error::invalid(format!("dim must be at least 2, got {dim}")));
        }
        let mut rng = seed::rng(instance_seed(fid, dim, instance_id));
        let f_opt = rng.random_range(-100.0..=100.0);
        let mut land = Landscape::default();
        let d = dim;

        let x_opt = match fid {
            5 => random_signs(&mut rng, d).into_iter().map(|s| 5.0 * s).collect(),
            4 => {
                let mut x = uniform_vec(&mut rng, d, -4.0, 4.0);
                for v in x.iter_mut().step_by(2) {
                    *v = v.abs();
                }
                x
            }
            8 => uniform_vec(&mut rng, d, -3.0, 3.0),
            9 | 19 => {
                let r = transforms::random_rotation(d, &mut rng);
                let c = (d as f64).sqrt() / 8.0;
                let c = c.max(1.0);
                let target = vec![0.5 / c; d];
                let x = transforms::mul(&r.transpose(), &target);
                land.rot = Some(r);
                x
            }
            20 => random_signs(&mut rng, d).into_iter().map(|s| s * 4.209_687_463_3 / 2.0).collect(),
            24 => random_signs(&mut rng, d).into_iter().map(|s| s * 2.5 / 2.0).collect(),
            21 => uniform_vec(&mut rng, d, -4.0, 4.0),
            22 => uniform_vec(&mut rng, d, -3.92, 3.92),
            _ => uniform_vec(&mut rng, d, -4.0, 4.0),
        };

        match fid {
            6 | 13 => {
                let r = transforms::random_rotation(d, &mut rng);
                let q = transforms::random_rotation(d, &mut rng);
                land.linear = Some(&q * transforms::scale_rows(&transforms::lambda(10.0, d), &r));
            }
            7 => {
                let r = transforms::random_rotation(d, &mut rng);
                let q = transforms::random_rotation(d, &mut rng);
                land.linear = Some(transforms::scale_rows(&transforms::lambda(10.0, d), &r));
                land.linear2 = Some(q);
            }
            10 | 11 | 12 | 14 => {
                land.rot = Some(transforms::random_rotation(d, &mut rng));
            }
            15 | 16 => {
                let r = transforms::random_rotation(d, &mut rng);
                let q = transforms::random_rotation(d, &mut rng);
                let alpha = if fid == 15 { 10.0 } else { 0.01 };
                land.linear2 = Some(&r * transforms::scale_rows(&transforms::lambda(alpha, d), &q));
                land.rot = Some(r);
            }
            17 | 18 => {
                let r = transforms::random_rotation(d, &mut rng);
                let q = transforms::random_rotation(d, &mut rng);
                let alpha = if fid == 17 { 10.0 } else { 1000.0 };
                land.linear2 = Some(transforms::scale_rows(&transforms::lambda(alpha, d), &q));
                land.rot = Some(r);
            }
            23 | 24 => {
                let r = transforms::random_rotation(d, &mut rng);
                let q = transforms::random_rotation(d, &mut rng);
                land.linear = Some(&q * transforms::scale_rows(&transforms::lambda(100.0, d), &r));
            }
            21 | 22 => {
                let r = transforms::random_rotation(d, &mut rng);
                land.peaks = Some(make_peaks(fid, d, &x_opt, &r, &mut rng));
                land.rot = Some(r);
            }
            _ => {}
        }

        let bounds = Bounds::uniform(dim, LOWER, UPPER);
        let mut p = Problem { fid, dim, instance_id, bounds, x_opt, f_opt, group, land, raw_at_opt: 0.0 };
        p.raw_at_opt = p.raw(&p.x_opt.clone());
        Ok(p)
    }

    pub fn fid(&self) -> u32 {
        self.fid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instance_id(&self) -> u64 {
        self.instance_id
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn name(&self) -> &'static str {
        function_name(self.fid)
    }

    /// Function value at `x`; out-of-box coordinates are clamped first.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!("expected a point of length {}, got {}", self.dim, x.len())));
        }
        Ok(self.eval_clamped(x))
    }

    fn eval_clamped(&self, x: &[f64]) -> f64 {
        let xc = self.bounds.clamp(x);
        self.raw(&xc) - self.raw_at_opt + self.f_opt
    }

    /// `y - f_opt`.
    pub fn target_gap(&self, y: f64) -> f64 {
        y - self.f_opt
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension does not match the problem");
        self.eval_clamped(x)
    }
}

fn make_peaks<R: Rng>(fid: u32, d: usize, x_opt: &[f64], rot: &DMatrix<f64>, rng: &mut R) -> Peaks {
    use rand::seq::SliceRandom;

    let (count, top_alpha, spread): (usize, f64, f64) = if fid == 21 { (101, 1000.0, 5.0) } else { (21, 1000.0 * 1000.0, 4.9) };
    let others = count - 1;
    let mut weights = vec![10.0];
    for i in 1..count {
        weights.push(1.1 + 8.0 * (i - 1) as f64 / (others - 1) as f64);
    }
    let mut alphas: Vec<f64> = (0..others).map(|j| 1000f64.powf(2.0 * j as f64 / (others - 1) as f64)).collect();
    alphas.shuffle(rng);
    alphas.insert(0, top_alpha);

    let mut centers = vec![transforms::mul(rot, x_opt)];
    for _ in 1..count {
        let y = uniform_vec(rng, d, -spread, spread);
        centers.push(transforms::mul(rot, &y));
    }
    let scales = alphas
        .iter()
        .map(|&a| {
            let mut diag = transforms::lambda(a, d);
            diag.shuffle(rng);
            let norm = a.powf(0.25);
            diag.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    Peaks { weights, centers, scales }
}
