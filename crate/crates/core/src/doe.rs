//! Initial designs and quasi-random sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::objective::Bounds;
use crate::seed;

/// An `n × dim` design inside a box.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub points: Vec<Vec<f64>>,
    pub bounds: Bounds,
    pub seed: u64,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Seeded Latin hypercube: along every coordinate the `n` points occupy the
/// `n` equal-width strata exactly once.
pub fn latin_hypercube(n: usize, dim: usize, bounds: &Bounds, seed: u64) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::invalid("latin hypercube needs at least one point"));
    }
    if dim == 0 || bounds.dim() != dim {
        return Err(Error::invalid(format!("dimension {dim} does not match bounds of dimension {}", bounds.dim())));
    }
    let mut rng = seed::rng(seed);
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..dim {
        strata.shuffle(&mut rng);
        let (lo, w) = (bounds.lower()[j], bounds.width(j));
        for (i, &k) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            let v = lo + (k as f64 + u) / n as f64 * w;
            // rounding can push the last stratum onto the upper edge
            points[i][j] = v.min(bounds.upper()[j]);
        }
    }
    Ok(DesignMatrix { points, bounds: bounds.clone(), seed })
}

/// `n` uniform random points in the box.
pub fn uniform<R: Rng>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..bounds.dim()).map(|j| rng.random_range(bounds.lower()[j]..=bounds.upper()[j])).collect())
        .collect()
}

const BITS: usize = 32;

/// Initial direction numbers `m_1..m_s` of the first dimensions.
const INITIAL_M: [&[u32]; 8] = [
    &[],
    &[1],
    &[1, 1],
    &[1, 1, 1],
    &[1, 3, 1],
    &[1, 1, 3, 3],
    &[1, 3, 5, 13],
    &[1, 1, 5, 5, 17],
];

fn poly_mulmod(a: u64, b: u64, p: u64, deg: u32) -> u64 {
    let mut r = 0u64;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a >> deg & 1 == 1 {
            a ^= p;
        }
    }
    r
}

fn poly_powmod_x(e: u64, p: u64, deg: u32) -> u64 {
    let mut result = 1u64;
    let mut base = 2u64; // the polynomial `x`
    if deg == 1 {
        base = 2 ^ p;
    }
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            result = poly_mulmod(result, base, p, deg);
        }
        base = poly_mulmod(base, base, p, deg);
        e >>= 1;
    }
    result
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n.is_multiple_of(f) {
            out.push(f);
            while n.is_multiple_of(f) {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn is_primitive(p: u64, deg: u32) -> bool {
    if p & 1 == 0 {
        return false;
    }
    let order = (1u64 << deg) - 1;
    if poly_powmod_x(order, p, deg) != 1 {
        return false;
    }
    prime_factors(order).into_iter().all(|q| poly_powmod_x(order / q, p, deg) != 1)
}

/// Primitive polynomials over GF(2) in (degree, middle-coefficient) order,
/// as `(degree, a)` with the leading and constant terms implicit.
fn primitive_polynomials(count: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(count);
    let mut deg = 1;
    while out.len() < count {
        for a in 0..(1u32 << (deg - 1)) {
            let p = (1u64 << deg) | (u64::from(a) << 1) | 1;
            if is_primitive(p, deg) {
                out.push((deg, a));
                if out.len() == count {
                    break;
                }
            }
        }
        deg += 1;
    }
    out
}

/// Direction numbers `v_1..v_32` (left-aligned) for each dimension.
fn direction_numbers(dim: usize) -> Vec<[u32; BITS]> {
    let polys = primitive_polynomials(dim.saturating_sub(1));
    // fixed stream for the dimensions past the tabulated ones
    let mut rng = seed::rng(0x5eed_d1ec);
    let mut dirs = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1u32 << (BITS - 1 - k);
    }
    dirs.push(first);
    for j in 1..dim {
        let (s, a) = polys[j - 1];
        let s = s as usize;
        let m: Vec<u32> = if j < INITIAL_M.len() {
            INITIAL_M[j].to_vec()
        } else {
            (1..=s).map(|k| (rng.random_range(0..(1u32 << (k - 1))) << 1) | 1).collect()
        };
        let mut v = [0u32; BITS];
        for k in 0..s.min(BITS) {
            v[k] = m[k] << (BITS - 1 - k);
        }
        for k in s..BITS {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for l in 1..s {
                if (a >> (s - 1 - l)) & 1 == 1 {
                    x ^= v[k - l];
                }
            }
            v[k] = x;
        }
        dirs.push(v);
    }
    dirs
}

/// Random lower-triangular binary matrix with unit diagonal, stored as the
/// image of each bit position (bit 31 is the most significant digit).
fn scramble_matrix<R: Rng>(rng: &mut R) -> [u32; BITS] {
    let mut cols = [0u32; BITS];
    for (c, col) in cols.iter_mut().enumerate() {
        // column c maps the digit at depth c onto depths c..BITS
        let mut bits = 1u32 << (BITS - 1 - c);
        for r in c + 1..BITS {
            if rng.random_bool(0.5) {
                bits |= 1u32 << (BITS - 1 - r);
            }
        }
        *col = bits;
    }
    cols
}

fn apply_matrix(m: &[u32; BITS], v: u32) -> u32 {
    let mut out = 0;
    for (c, col) in m.iter().enumerate() {
        if (v >> (BITS - 1 - c)) & 1 == 1 {
            out ^= col;
        }
    }
    out
}

/// `n` points of a scrambled Sobol sequence in `[0, 1)^dim`.
///
/// Scrambling is a seeded random linear matrix scramble of the direction
/// numbers followed by a seeded digital shift, so every seed gives a
/// different base-2 digital net with the same stratification properties.
pub fn low_discrepancy_sequence(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    if n == 0 || dim == 0 {
        return vec![Vec::new(); n];
    }
    let mut rng = seed::rng(seed);
    let dirs = direction_numbers(dim);
    let scrambled: Vec<([u32; BITS], u32)> = dirs
        .iter()
        .map(|v| {
            let m = scramble_matrix(&mut rng);
            let mut out = [0u32; BITS];
            for (o, &d) in out.iter_mut().zip(v.iter()) {
                *o = apply_matrix(&m, d);
            }
            (out, rng.random::<u32>())
        })
        .collect();
    let scale = 1.0 / (1u64 << BITS) as f64;
    (0..n)
        .map(|i| {
            let idx = i as u64;
            scrambled
                .iter()
                .map(|(v, shift)| {
                    let mut x = *shift;
                    for (k, &vk) in v.iter().enumerate() {
                        if (idx >> k) & 1 == 1 {
                            x ^= vk;
                        }
                    }
                    // centre of the finest cell keeps points off the cube faces
                    (f64::from(x) + 0.5) * scale
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_point_in_box() {
        let b = Bounds::uniform(3, -5.0, 5.0);
        let d = latin_hypercube(1, 3, &b, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert!(b.contains(&d.points[0]));
    }

    #[test]
    fn quartiles_in_one_dimension() {
        let b = Bounds::unit(1);
        let d = latin_hypercube(4, 1, &b, 42).unwrap();
        let mut xs: Vec<f64> = d.points.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, x) in xs.iter().enumerate() {
            assert!(*x >= k as f64 / 4.0 && *x < (k + 1) as f64 / 4.0);
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(matches!(latin_hypercube(0, 2, &Bounds::unit(2), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic_designs() {
        let b = Bounds::uniform(4, -5.0, 5.0);
        assert_eq!(latin_hypercube(9, 4, &b, 3).unwrap(), latin_hypercube(9, 4, &b, 3).unwrap());
        assert_eq!(low_discrepancy_sequence(20, 5, 8), low_discrepancy_sequence(20, 5, 8));
        assert_ne!(low_discrepancy_sequence(20, 5, 8), low_discrepancy_sequence(20, 5, 9));
    }

    proptest! {
        #[test]
        fn lhs_stratification(n in 1usize..40, dim in 1usize..6, seed in any::<u64>()) {
            let b = Bounds::new(vec![-2.0; dim], vec![3.0; dim]).unwrap();
            let d = latin_hypercube(n, dim, &b, seed).unwrap();
            for j in 0..dim {
                let mut seen = vec![false; n];
                for p in &d.points {
                    prop_assert!(b.contains(p));
                    let k = (((p[j] + 2.0) / 5.0) * n as f64).floor() as usize;
                    let k = k.min(n - 1);
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                }
            }
        }
    }

    #[test]
    fn first_polynomials_match_known_table() {
        // x+1, x^2+x+1, x^3+x+1, x^3+x^2+1, x^4+x+1, x^4+x^3+1
        assert_eq!(primitive_polynomials(6), vec![(1, 0), (2, 1), (3, 1), (3, 2), (4, 1), (4, 4)]);
        // 2^9 - 1 = 511 has phi(511) / 9 = 48 primitive polynomials of degree 9
        let all = primitive_polynomials(200);
        assert_eq!(all.iter().filter(|(d, _)| *d == 9).count(), 48);
    }

    #[test]
    fn two_points_are_distinct() {
        let p = low_discrepancy_sequence(2, 1, 0);
        assert_ne!(p[0][0], p[1][0]);
        assert!(p.iter().all(|x| x[0] >= 0.0 && x[0] <= 1.0));
    }

    #[test]
    fn balanced_quadrants() {
        let pts = low_discrepancy_sequence(128, 2, 17);
        let mut counts = [0usize; 4];
        for p in &pts {
            counts[(p[0] >= 0.5) as usize * 2 + (p[1] >= 0.5) as usize] += 1;
        }
        for c in counts {
            assert!((16..=48).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn first_points_form_a_stratified_net() {
        // a base-2 digital net: the first 2^k points hit every dyadic interval
        // of length 2^-k exactly once in each coordinate
        let pts = low_discrepancy_sequence(64, 12, 5);
        for j in 0..12 {
            let mut seen = [false; 64];
            for p in &pts {
                let k = (p[j] * 64.0) as usize;
                assert!(!seen[k], "dimension {j}");
                seen[k] = true;
            }
        }
    }

    /// Warnock's closed form for the L2 star discrepancy.
    fn l2_star(points: &[Vec<f64>]) -> f64 {
        let n = points.len() as f64;
        let d = points[0].len() as i32;
        let a = 3f64.powi(-d);
        let b: f64 = points.iter().map(|p| p.iter().map(|x| (1.0 - x * x) / 2.0).product::<f64>()).sum::<f64>() * 2.0 / n;
        let mut c = 0.0;
        for p in points {
            for q in points {
                c += p.iter().zip(q).map(|(x, y)| 1.0 - x.max(*y)).product::<f64>();
            }
        }
        (a - b + c / (n * n)).sqrt()
    }

    #[test]
    fn lower_discrepancy_than_uniform() {
        let mut rng = seed::rng(1);
        for &(n, d) in &[(64usize, 2usize), (128, 5), (256, 10)] {
            let mut sobol = 0.0;
            let mut random = 0.0;
            for s in 0..5 {
                sobol += l2_star(&low_discrepancy_sequence(n, d, s));
                random += l2_star(&uniform(n, &Bounds::unit(d), &mut rng));
            }
            assert!(sobol < random, "n={n} d={d}: {sobol} vs {random}");
        }
    }
}
