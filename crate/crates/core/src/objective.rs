//! What a solver needs to know about the function it minimizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("bounds need matching, non-empty lower and upper vectors"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("every bound interval must be finite with lower < upper"));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Bounds { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn unit(dim: usize) -> Self {
        Self::uniform(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &v)| v.clamp(self.lower[i], self.upper[i])).collect()
    }

    /// Maps a point of the box to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &v)| (v - self.lower[i]) / self.width(i)).collect()
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &v)| self.lower[i] + v * self.width(i)).collect()
    }
}

/// A black-box function over a box, minimized by every solver.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn bounds(&self) -> &Bounds;

    /// Value at `x`; callers pass in-bounds points of length `dim`.
    fn evaluate(&self, x: &[f64]) -> f64;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    bounds: Bounds,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(bounds: Bounds, f: F) -> Self {
        FnObjective { bounds, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_round_trip() {
        let b = Bounds::new(vec![-5.0, 0.0], vec![5.0, 2.0]).unwrap();
        let x = [1.5, 0.25];
        let back = b.from_unit(&b.to_unit(&x));
        assert!((back[0] - 1.5).abs() < 1e-15 && (back[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(Bounds::new(vec![1.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }
}
