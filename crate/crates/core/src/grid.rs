use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordered observation times on [0, 1] shared by every curve in a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl FunctionalGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(alloc::format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return Err(Error::InvalidGrid("points must lie in [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        let weights = trapezoid_weights(&points);
        Ok(Self { points, weights })
    }

    /// `len` equally spaced points from 0 to 1 inclusive.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidGrid(alloc::format!(
                "need at least 2 points, got {len}"
            )));
        }
        let step = 1.0 / (len - 1) as f64;
        let mut points: Vec<f64> = (0..len).map(|l| l as f64 * step).collect();
        points[len - 1] = 1.0;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid quadrature weights; `Σ w_l f(t_l)` approximates `∫ f`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Interval widths `t_{l+1} - t_l`.
    pub fn spacing(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Lag between two grid points in observation units, `|t - t'| (T - 1)`.
    pub fn lag(&self, l: usize, m: usize) -> f64 {
        let d = self.points[l] - self.points[m];
        libm::fabs(d) * (self.len() - 1) as f64
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.spacing();
        let first = h[0];
        h.iter().all(|x| libm::fabs(x - first) <= 1e-12)
    }
}

fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let mut w = alloc::vec![0.0; points.len()];
    for (l, pair) in points.windows(2).enumerate() {
        let half = 0.5 * (pair[1] - pair[0]);
        w[l] += half;
        w[l + 1] += half;
    }
    w
}

/// Trapezoid approximation of `∫ f(t) g(t) dt` over the grid.
pub fn integrate_product(f: &[f64], g: &[f64], grid: &FunctionalGrid) -> Result<f64> {
    check_len(f.len(), grid.len())?;
    check_len(g.len(), grid.len())?;
    Ok(f.iter()
        .zip(g)
        .zip(grid.weights())
        .map(|((a, b), w)| a * b * w)
        .sum())
}

pub(crate) fn check_len(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
