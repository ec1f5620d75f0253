use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Curves;
use crate::error::{Error, Result};
use crate::grid::FunctionalGrid;

/// B-spline basis on an open-uniform knot vector over [0, 1], evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    degree: usize,
    knots: Vec<f64>,
    evaluation: Curves,
}

impl SplineBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.evaluation.cols()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `T x K_n` matrix of `b_k(t_l)`.
    pub fn evaluation(&self) -> &Curves {
        &self.evaluation
    }

    /// All basis functions at a single point of [0, 1].
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        basis_row(&self.knots, self.degree, self.size(), t)
    }

    /// `Σ_k ω_k b_k(t_l)` on the grid.
    pub fn combine(&self, coefficients: &[f64]) -> Vec<f64> {
        (0..self.evaluation.rows())
            .map(|l| self.evaluation.row(l).iter().zip(coefficients).map(|(b, w)| b * w).sum())
            .collect()
    }
}

pub fn build_basis(grid: &FunctionalGrid, size: usize, degree: usize) -> Result<SplineBasis> {
    if size < degree + 1 {
        return Err(Error::InvalidConfig(format!(
            "a degree-{degree} basis needs at least {} functions, got {size}",
            degree + 1
        )));
    }
    let intervals = size - degree;
    let mut knots = vec![0.0; degree + 1];
    for k in 1..intervals {
        knots.push(k as f64 / intervals as f64);
    }
    knots.extend(core::iter::repeat_n(1.0, degree + 1));
    let mut evaluation = Curves::zeros(grid.len(), size);
    for (l, &t) in grid.points().iter().enumerate() {
        evaluation.row_mut(l).copy_from_slice(&basis_row(&knots, degree, size, t));
    }
    Ok(SplineBasis { degree, knots, evaluation })
}

fn basis_row(knots: &[f64], degree: usize, size: usize, t: f64) -> Vec<f64> {
    let t = t.clamp(0.0, 1.0);
    // last span with knots[span] <= t < knots[span + 1]; t = 1 uses the final non-empty span
    let mut span = degree;
    while span + 1 < size && knots[span + 1] <= t {
        span += 1;
    }
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    let mut local = vec![0.0; degree + 1];
    local[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { local[r] / denom };
            local[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        local[j] = saved;
    }
    let mut row = vec![0.0; size];
    for (r, v) in local.into_iter().enumerate() {
        row[span - degree + r] = v;
    }
    row
}

/// `n x K_n` design with entries `∫ X̂_i(t) b_k(t) dt` (trapezoid rule).
pub fn functional_design(curves: &Curves, basis: &SplineBasis, grid: &FunctionalGrid) -> Result<Curves> {
    if curves.cols() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: curves.cols() });
    }
    if basis.evaluation.rows() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: basis.evaluation.rows() });
    }
    let k = basis.size();
    let q = grid.weights();
    let mut out = Curves::zeros(curves.rows(), k);
    for i in 0..curves.rows() {
        let x = curves.row(i);
        let row = out.row_mut(i);
        for (l, (&xv, &w)) in x.iter().zip(q).enumerate() {
            let a = xv * w;
            if a != 0.0 {
                for (r, b) in row.iter_mut().zip(basis.evaluation.row(l)) {
                    *r += a * b;
                }
            }
        }
    }
    Ok(out)
}
