//! Stage two: spline-expanded scalar-on-function logistic regression fitted by
//! iteratively reweighted least squares.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::data::Curves;
use crate::error::{Error, Result};
use crate::grid::FunctionalGrid;
use crate::link::expit;
use crate::spline::{build_basis, functional_design, SplineBasis};

pub const DEFAULT_BASIS_SIZE: usize = 15;
pub const DEFAULT_DEGREE: usize = 3;
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    pub deviance_tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { max_iter: 100, score_tol: 1e-8, deviance_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SofrFit {
    pub intercept: f64,
    /// Spline coefficients of `β(t)`.
    pub omega: Vec<f64>,
    /// Coefficients of the error-free covariates.
    pub alpha: Vec<f64>,
    /// `β̂` on the analysis grid; empty when the fit was made on a bare design.
    pub beta_curve: Vec<f64>,
    /// Covariance of `(intercept, ω, α)` from the final IRLS weights.
    pub vcov: DMatrix<f64>,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted iteration, starting from the initial value.
    pub loglik_path: Vec<f64>,
}

impl SofrFit {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = vec![self.intercept];
        c.extend_from_slice(&self.omega);
        c.extend_from_slice(&self.alpha);
        c
    }

    /// `(intercept, α)`.
    pub fn coefficients_scalar(&self) -> Vec<f64> {
        let mut c = vec![self.intercept];
        c.extend_from_slice(&self.alpha);
        c
    }

    pub fn loglik(&self) -> f64 {
        *self.loglik_path.last().unwrap_or(&f64::NAN)
    }

    /// Standard errors of `(intercept, α)`.
    pub fn scalar_std_errors(&self) -> Vec<f64> {
        let k = self.omega.len();
        let mut idx = vec![0];
        idx.extend((0..self.alpha.len()).map(|a| 1 + k + a));
        idx.iter().map(|&i| libm::sqrt(self.vcov[(i, i)].max(0.0))).collect()
    }
}

/// Full design `[1, functional design, Z]`.
fn full_design(design: &Curves, covariates: &Curves) -> Result<DMatrix<f64>> {
    let n = design.rows();
    if covariates.rows() != n && !(covariates.cols() == 0) {
        return Err(Error::LengthMismatch { expected: n, found: covariates.rows() });
    }
    let (k, p) = (design.cols(), covariates.cols());
    Ok(DMatrix::from_fn(n, 1 + k + p, |i, c| {
        if c == 0 {
            1.0
        } else if c <= k {
            design.get(i, c - 1)
        } else {
            covariates.get(i, c - 1 - k)
        }
    }))
}

/// Weighted Bernoulli log-likelihood of coefficient vector `(intercept, ω, α)`.
pub fn logistic_loglik(
    design: &Curves,
    covariates: &Curves,
    outcome: &[u8],
    weights: Option<&[f64]>,
    coefficients: &[f64],
) -> Result<f64> {
    let x = full_design(design, covariates)?;
    let eta = &x * DVector::from_column_slice(coefficients);
    Ok(loglik_from_eta(eta.as_slice(), outcome, weights))
}

/// Score vector `Xᵀ W_obs (y - p)` at `(intercept, ω, α)`.
pub fn logistic_score(
    design: &Curves,
    covariates: &Curves,
    outcome: &[u8],
    weights: Option<&[f64]>,
    coefficients: &[f64],
) -> Result<Vec<f64>> {
    let x = full_design(design, covariates)?;
    let eta = &x * DVector::from_column_slice(coefficients);
    let resid = DVector::from_iterator(
        outcome.len(),
        eta.iter().enumerate().map(|(i, e)| obs_weight(weights, i) * (outcome[i] as f64 - expit(*e))),
    );
    Ok((x.transpose() * resid).iter().copied().collect())
}

fn obs_weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn loglik_from_eta(eta: &[f64], outcome: &[u8], weights: Option<&[f64]>) -> f64 {
    eta.iter()
        .zip(outcome)
        .enumerate()
        .map(|(i, (&e, &y))| {
            // y η − log(1 + e^η), stable in both tails
            let log1pexp = if e > 0.0 { e + libm::log1p(libm::exp(-e)) } else { libm::log1p(libm::exp(e)) };
            obs_weight(weights, i) * (y as f64 * e - log1pexp)
        })
        .sum()
}

fn check_outcome(outcome: &[u8], n: usize, weights: Option<&[f64]>) -> Result<()> {
    if outcome.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: outcome.len() });
    }
    if outcome.iter().any(|y| *y > 1) {
        return Err(Error::InvalidData("outcome must be 0/1".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: w.len() });
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidData("weights must be positive and finite".into()));
        }
    }
    Ok(())
}

fn rank_deficiency(x: &DMatrix<f64>) -> Option<Error> {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let gram = scaled.transpose() * &scaled;
    let eig = SymmetricEigen::new(gram);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if lmin > 1e-11 * lmax.max(1e-300) {
        return None;
    }
    let v = eig.eigenvectors.column(imin);
    let (column, _) = v.iter().enumerate().max_by(|a, b| libm::fabs(*a.1).total_cmp(&libm::fabs(*b.1)))?;
    let detail = v
        .iter()
        .enumerate()
        .filter(|(_, c)| libm::fabs(**c) > 1e-3)
        .map(|(j, c)| format!("{c:+.3}*x{j}"))
        .collect::<Vec<_>>()
        .join(" ");
    Some(Error::RankDeficient { column, detail })
}

/// IRLS (Newton–Raphson) for the logistic model with an intercept, step halving
/// on likelihood decrease.
pub fn fit_logistic(
    design: &Curves,
    covariates: &Curves,
    outcome: &[u8],
    weights: Option<&[f64]>,
    opts: &IrlsOptions,
) -> Result<SofrFit> {
    let n = design.rows();
    check_outcome(outcome, n, weights)?;
    let x = full_design(design, covariates)?;
    let q = x.ncols();
    if n <= q {
        return Err(Error::InvalidData(format!("need more than {q} subjects, got {n}")));
    }
    if let Some(err) = rank_deficiency(&x) {
        return Err(err);
    }
    let y = DVector::from_iterator(n, outcome.iter().map(|v| *v as f64));
    let obs_w = DVector::from_iterator(n, (0..n).map(|i| obs_weight(weights, i)));
    let ybar = obs_w.dot(&y) / obs_w.sum();
    let mut coef = DVector::zeros(q);
    coef[0] = libm::log(ybar.clamp(1e-6, 1.0 - 1e-6) / (1.0 - ybar.clamp(1e-6, 1.0 - 1e-6)));
    let mut eta = &x * &coef;
    let mut ll = loglik_from_eta(eta.as_slice(), outcome, weights);
    let mut path = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(q, q);
    let mut score_small = false;
    let mut flat_steps = 0;
    while iterations < opts.max_iter {
        let prob = eta.map(expit);
        let w = DVector::from_iterator(n, (0..n).map(|i| obs_w[i] * prob[i] * (1.0 - prob[i])));
        let resid = (&y - &prob).component_mul(&obs_w);
        let score = x.transpose() * &resid;
        let mut xw = x.clone();
        for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        info = x.transpose() * xw;
        let Some(chol) = Cholesky::new(info.clone()) else {
            break;
        };
        let step = chol.solve(&score);
        if score.amax() <= opts.score_tol {
            converged = true;
            score_small = true;
            // one last full Newton step; at this distance it is quadratically exact
            let trial = &coef + &step;
            let trial_eta = &x * &trial;
            let trial_ll = loglik_from_eta(trial_eta.as_slice(), outcome, weights);
            if trial_ll >= ll - 1e-12 * (libm::fabs(ll) + 1.0) {
                coef = trial;
                eta = trial_eta;
                ll = trial_ll;
            }
            let prob = eta.map(expit);
            let w = DVector::from_iterator(n, (0..n).map(|i| obs_w[i] * prob[i] * (1.0 - prob[i])));
            let mut xw = x.clone();
            for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
                row *= *wi;
            }
            info = x.transpose() * xw;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &coef + &step * scale;
            let trial_eta = &x * &trial;
            let trial_ll = loglik_from_eta(trial_eta.as_slice(), outcome, weights);
            if trial_ll >= ll - 1e-12 * (libm::fabs(ll) + 1.0) {
                let change = libm::fabs(trial_ll - ll) / (libm::fabs(ll) + 0.1);
                coef = trial;
                eta = trial_eta;
                ll = trial_ll;
                path.push(ll);
                accepted = true;
                // two consecutive negligible changes; the second is a polishing step
                if change <= opts.deviance_tol {
                    flat_steps += 1;
                    converged = flat_steps >= 2;
                } else {
                    flat_steps = 0;
                }
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        if !accepted || converged {
            if converged {
                let prob = eta.map(expit);
                let w = DVector::from_iterator(n, (0..n).map(|i| obs_w[i] * prob[i] * (1.0 - prob[i])));
                let mut xw = x.clone();
                for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
                    row *= *wi;
                }
                info = x.transpose() * xw;
            }
            break;
        }
    }
    let vcov = match Cholesky::new(info.clone()) {
        Some(c) => c.inverse(),
        None => DMatrix::from_element(q, q, f64::NAN),
    };
    // diverging coefficients while the score never vanished, or a perfect fit
    let perfect = -2.0 * ll / obs_w.sum() < 1e-4;
    let separated = coef.amax() > SEPARATION_BOUND && (!score_small || perfect);
    let k = design.cols();
    Ok(SofrFit {
        intercept: coef[0],
        omega: coef.rows(1, k).iter().copied().collect(),
        alpha: coef.rows(1 + k, q - 1 - k).iter().copied().collect(),
        beta_curve: Vec::new(),
        vcov,
        converged,
        separated,
        iterations,
        loglik_path: path,
    })
}

/// Basis, functional design and logistic fit for one reconstruction.
pub fn estimate(
    curves: &Curves,
    grid: &FunctionalGrid,
    covariates: &Curves,
    outcome: &[u8],
    weights: Option<&[f64]>,
    basis_size: usize,
) -> Result<SofrFit> {
    let basis = build_basis(grid, basis_size, DEFAULT_DEGREE)?;
    estimate_with_basis(curves, grid, &basis, covariates, outcome, weights)
}

pub fn estimate_with_basis(
    curves: &Curves,
    grid: &FunctionalGrid,
    basis: &SplineBasis,
    covariates: &Curves,
    outcome: &[u8],
    weights: Option<&[f64]>,
) -> Result<SofrFit> {
    let design = functional_design(curves, basis, grid)?;
    let mut fit = fit_logistic(&design, covariates, outcome, weights, &IrlsOptions::default())?;
    fit.beta_curve = basis.combine(&fit.omega);
    Ok(fit)
}
