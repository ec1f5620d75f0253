use alloc::format;
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::FunctionalGrid;

/// Covariance structure for the latent process (or its errors) over a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceKernel {
    /// `σ² ρ^lag`, lag in observation units.
    Ar1 { sigma: f64, rho: f64 },
    /// `σ² [ρ + (1 - ρ) 1{l = m}]`.
    CompoundSymmetry { sigma: f64, rho: f64 },
    Unstructured(DMatrix<f64>),
}

impl CovarianceKernel {
    pub fn ar1(sigma: f64, rho: f64) -> Result<Self> {
        check_params(sigma, rho)?;
        Ok(Self::Ar1 { sigma, rho })
    }

    pub fn compound_symmetry(sigma: f64, rho: f64) -> Result<Self> {
        check_params(sigma, rho)?;
        Ok(Self::CompoundSymmetry { sigma, rho })
    }

    /// Accepts a full matrix after checking symmetry and positive semi-definiteness.
    pub fn unstructured(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotPsd(format!(
                "matrix is {}x{}, not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = matrix.nrows();
        for l in 0..n {
            for m in 0..l {
                let (a, b) = (matrix[(l, m)], matrix[(m, l)]);
                if libm::fabs(a - b) > 1e-10 * (1.0 + libm::fabs(a)) {
                    return Err(Error::NotPsd(format!(
                        "asymmetric at ({l}, {m}): {a} vs {b}"
                    )));
                }
            }
        }
        let scale = (0..n).map(|l| matrix[(l, l)]).fold(0.0, f64::max);
        if cholesky_with_jitter(&matrix, 1e-8 * scale.max(1e-300)).is_none() {
            let min_eig = SymmetricEigen::new(matrix.clone())
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NotPsd(format!("smallest eigenvalue {min_eig:e}")));
        }
        Ok(Self::Unstructured(matrix))
    }

    /// Marginal variance scale used to size factorization jitter.
    pub fn scale(&self) -> f64 {
        match self {
            Self::Ar1 { sigma, .. } | Self::CompoundSymmetry { sigma, .. } => sigma * sigma,
            Self::Unstructured(m) => (0..m.nrows()).map(|l| m[(l, l)]).fold(0.0, f64::max),
        }
    }
}

fn check_params(sigma: f64, rho: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

/// Dense `T x T` covariance of the kernel evaluated on `grid`.
pub fn kernel_matrix(kernel: &CovarianceKernel, grid: &FunctionalGrid) -> Result<DMatrix<f64>> {
    let n = grid.len();
    match kernel {
        CovarianceKernel::Ar1 { sigma, rho } => {
            let var = sigma * sigma;
            Ok(DMatrix::from_fn(n, n, |l, m| {
                if l == m {
                    var
                } else {
                    var * libm::pow(*rho, grid.lag(l, m))
                }
            }))
        }
        CovarianceKernel::CompoundSymmetry { sigma, rho } => {
            let var = sigma * sigma;
            Ok(DMatrix::from_fn(n, n, |l, m| {
                if l == m {
                    var
                } else {
                    var * rho
                }
            }))
        }
        CovarianceKernel::Unstructured(m) => {
            if m.nrows() != n {
                return Err(Error::LengthMismatch { expected: n, found: m.nrows() });
            }
            Ok(m.clone())
        }
    }
}

/// Lower Cholesky factor, retrying with diagonal jitter growing by decades
/// up to `max_jitter`. A zero matrix factors to zero.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, max_jitter: f64) -> Option<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        return Some(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c.l());
    }
    let mut jitter = max_jitter * 1e-6;
    while jitter <= max_jitter * (1.0 + 1e-12) {
        let mut shifted = m.clone();
        for l in 0..m.nrows() {
            shifted[(l, l)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c.l());
        }
        jitter *= 10.0;
    }
    None
}

/// Cholesky factor of the kernel on the grid, jitter capped at `1e-8 σ²`.
pub fn kernel_factor(kernel: &CovarianceKernel, grid: &FunctionalGrid) -> Result<DMatrix<f64>> {
    let k = kernel_matrix(kernel, grid)?;
    cholesky_with_jitter(&k, 1e-8 * kernel.scale()).ok_or_else(|| {
        Error::NotPsd(format!("Cholesky failed with jitter up to {:e}", 1e-8 * kernel.scale()))
    })
}
