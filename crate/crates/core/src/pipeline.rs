//! Reconstruction followed by the spline logistic fit.

use alloc::vec::Vec;

use crate::data::MultiLevelSample;
use crate::error::{Error, Result};
use crate::glmm::GlmmOptions;
use crate::mem::{average_reconstruct, mp_mem, naive_reconstruct, up_mem, Method, ReconstructedCovariate};
use crate::pace::{pace_reconstruct, DEFAULT_FVE};
use crate::sofr::{estimate_with_basis, SofrFit, DEFAULT_BASIS_SIZE, DEFAULT_DEGREE};
use crate::spline::build_basis;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    /// Window size for the multi-point fit.
    pub window: usize,
    pub basis_size: usize,
    pub fve: f64,
    pub glmm: GlmmOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::MpMem,
            window: 3,
            basis_size: DEFAULT_BASIS_SIZE,
            fve: DEFAULT_FVE,
            glmm: GlmmOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFit {
    pub reconstruction: ReconstructedCovariate,
    pub fit: SofrFit,
}

/// Stage one for any method; `Oracle` passes the true curves through.
pub fn reconstruct(sample: &MultiLevelSample, cfg: &PipelineConfig) -> Result<ReconstructedCovariate> {
    let weights = sample.weights.as_deref();
    match cfg.method {
        Method::Oracle => sample
            .latent
            .as_ref()
            .map(|x| ReconstructedCovariate::new(Method::Oracle, x.clone()))
            .ok_or_else(|| Error::InvalidConfig("the oracle method needs a dataset carrying the true latent curves".into())),
        Method::UpMem => up_mem(&sample.counts, weights, &cfg.glmm),
        Method::MpMem => mp_mem(&sample.counts, cfg.window, weights, &cfg.glmm),
        Method::Pace => pace_reconstruct(&sample.counts, &sample.grid, cfg.fve),
        Method::Average => average_reconstruct(&sample.counts),
        Method::Naive => naive_reconstruct(&sample.counts),
    }
}

/// Both stages on one sample.
pub fn fit(sample: &MultiLevelSample, cfg: &PipelineConfig) -> Result<PipelineFit> {
    let reconstruction = reconstruct(sample, cfg)?;
    let fit = second_stage(sample, &reconstruction, cfg.basis_size)?;
    Ok(PipelineFit { reconstruction, fit })
}

/// Stage two on a given reconstruction.
pub fn second_stage(sample: &MultiLevelSample, rec: &ReconstructedCovariate, basis_size: usize) -> Result<SofrFit> {
    let basis = build_basis(&sample.grid, basis_size, DEFAULT_DEGREE)?;
    estimate_with_basis(
        &rec.values,
        &sample.grid,
        &basis,
        &sample.covariates,
        &sample.outcome,
        sample.weights.as_deref(),
    )
}

/// Names of the scalar coefficients: the intercept then each covariate.
pub fn scalar_names(sample: &MultiLevelSample) -> Vec<alloc::string::String> {
    core::iter::once("Intercept".into()).chain(sample.covariate_names.iter().cloned()).collect()
}
