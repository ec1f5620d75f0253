//! Synthetic multi-level functional data: Gaussian-process latent curves,
//! Poisson replicate surrogates, two error-free covariates, and a logistic outcome.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};

use crate::data::{CountArray, Curves, MultiLevelSample};
use crate::error::{Error, Result};
use crate::grid::{integrate_product, FunctionalGrid};
use crate::kernel::{kernel_factor, CovarianceKernel};
use crate::link::expit;
use crate::rng::{self, substream};

/// True scalar coefficients of `(Z1, Z2)`.
pub const TRUE_ALPHA: [f64; 2] = [1.0, 2.0];
pub const Z1_MEAN: f64 = 2.0;
pub const Z2_PROB: f64 = 0.6;

/// Mean of the latent process, `1 / (1 + exp(8 (t - 0.5)))`.
pub fn latent_mean(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(8.0 * (t - 0.5)))
}

/// True functional coefficient `sin(2πt)`.
pub fn true_beta(t: f64) -> f64 {
    libm::sin(2.0 * PI * t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub subjects: usize,
    pub grid_size: usize,
    pub replicates: usize,
    pub sigma_x: f64,
    pub rho_x: f64,
    pub window: usize,
    pub seed: u64,
    pub monte_carlo: usize,
    pub basis_size: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            subjects: 500,
            grid_size: 50,
            replicates: 5,
            sigma_x: 2.0,
            rho_x: 0.5,
            window: 3,
            seed: 20240607,
            monte_carlo: 100,
            basis_size: crate::sofr::DEFAULT_BASIS_SIZE,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.subjects < 2 {
            return fail(format!("n must be >= 2, got {}", self.subjects));
        }
        if self.replicates < 2 {
            return fail(format!("J must be >= 2, got {}", self.replicates));
        }
        if self.window < 1 || self.window > self.grid_size {
            return fail(format!(
                "need T >= D >= 1, got T = {}, D = {}",
                self.grid_size, self.window
            ));
        }
        if self.grid_size < 2 {
            return fail(format!("T must be >= 2, got {}", self.grid_size));
        }
        if self.monte_carlo < 1 {
            return fail("R must be >= 1".into());
        }
        if self.basis_size < 4 {
            return fail(format!("K_n must be >= 4, got {}", self.basis_size));
        }
        CovarianceKernel::ar1(self.sigma_x, self.rho_x)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<FunctionalGrid> {
        FunctionalGrid::uniform(self.grid_size)
    }

    pub fn kernel(&self) -> Result<CovarianceKernel> {
        CovarianceKernel::ar1(self.sigma_x, self.rho_x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub config: ScenarioConfig,
    pub grid: FunctionalGrid,
    pub latent: Curves,
    pub counts: CountArray,
    pub covariates: Curves,
    pub outcome: Vec<u8>,
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: [f64; 2],
}

impl SimulatedDataset {
    pub fn to_sample(&self) -> MultiLevelSample {
        MultiLevelSample {
            grid: self.grid.clone(),
            subject_ids: (1..=self.outcome.len()).map(|i| format!("s{i:05}")).collect(),
            counts: self.counts.clone(),
            covariate_names: vec!["Z1".into(), "Z2".into()],
            covariates: self.covariates.clone(),
            outcome: self.outcome.clone(),
            latent: Some(self.latent.clone()),
            weights: None,
        }
    }
}

/// `X_i = μ_x + L z_i` with `L` the kernel's Cholesky factor.
pub fn sample_latent_curves(
    subjects: usize,
    kernel: &CovarianceKernel,
    grid: &FunctionalGrid,
    seed: u64,
) -> Result<Curves> {
    let factor = kernel_factor(kernel, grid)?;
    let mean: Vec<f64> = grid.points().iter().map(|&t| latent_mean(t)).collect();
    Ok(sample_with_factor(subjects, &factor, &mean, seed))
}

fn sample_with_factor(subjects: usize, factor: &DMatrix<f64>, mean: &[f64], seed: u64) -> Curves {
    let t = mean.len();
    let mut out = Curves::zeros(subjects, t);
    let mut z = vec![0.0; t];
    for i in 0..subjects {
        let mut rng = substream(seed, rng::LATENT, i as u64);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = out.row_mut(i);
        for l in 0..t {
            let mut acc = mean[l];
            for m in 0..=l {
                acc += factor[(l, m)] * z[m];
            }
            row[l] = acc;
        }
    }
    out
}

/// Independent Poisson counts with mean `exp(X_i(t))` for each replicate.
pub fn sample_surrogates(latent: &Curves, replicates: usize, seed: u64) -> Result<CountArray> {
    let (n, t) = (latent.rows(), latent.cols());
    let mut rates = vec![0.0; t];
    let mut counts = CountArray::new(n, replicates, t);
    for i in 0..n {
        for (r, &x) in rates.iter_mut().zip(latent.row(i)) {
            if !x.is_finite() {
                return Err(Error::InvalidData(format!("non-finite latent value {x}")));
            }
            if x > 700.0 {
                return Err(Error::IntensityOverflow { value: x });
            }
            *r = libm::exp(x);
        }
        let mut rng = substream(seed, rng::SURROGATE, i as u64);
        for j in 0..replicates {
            for (l, &rate) in rates.iter().enumerate() {
                let c = if rate < 1e-300 {
                    0
                } else {
                    let d = Poisson::new(rate).map_err(|_| Error::IntensityOverflow {
                        value: libm::log(rate),
                    })?;
                    let draw: f64 = d.sample(&mut rng);
                    draw as u64
                };
                counts.set(i, j, l, Some(c));
            }
        }
    }
    Ok(counts)
}

/// `Z1 ~ N(2, 1)`, `Z2 ~ Bernoulli(0.6)`.
pub fn sample_error_free_covariates(subjects: usize, seed: u64) -> Curves {
    let coin = Bernoulli::new(Z2_PROB).expect("valid probability");
    let mut out = Curves::zeros(subjects, 2);
    for i in 0..subjects {
        let mut rng = substream(seed, rng::COVARIATE, i as u64);
        let z: f64 = StandardNormal.sample(&mut rng);
        out.set(i, 0, Z1_MEAN + z);
        out.set(i, 1, if coin.sample(&mut rng) { 1.0 } else { 0.0 });
    }
    out
}

/// Linear predictor `∫ β X_i + Z_iᵀα` for every subject.
pub fn linear_predictor(
    latent: &Curves,
    covariates: &Curves,
    grid: &FunctionalGrid,
    beta: &[f64],
    alpha: &[f64],
) -> Result<Vec<f64>> {
    if covariates.cols() != alpha.len() {
        return Err(Error::LengthMismatch { expected: alpha.len(), found: covariates.cols() });
    }
    (0..latent.rows())
        .map(|i| {
            let functional = integrate_product(beta, latent.row(i), grid)?;
            let scalar: f64 = covariates.row(i).iter().zip(alpha).map(|(z, a)| z * a).sum();
            Ok(functional + scalar)
        })
        .collect()
}

/// Bernoulli outcomes with `P(Y = 1) = expit(η)`; returns `(Y, η)`.
pub fn sample_outcomes(
    latent: &Curves,
    covariates: &Curves,
    grid: &FunctionalGrid,
    seed: u64,
) -> Result<(Vec<u8>, Vec<f64>)> {
    let beta: Vec<f64> = grid.points().iter().map(|&t| true_beta(t)).collect();
    let eta = linear_predictor(latent, covariates, grid, &beta, &TRUE_ALPHA)?;
    let y = eta
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut rng = substream(seed, rng::OUTCOME, i as u64);
            let p = expit(e);
            u8::from(Bernoulli::new(p).expect("probability in [0, 1]").sample(&mut rng))
        })
        .collect();
    Ok((y, eta))
}

/// Full dataset for one replicate; bit-identical for equal configs.
pub fn make_dataset(config: &ScenarioConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let grid = config.grid()?;
    let latent = sample_latent_curves(config.subjects, &config.kernel()?, &grid, config.seed)?;
    let counts = sample_surrogates(&latent, config.replicates, config.seed)?;
    let covariates = sample_error_free_covariates(config.subjects, config.seed);
    let (outcome, eta) = sample_outcomes(&latent, &covariates, &grid, config.seed)?;
    let beta = grid.points().iter().map(|&t| true_beta(t)).collect();
    Ok(SimulatedDataset {
        config: config.clone(),
        grid,
        latent,
        counts,
        covariates,
        outcome,
        eta,
        beta,
        alpha: TRUE_ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig { subjects: 100, grid_size: 50, replicates: 5, ..Default::default() }
    }

    #[test]
    fn mean_curve_midpoint() {
        assert_eq!(latent_mean(0.5), 0.5);
    }

    #[test]
    fn degenerate_process_equals_mean() {
        let grid = FunctionalGrid::uniform(20).unwrap();
        let k = CovarianceKernel::ar1(0.0, 0.5).unwrap();
        let x = sample_latent_curves(7, &k, &grid, 3).unwrap();
        for i in 0..7 {
            for (l, &t) in grid.points().iter().enumerate() {
                assert_eq!(x.get(i, l), latent_mean(t));
            }
        }
    }

    #[test]
    fn latent_variance_and_lag_one_correlation() {
        let grid = FunctionalGrid::uniform(10).unwrap();
        let k = CovarianceKernel::ar1(2.0, 0.5).unwrap();
        let n = 20_000;
        let x = sample_latent_curves(n, &k, &grid, 11).unwrap();
        let centered = |i: usize, l: usize| x.get(i, l) - latent_mean(grid.points()[l]);
        for l in 0..10 {
            let var = (0..n).map(|i| centered(i, l).powi(2)).sum::<f64>() / n as f64;
            assert!((var - 4.0).abs() < 0.15, "Var X(t_{l}) = {var}");
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for l in 0..9 {
                num += centered(i, l) * centered(i, l + 1);
                den += 0.5 * (centered(i, l).powi(2) + centered(i, l + 1).powi(2));
            }
        }
        assert!((num / den - 0.5).abs() < 0.02, "lag-1 correlation {}", num / den);
    }

    #[test]
    fn surrogate_moments() {
        let zeros = Curves::zeros(1, 1);
        let w = sample_surrogates(&zeros, 10_000, 5).unwrap();
        let mean = (0..10_000).map(|j| w.get(0, j, 0).unwrap() as f64).sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.05);

        let low = Curves::from_vec(1, 1, vec![-50.0]).unwrap();
        let w = sample_surrogates(&low, 1000, 5).unwrap();
        assert!((0..1000).all(|j| w.get(0, j, 0) == Some(0)));

        let two = Curves::from_vec(1, 1, vec![2.0]).unwrap();
        let w = sample_surrogates(&two, 10_000, 6).unwrap();
        let v: Vec<f64> = (0..10_000).map(|j| w.get(0, j, 0).unwrap() as f64).collect();
        let m = v.iter().sum::<f64>() / 1e4;
        let var = v.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (1e4 - 1.0);
        assert!((var - libm::exp(2.0)).abs() < 0.5, "variance {var}");
    }

    #[test]
    fn overflow_is_reported() {
        let x = Curves::from_vec(1, 1, vec![701.0]).unwrap();
        assert_eq!(sample_surrogates(&x, 1, 0), Err(Error::IntensityOverflow { value: 701.0 }));
    }

    #[test]
    fn zero_predictor_gives_even_odds() {
        let grid = FunctionalGrid::uniform(50).unwrap();
        let x = Curves::zeros(1, 50);
        let z = Curves::zeros(1, 2);
        let (_, eta) = sample_outcomes(&x, &z, &grid, 1).unwrap();
        assert_eq!(expit(eta[0]), 0.5);
    }

    #[test]
    fn constant_curves_carry_no_functional_signal() {
        let grid = FunctionalGrid::uniform(50).unwrap();
        let x = Curves::from_vec(1, 50, vec![3.7; 50]).unwrap();
        let z = Curves::from_vec(1, 2, vec![1.5, 1.0]).unwrap();
        let (_, eta) = sample_outcomes(&x, &z, &grid, 1).unwrap();
        assert!((eta[0] - 3.5).abs() < 1e-8);
    }

    #[test]
    fn covariate_distributions() {
        let z = sample_error_free_covariates(50_000, 9);
        let m1 = z.column(0).iter().sum::<f64>() / 5e4;
        let m2 = z.column(1).iter().sum::<f64>() / 5e4;
        assert!((m1 - 2.0).abs() < 0.02, "Z1 mean {m1}");
        assert!((m2 - 0.6).abs() < 0.01, "Z2 mean {m2}");
    }

    #[test]
    fn outcome_calibration() {
        let grid = FunctionalGrid::uniform(10).unwrap();
        let n = 400_000;
        let x = Curves::zeros(n, 10);
        let mut z = Curves::zeros(n, 2);
        for i in 0..n {
            // spread η over [-2.5, 2.5]
            z.set(i, 0, -2.5 + 5.0 * (i as f64 + 0.5) / n as f64);
        }
        let (y, eta) = sample_outcomes(&x, &z, &grid, 4).unwrap();
        let mut bins = [(0.0f64, 0.0f64, 0usize); 50];
        for (yi, e) in y.iter().zip(&eta) {
            let b = (((e + 2.5) / 0.1) as usize).min(49);
            bins[b].0 += *yi as f64;
            bins[b].1 += expit(*e);
            bins[b].2 += 1;
        }
        for (obs, exp, c) in bins {
            assert!(((obs - exp) / c as f64).abs() < 0.03);
        }
    }

    #[test]
    fn dataset_is_deterministic_and_consistent() {
        let cfg = small();
        let a = make_dataset(&cfg).unwrap();
        let b = make_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.latent.rows(), a.latent.cols()), (100, 50));
        assert_eq!((a.counts.subjects(), a.counts.replicates(), a.counts.times()), (100, 5, 50));
        assert_eq!(a.outcome.len(), 100);
        let eta = linear_predictor(&a.latent, &a.covariates, &a.grid, &a.beta, &a.alpha).unwrap();
        for (e, f) in eta.iter().zip(&a.eta) {
            assert!((e - f).abs() < 1e-10);
        }
        let other = make_dataset(&ScenarioConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
        assert_ne!(a.outcome, other.outcome);
    }

    #[test]
    fn invalid_configs() {
        assert!(make_dataset(&ScenarioConfig { replicates: 1, ..small() }).is_err());
        assert!(make_dataset(&ScenarioConfig { subjects: 1, ..small() }).is_err());
        assert!(make_dataset(&ScenarioConfig { window: 51, ..small() }).is_err());
    }
}
