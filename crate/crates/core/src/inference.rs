//! Subject-level nonparametric bootstrap for point-wise bands of `β(t)` and
//! percentile intervals of the scalar coefficients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, Uniform};

use crate::data::MultiLevelSample;
use crate::error::{Error, Result};
use crate::pipeline::{fit, scalar_names, PipelineConfig, PipelineFit};
use crate::rng::{substream, BOOTSTRAP};

pub const MIN_RESAMPLES: usize = 50;
/// Redraws allowed for a resample whose outcomes are all equal.
pub const MAX_REDRAWS: usize = 10;
/// Largest tolerated share of failed resamples.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// One successful resample.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    pub index: usize,
    pub subjects: Vec<usize>,
    pub beta: Vec<f64>,
    pub scalars: Vec<f64>,
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapBands {
    pub level: f64,
    pub points: Vec<f64>,
    pub lower: Vec<f64>,
    pub estimate: Vec<f64>,
    pub upper: Vec<f64>,
    pub scalar_names: Vec<String>,
    pub scalar_lower: Vec<f64>,
    pub scalar_estimate: Vec<f64>,
    pub scalar_upper: Vec<f64>,
    pub draws: Vec<BootstrapDraw>,
    pub failed: usize,
    pub requested: usize,
}

impl BootstrapBands {
    pub fn mean_width(&self) -> f64 {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).sum::<f64>() / self.upper.len() as f64
    }
}

pub fn check_request(resamples: usize, level: f64) -> Result<()> {
    if resamples < MIN_RESAMPLES {
        return Err(Error::InvalidConfig(format!("need at least {MIN_RESAMPLES} bootstrap resamples, got {resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Draws resample `b` (redrawing when every outcome is equal) and refits both
/// stages; `None` when the resample is counted as failed.
pub fn bootstrap_draw(sample: &MultiLevelSample, cfg: &PipelineConfig, seed: u64, b: usize) -> Option<BootstrapDraw> {
    let n = sample.subjects();
    let mut rng = substream(seed, BOOTSTRAP, b as u64);
    let pick = Uniform::new(0, n).ok()?;
    for redraws in 0..=MAX_REDRAWS {
        let subjects: Vec<usize> = (0..n).map(|_| pick.sample(&mut rng)).collect();
        let first = sample.outcome[subjects[0]];
        if subjects.iter().all(|&i| sample.outcome[i] == first) {
            continue;
        }
        let resampled = sample.resample(&subjects);
        return match fit(&resampled, cfg) {
            Ok(out) => Some(BootstrapDraw {
                index: b,
                subjects,
                beta: out.fit.beta_curve.clone(),
                scalars: out.fit.coefficients_scalar(),
                redraws,
            }),
            Err(_) => None,
        };
    }
    None
}

/// Type-7 empirical quantile of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Percentile bands from the point fit and the successful draws.
pub fn summarize(
    sample: &MultiLevelSample,
    point: &PipelineFit,
    mut draws: Vec<BootstrapDraw>,
    requested: usize,
    level: f64,
) -> Result<BootstrapBands> {
    draws.sort_by_key(|d| d.index);
    let failed = requested - draws.len();
    if failed as f64 > MAX_FAILURE_RATE * requested as f64 || draws.is_empty() {
        return Err(Error::BootstrapFailures { failed, requested });
    }
    let (lo_p, hi_p) = ((1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0);
    let grid = point.fit.beta_curve.len();
    let column = |f: &dyn Fn(&BootstrapDraw) -> f64| -> Vec<f64> { draws.iter().map(f).collect() };
    let mut lower = Vec::with_capacity(grid);
    let mut upper = Vec::with_capacity(grid);
    for l in 0..grid {
        let v = column(&|d| d.beta[l]);
        lower.push(quantile(&v, lo_p));
        upper.push(quantile(&v, hi_p));
    }
    let estimate_scalars = point.fit.coefficients_scalar();
    let mut scalar_lower = Vec::new();
    let mut scalar_upper = Vec::new();
    for k in 0..estimate_scalars.len() {
        let v = column(&|d| d.scalars[k]);
        scalar_lower.push(quantile(&v, lo_p));
        scalar_upper.push(quantile(&v, hi_p));
    }
    Ok(BootstrapBands {
        level,
        points: sample.grid.points().to_vec(),
        lower,
        estimate: point.fit.beta_curve.clone(),
        upper,
        scalar_names: scalar_names(sample),
        scalar_lower,
        scalar_estimate: estimate_scalars,
        scalar_upper,
        draws,
        failed,
        requested,
    })
}

/// Sequential bootstrap; resample `b` uses its own random substream, so any
/// parallel driver calling [`bootstrap_draw`] reproduces these results.
pub fn bootstrap(
    sample: &MultiLevelSample,
    cfg: &PipelineConfig,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapBands> {
    check_request(resamples, level)?;
    let point = fit(sample, cfg)?;
    let draws: Vec<BootstrapDraw> = (0..resamples).filter_map(|b| bootstrap_draw(sample, cfg, seed, b)).collect();
    summarize(sample, &point, draws, resamples, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mem::Method;
    use crate::simulate::{make_dataset, ScenarioConfig};

    fn oracle_cfg() -> PipelineConfig {
        PipelineConfig { basis_size: 6, ..PipelineConfig::with_method(Method::Oracle) }
    }

    #[test]
    fn quantile_matches_type_seven() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!((quantile(&v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(check_request(49, 0.95).is_err());
        assert!(check_request(50, 1.0).is_err());
        assert!(check_request(50, 0.95).is_ok());
    }

    #[test]
    fn stores_every_draw_and_is_deterministic() {
        let data = make_dataset(&ScenarioConfig { subjects: 400, grid_size: 15, ..Default::default() }).unwrap();
        let sample = data.to_sample();
        let a = bootstrap(&sample, &oracle_cfg(), 50, 0.95, 9).unwrap();
        assert_eq!(a.draws.len(), 50);
        assert_eq!(a.failed, 0);
        let b = bootstrap(&sample, &oracle_cfg(), 50, 0.95, 9).unwrap();
        assert_eq!(a, b);
        for l in 0..a.lower.len() {
            let v: Vec<f64> = a.draws.iter().map(|d| d.beta[l]).collect();
            let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!((a.lower[l] - quantile(&v, 0.025)).abs() < 1e-12 * scale);
            assert!((a.upper[l] - quantile(&v, 0.975)).abs() < 1e-12 * scale);
            assert!(a.lower[l] <= a.upper[l]);
        }
        let inside = (0..a.lower.len()).filter(|&l| a.lower[l] <= a.estimate[l] && a.estimate[l] <= a.upper[l]).count();
        assert!(inside as f64 >= 0.95 * a.lower.len() as f64);
        assert_eq!(a.scalar_names, ["Intercept", "Z1", "Z2"]);
        assert!(a.mean_width() < 20.0, "{} {:?}", a.mean_width(), a.estimate);
    }

    #[test]
    fn constant_outcomes_fail_every_draw() {
        let data = make_dataset(&ScenarioConfig { subjects: 60, grid_size: 10, ..Default::default() }).unwrap();
        let mut sample = data.to_sample();
        sample.outcome = alloc::vec![1; 60];
        let point = fit(&data.to_sample(), &oracle_cfg()).unwrap();
        assert!(bootstrap_draw(&sample, &oracle_cfg(), 1, 0).is_none());
        assert_eq!(
            summarize(&sample, &point, Vec::new(), 50, 0.95),
            Err(Error::BootstrapFailures { failed: 50, requested: 50 })
        );
    }
}
