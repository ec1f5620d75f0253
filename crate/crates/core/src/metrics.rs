//! Monte Carlo summaries of replicate coefficient curves.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Curves;
use crate::error::{Error, Result};

fn check_shape(curves: &[Vec<f64>], len: usize) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::InvalidData("need at least one replicate curve".into()));
    }
    for c in curves {
        if c.len() != len {
            return Err(Error::LengthMismatch { expected: len, found: c.len() });
        }
    }
    Ok(())
}

/// Point-wise mean over replicates.
pub fn mean_curve(curves: &[Vec<f64>]) -> Result<Vec<f64>> {
    let len = curves.first().map_or(0, Vec::len);
    check_shape(curves, len)?;
    let r = curves.len() as f64;
    Ok((0..len).map(|l| curves.iter().map(|c| c[l]).sum::<f64>() / r).collect())
}

/// Grid-averaged squared bias of the replicate mean curve.
pub fn abias2(curves: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    check_shape(curves, truth.len())?;
    let bar = mean_curve(curves)?;
    Ok(bar.iter().zip(truth).map(|(b, t)| (b - t) * (b - t)).sum::<f64>() / truth.len() as f64)
}

/// Grid-averaged Monte Carlo variance with divisor `R`.
pub fn avar(curves: &[Vec<f64>]) -> Result<f64> {
    let bar = mean_curve(curves)?;
    let grid = bar.len() as f64;
    let total: f64 = curves
        .iter()
        .map(|c| c.iter().zip(&bar).map(|(v, b)| (v - b) * (v - b)).sum::<f64>() / grid)
        .sum();
    Ok(total / curves.len() as f64)
}

pub fn aimse(curves: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    Ok(abias2(curves, truth)? + avar(curves)?)
}

/// The same variance formula applied to each subject's reconstructed curve
/// across replicates, averaged over subjects.
pub fn covariate_avar(reconstructions: &[Curves]) -> Result<f64> {
    let first = reconstructions
        .first()
        .ok_or_else(|| Error::InvalidData("need at least one reconstruction".into()))?;
    let (n, times) = (first.rows(), first.cols());
    for r in reconstructions {
        if r.rows() != n || r.cols() != times {
            return Err(Error::InvalidData(format!(
                "reconstruction shapes differ: {}x{} vs {n}x{times}",
                r.rows(),
                r.cols()
            )));
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let curves: Vec<Vec<f64>> = reconstructions.iter().map(|r| r.row(i).to_vec()).collect();
        total += avar(&curves)?;
    }
    Ok(total / n as f64)
}

/// Jackknife standard error of a statistic of the replicate set.
pub fn jackknife_se<F: Fn(&[Vec<f64>]) -> Result<f64>>(curves: &[Vec<f64>], stat: F) -> Result<f64> {
    let r = curves.len();
    if r < 2 {
        return Err(Error::InvalidData("jackknife needs at least two replicates".into()));
    }
    let mut loo = Vec::with_capacity(r);
    let mut subset: Vec<Vec<f64>> = curves[1..].to_vec();
    for k in 0..r {
        if k > 0 {
            subset[k - 1] = curves[k - 1].clone();
        }
        loo.push(stat(&subset)?);
    }
    let m = loo.iter().sum::<f64>() / r as f64;
    let ss: f64 = loo.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(libm::sqrt(ss * (r - 1) as f64 / r as f64))
}

/// Jackknife standard error of `ABias²(a) − ABias²(b)` for paired replicate sets.
pub fn paired_abias2_se(a: &[Vec<f64>], b: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    let g = truth.len();
    let joined: Vec<Vec<f64>> = a.iter().zip(b).map(|(x, y)| x.iter().chain(y).copied().collect()).collect();
    jackknife_se(&joined, |set| {
        let left: Vec<Vec<f64>> = set.iter().map(|c| c[..g].to_vec()).collect();
        let right: Vec<Vec<f64>> = set.iter().map(|c| c[g..].to_vec()).collect();
        Ok(abias2(&left, truth)? - abias2(&right, truth)?)
    })
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && x[order[e + 1]] == x[order[k]] {
            e += 1;
        }
        let rank = (k + e) as f64 / 2.0 + 1.0;
        for &o in &order[k..=e] {
            out[o] = rank;
        }
        k = e + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidData("rank correlation needs two points".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..x.len() {
        sxy += (rx[k] - mx) * (ry[k] - my);
        sxx += (rx[k] - mx) * (rx[k] - mx);
        syy += (ry[k] - my) * (ry[k] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidData("rank correlation undefined for constant input".into()));
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// One estimator's row of a benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub estimator: String,
    pub abias2: f64,
    pub avar: f64,
    pub aimse: f64,
    pub cov_avar: f64,
    pub abias2_se: f64,
    pub replicates: usize,
    pub failures: usize,
    pub alpha_mean: Vec<f64>,
}

impl MetricRow {
    /// Builds the row from replicate curves, truth and reconstructions.
    pub fn from_replicates(
        estimator: &str,
        curves: &[Vec<f64>],
        truth: &[f64],
        reconstructions: &[Curves],
        alphas: &[Vec<f64>],
        failures: usize,
    ) -> Result<Self> {
        let b = abias2(curves, truth)?;
        let v = avar(curves)?;
        let se = if curves.len() > 1 { jackknife_se(curves, |c| abias2(c, truth))? } else { f64::NAN };
        let cov = if reconstructions.is_empty() { f64::NAN } else { covariate_avar(reconstructions)? };
        let alpha_mean = match alphas.first() {
            Some(a0) => (0..a0.len()).map(|k| alphas.iter().map(|a| a[k]).sum::<f64>() / alphas.len() as f64).collect(),
            None => Vec::new(),
        };
        Ok(Self {
            estimator: estimator.into(),
            abias2: b,
            avar: v,
            aimse: b + v,
            cov_avar: cov,
            abias2_se: se,
            replicates: curves.len(),
            failures,
            alpha_mean,
        })
    }
}

/// Scenario settings echoed beside the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEcho {
    pub subjects: usize,
    pub grid_size: usize,
    pub replicates: usize,
    pub sigma_x: f64,
    pub rho_x: f64,
    pub window: usize,
    pub monte_carlo: usize,
    pub basis_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scenario: ScenarioEcho,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn row(&self, estimator: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}
