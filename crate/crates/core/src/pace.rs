//! Functional principal components through conditional expectation.
//!
//! The mean and covariance are estimated by local-linear smoothing with an
//! Epanechnikov kernel; the covariance surface is smoothed from off-diagonal
//! raw products only, so the gap on the diagonal estimates the white-noise
//! variance. Scores are best linear predictors given the observed entries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::{CountArray, Curves};
use crate::error::{Error, Result};
use crate::grid::FunctionalGrid;
use crate::mem::{mean_log_curves, Method, ReconstructedCovariate};

/// Candidate bandwidths as fractions of the grid range.
pub const BANDWIDTH_FRACTIONS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_FVE: f64 = 0.99;
const MIN_SUBJECTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel {
    pub mean_curve: Vec<f64>,
    /// `T x K`, orthonormal under the grid's trapezoid weights.
    pub eigenfunctions: Curves,
    pub eigenvalues: Vec<f64>,
    pub noise_var: f64,
    pub fve_target: f64,
    pub mean_bandwidth: f64,
    pub cov_bandwidth: f64,
}

impl FpcaModel {
    pub fn components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Φ Λ Φᵀ` restricted to the index set `idx`.
    fn fitted_covariance(&self, idx: &[usize]) -> DMatrix<f64> {
        let k = self.components();
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            (0..k)
                .map(|c| {
                    self.eigenvalues[c] * self.eigenfunctions.get(idx[a], c) * self.eigenfunctions.get(idx[b], c)
                })
                .sum()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaceScores {
    pub scores: Vec<f64>,
    /// A ridge was added because the observed covariance was singular.
    pub jittered: bool,
}

fn epanechnikov(u: f64) -> f64 {
    if libm::fabs(u) < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Local-linear fit at each target with observation weights `w`; also returns
/// each observation's own hat value when `targets` equal the design points.
fn local_linear(x: &[f64], y: &[f64], w: &[f64], targets: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut fitted = Vec::with_capacity(targets.len());
    let mut hat = Vec::with_capacity(targets.len());
    for (ti, &t) in targets.iter().enumerate() {
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..x.len() {
            let kw = w[k] * epanechnikov((x[k] - t) / h);
            if kw == 0.0 {
                continue;
            }
            let d = x[k] - t;
            s0 += kw;
            s1 += kw * d;
            s2 += kw * d * d;
            r0 += kw * y[k];
            r1 += kw * d * y[k];
        }
        let det = s0 * s2 - s1 * s1;
        let own = if ti < x.len() && x[ti] == t { w[ti] * epanechnikov(0.0) } else { 0.0 };
        if s0 <= 0.0 {
            fitted.push(f64::NAN);
            hat.push(1.0);
        } else if det <= 1e-12 * s0 * s2.max(1e-300) {
            fitted.push(r0 / s0);
            hat.push(own / s0);
        } else {
            fitted.push((s2 * r0 - s1 * r1) / det);
            hat.push(own * s2 / det);
        }
    }
    (fitted, hat)
}

fn gcv(y: &[f64], w: &[f64], fitted: &[f64], hat: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mut rss = 0.0;
    let mut trace = 0.0;
    for k in 0..y.len() {
        if !fitted[k].is_finite() {
            return f64::INFINITY;
        }
        rss += w[k] * (y[k] - fitted[k]) * (y[k] - fitted[k]);
        trace += hat[k];
    }
    let n = y.len() as f64;
    let denom = 1.0 - trace / n;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    rss / total / (denom * denom)
}

/// Local-linear surface value at `(s, t)` from raw points `(xs, ys) -> z`.
struct SurfacePoint {
    value: f64,
    own_hat: f64,
}

fn local_linear_2d(
    pts: &[(f64, f64, f64, f64)],
    s: f64,
    t: f64,
    h: f64,
    own: Option<usize>,
) -> Option<SurfacePoint> {
    // normal equations for z ≈ b0 + b1 (x - s) + b2 (y - t)
    let mut m = [0.0f64; 9];
    let mut r = [0.0f64; 3];
    for &(x, y, z, w) in pts {
        let kw = w * epanechnikov((x - s) / h) * epanechnikov((y - t) / h);
        if kw == 0.0 {
            continue;
        }
        let v = [1.0, x - s, y - t];
        for a in 0..3 {
            r[a] += kw * v[a] * z;
            for b in 0..3 {
                m[a * 3 + b] += kw * v[a] * v[b];
            }
        }
    }
    if m[0] <= 0.0 {
        return None;
    }
    let mat = DMatrix::from_row_slice(3, 3, &m);
    let own_w = own.map_or(0.0, |k| pts[k].3 * epanechnikov(0.0) * epanechnikov(0.0));
    match mat.clone().try_inverse() {
        Some(inv) if (&mat * &inv - DMatrix::identity(3, 3)).amax() < 1e-6 => {
            let value = (0..3).map(|b| inv[(0, b)] * r[b]).sum();
            Some(SurfacePoint { value, own_hat: own_w * inv[(0, 0)] })
        }
        _ => Some(SurfacePoint { value: r[0] / m[0], own_hat: own_w / m[0] }),
    }
}

/// Diagonal of the covariance surface at `t0`: local fit that is linear along
/// the diagonal and quadratic across it, which removes the cross-diagonal
/// curvature bias of a plain local-linear surface.
fn diagonal_value(pts: &[(f64, f64, f64, f64)], t0: f64, h: f64) -> Option<f64> {
    let mut m = [0.0f64; 9];
    let mut r = [0.0f64; 3];
    for &(x, y, z, w) in pts {
        let kw = w * epanechnikov((x - t0) / h) * epanechnikov((y - t0) / h);
        if kw == 0.0 {
            continue;
        }
        let half = 0.5 * (x - y);
        let v = [1.0, 0.5 * (x + y) - t0, half * half];
        for a in 0..3 {
            r[a] += kw * v[a] * z;
            for b in 0..3 {
                m[a * 3 + b] += kw * v[a] * v[b];
            }
        }
    }
    if m[0] <= 0.0 {
        return None;
    }
    let mat = DMatrix::from_row_slice(3, 3, &m);
    match mat.clone().try_inverse() {
        Some(inv) if (&mat * &inv - DMatrix::identity(3, 3)).amax() < 1e-6 => Some((0..3).map(|b| inv[(0, b)] * r[b]).sum()),
        _ => Some(r[0] / m[0]),
    }
}

/// Mean, smoothed covariance and its eigensystem from possibly incomplete curves.
pub fn fit_fpca(curves: &[Vec<Option<f64>>], grid: &FunctionalGrid, fve_target: f64) -> Result<FpcaModel> {
    let n = curves.len();
    let times = grid.len();
    if n < MIN_SUBJECTS {
        return Err(Error::InvalidData(format!("functional PCA needs at least {MIN_SUBJECTS} subjects, got {n}")));
    }
    if !(fve_target > 0.0 && fve_target <= 1.0) {
        return Err(Error::InvalidConfig(format!("fve target must lie in (0, 1], got {fve_target}")));
    }
    for (i, c) in curves.iter().enumerate() {
        if c.len() != times {
            return Err(Error::InvalidData(format!("curve {i} has {} points, grid has {times}", c.len())));
        }
    }
    let t = grid.points();
    let range = t[times - 1] - t[0];

    // cross-sectional means
    let mut raw_mean = vec![0.0; times];
    let mut counts = vec![0.0; times];
    for c in curves {
        for l in 0..times {
            if let Some(v) = c[l] {
                raw_mean[l] += v;
                counts[l] += 1.0;
            }
        }
    }
    if let Some(l) = (0..times).find(|&l| counts[l] == 0.0) {
        return Err(Error::InvalidData(format!("no observations at grid index {l}")));
    }
    for l in 0..times {
        raw_mean[l] /= counts[l];
    }
    let mut best = (f64::INFINITY, 0.0, raw_mean.clone());
    for frac in BANDWIDTH_FRACTIONS {
        let h = frac * range;
        let (fitted, hat) = local_linear(t, &raw_mean, &counts, t, h);
        let score = gcv(&raw_mean, &counts, &fitted, &hat);
        if score < best.0 {
            best = (score, h, fitted);
        }
    }
    let (_, mean_bandwidth, mean_curve) = best;
    if !mean_curve.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("mean smoothing failed on every bandwidth".into()));
    }

    // raw covariance products
    let mut raw = vec![0.0; times * times];
    let mut pairs = vec![0.0; times * times];
    for c in curves {
        for l in 0..times {
            let Some(a) = c[l] else { continue };
            let da = a - mean_curve[l];
            for m in 0..times {
                if let Some(b) = c[m] {
                    raw[l * times + m] += da * (b - mean_curve[m]);
                    pairs[l * times + m] += 1.0;
                }
            }
        }
    }
    for k in 0..times * times {
        if pairs[k] > 0.0 {
            raw[k] /= pairs[k];
        }
    }
    let off: Vec<(f64, f64, f64, f64)> = (0..times)
        .flat_map(|l| (0..times).map(move |m| (l, m)))
        .filter(|&(l, m)| l != m && pairs[l * times + m] > 0.0)
        .map(|(l, m)| (t[l], t[m], raw[l * times + m], pairs[l * times + m]))
        .collect();

    let mut best_cov: Option<(f64, f64, Vec<f64>)> = None;
    for frac in BANDWIDTH_FRACTIONS {
        let h = frac * range;
        let mut fitted = Vec::with_capacity(off.len());
        let mut hat = Vec::with_capacity(off.len());
        for (k, &(x, y, _, _)) in off.iter().enumerate() {
            match local_linear_2d(&off, x, y, h, Some(k)) {
                Some(p) => {
                    fitted.push(p.value);
                    hat.push(p.own_hat);
                }
                None => {
                    fitted.push(f64::NAN);
                    hat.push(1.0);
                }
            }
        }
        let z: Vec<f64> = off.iter().map(|p| p.2).collect();
        let w: Vec<f64> = off.iter().map(|p| p.3).collect();
        let score = gcv(&z, &w, &fitted, &hat);
        let mut surface = vec![f64::NAN; times * times];
        for l in 0..times {
            for m in 0..=l {
                if let Some(p) = local_linear_2d(&off, t[l], t[m], h, None) {
                    surface[l * times + m] = p.value;
                    surface[m * times + l] = p.value;
                }
            }
        }
        if !surface.iter().all(|v| v.is_finite()) {
            continue;
        }
        if best_cov.as_ref().is_none_or(|b| score < b.0) {
            best_cov = Some((score, h, surface));
        }
    }
    let Some((_, cov_bandwidth, surface)) = best_cov else {
        return Err(Error::Numerical("covariance smoothing failed on every bandwidth".into()));
    };

    let mut gap = 0.0;
    for l in 0..times {
        let diag = diagonal_value(&off, t[l], cov_bandwidth).unwrap_or(surface[l * times + l]);
        gap += raw[l * times + l] - diag;
    }
    let noise_var = (gap / times as f64).max(0.0);

    // eigen-decomposition of W^{1/2} G W^{1/2}
    let sw: Vec<f64> = grid.weights().iter().map(|w| libm::sqrt(*w)).collect();
    let g = DMatrix::from_fn(times, times, |l, m| sw[l] * surface[l * times + m] * sw[m]);
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..times).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // eigenvalues below the data's floating-point resolution count as zero
    let level = (0..times).map(|l| mean_curve[l] * mean_curve[l] + raw[l * times + l].abs()).sum::<f64>() / times as f64;
    let floor = 1e-12 * level;
    let positive: Vec<usize> = order.iter().copied().filter(|&k| eig.eigenvalues[k] > floor).collect();
    let total: f64 = positive.iter().map(|&k| eig.eigenvalues[k]).sum();
    let mut keep = 1;
    if total > 0.0 {
        let mut acc = 0.0;
        keep = positive.len();
        for (c, &k) in positive.iter().enumerate() {
            acc += eig.eigenvalues[k];
            if acc / total >= fve_target {
                keep = c + 1;
                break;
            }
        }
    }
    let keep = keep.max(1);
    let mut eigenfunctions = Curves::zeros(times, keep);
    let mut eigenvalues = Vec::with_capacity(keep);
    for c in 0..keep {
        let k = order[c];
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        let mut phi: Vec<f64> = (0..times).map(|l| eig.eigenvectors[(l, k)] / sw[l]).collect();
        let peak = phi.iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max);
        if let Some(first) = phi.iter().find(|v| libm::fabs(**v) > 1e-10 * peak) {
            if *first < 0.0 {
                phi.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for l in 0..times {
            eigenfunctions.set(l, c, phi[l]);
        }
    }
    Ok(FpcaModel {
        mean_curve,
        eigenfunctions,
        eigenvalues,
        noise_var,
        fve_target,
        mean_bandwidth,
        cov_bandwidth,
    })
}

/// Conditional-expectation scores `Λ Φᵀ Σ_W⁻¹ (w − μ)` over observed entries.
pub fn pace_scores(model: &FpcaModel, curve: &[Option<f64>]) -> Result<PaceScores> {
    let times = model.mean_curve.len();
    if curve.len() != times {
        return Err(Error::LengthMismatch { expected: times, found: curve.len() });
    }
    let idx: Vec<usize> = (0..times).filter(|&l| curve[l].is_some()).collect();
    let k = model.components();
    if idx.is_empty() {
        return Ok(PaceScores { scores: vec![0.0; k], jittered: false });
    }
    let mut sigma = model.fitted_covariance(&idx);
    let ridge = 1e-8 * sigma.trace() / idx.len() as f64;
    let mut jittered = false;
    let noise = if model.noise_var < ridge {
        jittered = true;
        ridge
    } else {
        model.noise_var
    };
    for a in 0..idx.len() {
        sigma[(a, a)] += noise;
    }
    let resid = DVector::from_iterator(idx.len(), idx.iter().map(|&l| curve[l].unwrap_or_default() - model.mean_curve[l]));
    let solved = match Cholesky::new(sigma.clone()) {
        Some(c) => c.solve(&resid),
        None => {
            jittered = true;
            let extra = ridge.max(1e-12);
            for a in 0..idx.len() {
                sigma[(a, a)] += extra;
            }
            Cholesky::new(sigma)
                .ok_or_else(|| Error::Numerical("observed covariance is not positive definite".into()))?
                .solve(&resid)
        }
    };
    let scores = (0..k)
        .map(|c| model.eigenvalues[c] * idx.iter().enumerate().map(|(a, &l)| model.eigenfunctions.get(l, c) * solved[a]).sum::<f64>())
        .collect();
    Ok(PaceScores { scores, jittered })
}

/// `μ̂ + Φ̂ ξ̂` on the full grid.
pub fn reconstruct_curve(model: &FpcaModel, scores: &[f64]) -> Vec<f64> {
    (0..model.mean_curve.len())
        .map(|l| model.mean_curve[l] + scores.iter().enumerate().map(|(c, s)| s * model.eigenfunctions.get(l, c)).sum::<f64>())
        .collect()
}

/// PACE reconstructions from an arbitrary set of noisy, possibly incomplete curves.
pub fn pace_curves(curves: &[Vec<Option<f64>>], grid: &FunctionalGrid, fve_target: f64) -> Result<(FpcaModel, Curves, usize)> {
    let model = fit_fpca(curves, grid, fve_target)?;
    let mut out = Curves::zeros(curves.len(), grid.len());
    let mut jittered = 0;
    for (i, c) in curves.iter().enumerate() {
        let s = pace_scores(&model, c)?;
        jittered += usize::from(s.jittered);
        out.row_mut(i).copy_from_slice(&reconstruct_curve(&model, &s.scores));
    }
    Ok((model, out, jittered))
}

/// PACE applied to each subject's replicate mean of `log(W + 1)`.
pub fn pace_reconstruct(counts: &CountArray, grid: &FunctionalGrid, fve_target: f64) -> Result<ReconstructedCovariate> {
    if counts.times() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: counts.times() });
    }
    let curves = mean_log_curves(counts);
    let (_, values, _) = pace_curves(&curves, grid, fve_target)?;
    Ok(ReconstructedCovariate::new(Method::Pace, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn rank_two(n: usize, noise_sd: f64, seed: u64) -> (FunctionalGrid, Vec<Vec<Option<f64>>>, Vec<f64>, Vec<f64>) {
        let grid = FunctionalGrid::uniform(41).unwrap();
        let t = grid.points().to_vec();
        let phi1: Vec<f64> = t.iter().map(|t| libm::sqrt(2.0) * libm::sin(2.0 * core::f64::consts::PI * t)).collect();
        let phi2: Vec<f64> = t.iter().map(|t| libm::sqrt(2.0) * libm::cos(2.0 * core::f64::consts::PI * t)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let curves = (0..n)
            .map(|_| {
                let (a, b) = (2.0 * std.sample(&mut rng), std.sample(&mut rng));
                (0..t.len())
                    .map(|l| Some(1.0 + t[l] + a * phi1[l] + b * phi2[l] + noise_sd * std.sample(&mut rng)))
                    .collect()
            })
            .collect();
        (grid, curves, phi1, phi2)
    }

    #[test]
    fn identical_curves_give_single_null_component() {
        let grid = FunctionalGrid::uniform(20).unwrap();
        let shapes: [(fn(f64) -> f64, f64); 2] = [(|t| 1.0 + 2.0 * t, 1e-12), (|t| libm::sin(3.0 * t), 1e-4)];
        for (f, tol) in shapes {
            let curve: Vec<Option<f64>> = grid.points().iter().map(|t| Some(f(*t))).collect();
            let curves = vec![curve.clone(); 10];
            let model = fit_fpca(&curves, &grid, 0.99).unwrap();
            assert_eq!(model.components(), 1);
            assert!(model.eigenvalues[0].abs() < tol, "{:?}", model.eigenvalues);
            assert!(model.noise_var < tol);
            for (m, c) in model.mean_curve.iter().zip(&curve) {
                assert!((m - c.unwrap()).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn rank_two_fixture_recovers_eigensystem() {
        let (grid, curves, phi1, _) = rank_two(2000, 0.0, 11);
        let model = fit_fpca(&curves, &grid, 0.99).unwrap();
        assert_eq!(model.components(), 2, "{:?}", model.eigenvalues);
        assert!((model.eigenvalues[0] / 4.0 - 1.0).abs() < 0.1, "{:?}", model.eigenvalues);
        assert!((model.eigenvalues[1] - 1.0).abs() < 0.1, "{:?}", model.eigenvalues);
        let w = grid.weights();
        for a in 0..2 {
            for b in 0..2 {
                let ip: f64 = (0..grid.len()).map(|l| w[l] * model.eigenfunctions.get(l, a) * model.eigenfunctions.get(l, b)).sum();
                assert!((ip - f64::from(u8::from(a == b))).abs() < 1e-6);
            }
        }
        let align: f64 = (0..grid.len()).map(|l| w[l] * model.eigenfunctions.get(l, 0) * phi1[l]).sum();
        assert!(align.abs() > 0.95);
    }

    #[test]
    fn injected_noise_is_recovered() {
        let (grid, curves, _, _) = rank_two(2000, 0.5, 12);
        let model = fit_fpca(&curves, &grid, 0.99).unwrap();
        assert!((model.noise_var - 0.25).abs() < 0.05, "{}", model.noise_var);
    }

    #[test]
    fn scores_vanish_at_the_mean_and_recover_exact_projections() {
        let (grid, curves, _, _) = rank_two(500, 0.0, 13);
        let mut model = fit_fpca(&curves, &grid, 0.99).unwrap();
        model.noise_var = 0.0;
        let at_mean: Vec<Option<f64>> = model.mean_curve.iter().map(|v| Some(*v)).collect();
        let s = pace_scores(&model, &at_mean).unwrap();
        assert!(s.scores.iter().all(|v| v.abs() < 1e-8));
        let shifted: Vec<Option<f64>> =
            (0..grid.len()).map(|l| Some(model.mean_curve[l] + 2.0 * model.eigenfunctions.get(l, 0))).collect();
        let s = pace_scores(&model, &shifted).unwrap();
        assert!(s.jittered);
        assert!((s.scores[0] - 2.0).abs() < 1e-3, "{:?}", s.scores);
        assert!(s.scores[1].abs() < 1e-3);
    }

    #[test]
    fn scores_shrink_monotonically_with_noise() {
        let (grid, curves, _, _) = rank_two(300, 0.3, 14);
        let mut model = fit_fpca(&curves, &grid, 0.99).unwrap();
        let w = &curves[0];
        let mut last = f64::INFINITY;
        for s2 in [0.0, 0.5, 1.0, 2.0] {
            model.noise_var = s2;
            let s = pace_scores(&model, w).unwrap().scores[0].abs();
            assert!(s < last, "{s} after {last}");
            last = s;
        }
    }

    #[test]
    fn full_rank_noiseless_model_reproduces_input() {
        let grid = FunctionalGrid::uniform(8).unwrap();
        let times = grid.len();
        let sw: Vec<f64> = grid.weights().iter().map(|w| libm::sqrt(*w)).collect();
        let cov = DMatrix::from_fn(times, times, |l, m| libm::pow(0.6, (l as f64 - m as f64).abs()) * 2.0);
        let eig = DMatrix::from_fn(times, times, |l, m| sw[l] * cov[(l, m)] * sw[m]).symmetric_eigen();
        let mut phi = Curves::zeros(times, times);
        for l in 0..times {
            for c in 0..times {
                phi.set(l, c, eig.eigenvectors[(l, c)] / sw[l]);
            }
        }
        let model = FpcaModel {
            mean_curve: vec![0.5; times],
            eigenfunctions: phi,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            noise_var: 0.0,
            fve_target: 1.0,
            mean_bandwidth: 0.1,
            cov_bandwidth: 0.1,
        };
        let curve: Vec<Option<f64>> = (0..times).map(|l| Some(libm::cos(l as f64))).collect();
        let s = pace_scores(&model, &curve).unwrap();
        let rec = reconstruct_curve(&model, &s.scores);
        for l in 0..times {
            assert!((rec[l] - curve[l].unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_entries_are_skipped() {
        let (grid, mut curves, _, _) = rank_two(200, 0.2, 15);
        curves[3][5] = None;
        curves[3][6] = None;
        let (_, rec, _) = pace_curves(&curves, &grid, 0.99).unwrap();
        assert!(rec.row(3).iter().all(|v| v.is_finite()));
        let mut empty = curves.clone();
        for c in &mut empty {
            c[0] = None;
        }
        assert!(fit_fpca(&empty, &grid, 0.99).is_err());
    }

    #[test]
    fn noiseless_low_rank_curves_are_reconstructed() {
        let (grid, curves, _, _) = rank_two(400, 0.0, 16);
        let (_, rec, _) = pace_curves(&curves, &grid, 0.99).unwrap();
        let mut mse = 0.0;
        for (i, c) in curves.iter().enumerate() {
            for l in 0..grid.len() {
                mse += (rec.get(i, l) - c[l].unwrap()).powi(2);
            }
        }
        mse /= (curves.len() * grid.len()) as f64;
        assert!(mse <= 1e-3, "{mse}");
    }

    #[test]
    fn subject_order_does_not_matter() {
        let (grid, curves, _, _) = rank_two(100, 0.3, 17);
        let (_, a, _) = pace_curves(&curves, &grid, 0.99).unwrap();
        let rev: Vec<_> = curves.iter().rev().cloned().collect();
        let (_, b, _) = pace_curves(&rev, &grid, 0.99).unwrap();
        for i in 0..curves.len() {
            for l in 0..grid.len() {
                assert!((a.get(i, l) - b.get(curves.len() - 1 - i, l)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn too_few_subjects_rejected() {
        let (grid, curves, _, _) = rank_two(4, 0.1, 18);
        assert!(fit_fpca(&curves, &grid, 0.99).is_err());
    }
}
