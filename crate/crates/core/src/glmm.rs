//! Poisson log-link mixed models with a random subject intercept and, for
//! multi-slot windows, reference-coded random slot deviations.
//!
//! For subject `i` and window slot `d` the conditional mean is
//! `log E[W_ijd] = μ + r0_i + r_di 1{d > 0}` with `r0 ~ N(0, τ0²)` and
//! `r_d ~ N(0, τ1²)` independent. Random effects are written as `τ u` with
//! `u ~ N(0, I)`, so a zero variance is an interior point of the parameter
//! space and the objective is even in each `τ`.
//!
//! The marginal likelihood is maximized under the Laplace approximation; in
//! the single-slot case the optimum is refined with adaptive Gauss–Hermite
//! quadrature centred on each subject's posterior mode.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{CountArray, ReplicateArray};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, newton_polish, Minimum};
use crate::quadrature::gauss_hermite;

/// Fitted mean assigned when every count in a fit is zero.
pub const DEGENERATE_RATE: f64 = 1e-8;
pub const VARIANCE_FLOOR: f64 = 1e-10;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmOptions {
    /// Adaptive Gauss–Hermite nodes for single-slot refinement; 1 keeps the Laplace fit.
    pub quadrature_nodes: usize,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        Self { quadrature_nodes: 7, max_iter: 200, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SlotStat {
    total: f64,
    observed: f64,
    log_factorial: f64,
}

/// Per-subject sufficient statistics of the counts inside one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCounts {
    subjects: usize,
    slots: usize,
    stats: Vec<SlotStat>,
}

impl WindowCounts {
    /// Slots `start .. start + slots` of a surrogate array; missing entries are dropped.
    pub fn from_array(counts: &CountArray, start: usize, slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::InvalidConfig("window must contain at least one slot".into()));
        }
        if start + slots > counts.times() {
            return Err(Error::WindowTooLarge {
                window: slots,
                available: counts.times().saturating_sub(start),
            });
        }
        let (n, reps) = (counts.subjects(), counts.replicates());
        let mut stats = vec![SlotStat::default(); n * slots];
        for i in 0..n {
            for j in 0..reps {
                for d in 0..slots {
                    if let Some(c) = counts.get(i, j, start + d) {
                        let s = &mut stats[i * slots + d];
                        s.total += c as f64;
                        s.observed += 1.0;
                        s.log_factorial += libm::lgamma(c as f64 + 1.0);
                    }
                }
            }
        }
        Ok(Self { subjects: n, slots, stats })
    }

    /// Single-slot view: `rows[i]` holds subject `i`'s replicate counts.
    pub fn from_replicates(rows: &[Vec<Option<u64>>]) -> Self {
        let stats = rows
            .iter()
            .map(|r| {
                r.iter().flatten().fold(SlotStat::default(), |mut s, &c| {
                    s.total += c as f64;
                    s.observed += 1.0;
                    s.log_factorial += libm::lgamma(c as f64 + 1.0);
                    s
                })
            })
            .collect();
        Self { subjects: rows.len(), slots: 1, stats }
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    fn subject(&self, i: usize) -> &[SlotStat] {
        &self.stats[i * self.slots..(i + 1) * self.slots]
    }

    fn grand_total(&self) -> (f64, f64) {
        self.stats.iter().fold((0.0, 0.0), |(t, o), s| (t + s.total, o + s.observed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approximation {
    Laplace,
    AdaptiveQuadrature(usize),
    Degenerate,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmFit {
    pub mu: f64,
    /// Random-intercept variance followed, for windows, by the shared slot-deviation variance.
    pub var_components: Vec<f64>,
    slots: usize,
    /// `subjects x slots`: predicted `r0_i` then `r_di` for slots `1..D`.
    effects: Vec<f64>,
    pub converged: bool,
    pub degenerate: bool,
    pub loglik: f64,
    pub iterations: usize,
    pub approximation: Approximation,
}

impl GlmmFit {
    pub fn subjects(&self) -> usize {
        self.effects.len() / self.slots
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn intercept_sd(&self) -> f64 {
        libm::sqrt(self.var_components[0])
    }

    /// Predicted random effects of subject `i`: intercept first, then slot deviations.
    pub fn random_effects(&self, i: usize) -> Result<&[f64]> {
        if i >= self.subjects() {
            return Err(Error::UnknownSubject(i));
        }
        Ok(&self.effects[i * self.slots..(i + 1) * self.slots])
    }
}

/// Link-scale conditional mean `μ + r0_i (+ r_di)`, the reconstructed covariate
/// of subject `i` at window slot `slot` (0-based; slot 0 is the reference).
pub fn predict_x(fit: &GlmmFit, subject: usize, slot: usize) -> Result<f64> {
    let r = fit.random_effects(subject)?;
    if slot >= fit.slots {
        return Err(Error::WindowTooLarge { window: slot + 1, available: fit.slots });
    }
    let dev = if slot > 0 { r[slot] } else { 0.0 };
    Ok(fit.mu + r[0] + dev)
}

/// Laplace-approximate marginal log-likelihood at `(μ, variance components)`,
/// including the `log y!` terms.
pub fn laplace_loglik(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    mu: f64,
    var_components: &[f64],
) -> Result<f64> {
    check_inputs(data, weights)?;
    let expected = if data.slots > 1 { 2 } else { 1 };
    if var_components.len() != expected {
        return Err(Error::LengthMismatch { expected, found: var_components.len() });
    }
    let mut theta = vec![mu];
    theta.extend(var_components.iter().map(|v| libm::sqrt(v.max(0.0))));
    let mut obj = Objective::new(data, weights);
    Ok(-obj.laplace(&theta) - obj.log_factorial_total())
}

/// Random-intercept model at a single time point.
pub fn fit_pointwise(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
) -> Result<GlmmFit> {
    if data.slots != 1 {
        return Err(Error::InvalidConfig(format!(
            "pointwise fit needs one slot, got {}",
            data.slots
        )));
    }
    fit(data, weights, opts, None)
}

/// [`fit_pointwise`] started from the estimates of a neighbouring fit.
pub fn fit_pointwise_from(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
    previous: &GlmmFit,
) -> Result<GlmmFit> {
    if data.slots != 1 {
        return Err(Error::InvalidConfig(format!(
            "pointwise fit needs one slot, got {}",
            data.slots
        )));
    }
    fit(data, weights, opts, Some(previous))
}

/// Random intercept plus reference-coded slot deviations over a window of `D >= 2` slots.
pub fn fit_window(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
) -> Result<GlmmFit> {
    if data.slots < 2 {
        return Err(Error::WindowTooSmall);
    }
    fit(data, weights, opts, None)
}

/// [`fit_window`] started from the estimates of a neighbouring window.
pub fn fit_window_from(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
    previous: &GlmmFit,
) -> Result<GlmmFit> {
    if data.slots < 2 {
        return Err(Error::WindowTooSmall);
    }
    fit(data, weights, opts, Some(previous))
}

fn check_inputs(data: &WindowCounts, weights: Option<&[f64]>) -> Result<()> {
    if data.subjects < 2 {
        return Err(Error::InvalidData(format!(
            "mixed model needs at least 2 subjects, got {}",
            data.subjects
        )));
    }
    if let Some(w) = weights {
        if w.len() != data.subjects {
            return Err(Error::LengthMismatch { expected: data.subjects, found: w.len() });
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidData("weights must be positive and finite".into()));
        }
    }
    if data.grand_total().1 == 0.0 {
        return Err(Error::InvalidData("window has no observed counts".into()));
    }
    Ok(())
}

fn fit(
    data: &WindowCounts,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
    previous: Option<&GlmmFit>,
) -> Result<GlmmFit> {
    check_inputs(data, weights)?;
    let slots = data.slots;
    let n_var = if slots > 1 { 2 } else { 1 };
    let (total, observed) = data.grand_total();
    if total == 0.0 {
        let mut obj = Objective::new(data, weights);
        let mu = libm::log(DEGENERATE_RATE);
        let theta = [mu, 0.0, 0.0];
        let value = obj.laplace(&theta[..1 + n_var]);
        return Ok(GlmmFit {
            mu,
            var_components: vec![0.0; n_var],
            slots,
            effects: vec![0.0; data.subjects * slots],
            converged: true,
            degenerate: true,
            loglik: -value - obj.log_factorial_total(),
            iterations: 0,
            approximation: Approximation::Degenerate,
        });
    }

    let start = match previous {
        Some(p) if !p.degenerate && p.var_components.len() == n_var && p.var_components.iter().all(|v| *v > 0.0) => {
            let mut x = vec![p.mu];
            x.extend(p.var_components.iter().map(|v| libm::sqrt(*v)));
            x
        }
        _ => starting_values(data),
    };
    let mut obj = Objective::new(data, weights);
    let gtol = 1e-8 * (1.0 + observed).min(1e4);
    let quadrature = slots == 1 && opts.quadrature_nodes > 1;
    // a warm start is already close enough to go straight to quadrature
    let skip_laplace = quadrature && previous.is_some() && start[1] > 1e-5;
    let mut best = if skip_laplace {
        Minimum { value: f64::NAN, x: start, iterations: 0, converged: true }
    } else {
        let first = Minimum { value: obj.laplace(&start), x: start, iterations: 0, converged: false };
        newton_polish(|th| obj.laplace(th), first, 1e-4, 30, gtol)
    };
    if !best.converged {
        let step: Vec<f64> = best.x.iter().map(|_| 0.2).collect();
        let coarse = nelder_mead(|th| obj.laplace(th), &best.x, &step, opts.max_iter, opts.tolerance, 1e-4);
        best = newton_polish(|th| obj.laplace(th), coarse, 1e-4, 20, gtol);
    }
    let mut approximation = Approximation::Laplace;

    if quadrature && libm::fabs(best.x[1]) > 1e-5 {
        obj.set_nodes(opts.quadrature_nodes);
        let value = obj.adaptive(&best.x);
        let start = Minimum { value, x: best.x.clone(), iterations: best.iterations, converged: false };
        let mut refined = newton_polish(|th| obj.adaptive(th), start, 1e-4, 20, gtol);
        if !refined.converged {
            let coarse = nelder_mead(|th| obj.adaptive(th), &refined.x, &[0.02, 0.02], opts.max_iter, opts.tolerance, 1e-5);
            refined = newton_polish(|th| obj.adaptive(th), coarse, 1e-4, 20, gtol);
        }
        best = refined;
        approximation = Approximation::AdaptiveQuadrature(opts.quadrature_nodes);
    }

    // Re-evaluate at the optimum so the stored modes belong to it.
    let value = match approximation {
        Approximation::AdaptiveQuadrature(_) => obj.adaptive(&best.x),
        _ => obj.laplace(&best.x),
    };
    let mu = best.x[0];
    let taus: Vec<f64> = best.x[1..]
        .iter()
        .map(|t| if t * t < VARIANCE_FLOOR { 0.0 } else { libm::fabs(*t) })
        .collect();
    let mut effects = vec![0.0; data.subjects * slots];
    for i in 0..data.subjects {
        let u = &obj.modes[i * slots..(i + 1) * slots];
        // mode of u is odd in τ, so τ u is sign-free
        effects[i * slots] = best.x[1] * u[0] * f64::from(u8::from(taus[0] > 0.0));
        for d in 1..slots {
            effects[i * slots + d] = best.x[2] * u[d] * f64::from(u8::from(taus[1] > 0.0));
        }
    }
    Ok(GlmmFit {
        mu,
        var_components: taus.iter().map(|t| t * t).collect(),
        slots,
        effects,
        converged: best.converged,
        degenerate: false,
        loglik: -value - obj.log_factorial_total(),
        iterations: best.iterations,
        approximation,
    })
}

fn starting_values(data: &WindowCounts) -> Vec<f64> {
    let (total, observed) = data.grand_total();
    let mu = libm::log(total / observed);
    let q = data.slots;
    // moment estimates on the empirical log scale, net of Poisson noise
    let (mut n0, mut s0, mut ss0, mut noise0) = (0.0, 0.0, 0.0, 0.0);
    let (mut nd, mut sd, mut ssd, mut noised) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..data.subjects {
        let stats = data.subject(i);
        if stats[0].observed == 0.0 {
            continue;
        }
        let l0 = libm::log((stats[0].total + 0.5) / stats[0].observed);
        let v0 = 1.0 / (stats[0].total + 0.5);
        n0 += 1.0;
        s0 += l0;
        ss0 += l0 * l0;
        noise0 += v0;
        for s in &stats[1..q] {
            if s.observed > 0.0 {
                let diff = libm::log((s.total + 0.5) / s.observed) - l0;
                nd += 1.0;
                sd += diff;
                ssd += diff * diff;
                noised += v0 + 1.0 / (s.total + 0.5);
            }
        }
    }
    let moment = |n: f64, s: f64, ss: f64, noise: f64| {
        if n < 2.0 {
            return 0.1;
        }
        let m = s / n;
        libm::sqrt((ss / n - m * m - noise / n).max(0.01))
    };
    let tau0 = moment(n0, s0, ss0, noise0);
    if q == 1 {
        vec![mu, tau0]
    } else {
        vec![mu, tau0, moment(nd, sd, ssd, noised)]
    }
}

/// Negative (weighted) marginal log-likelihood without the `log y!` constants.
struct Objective<'a> {
    data: &'a WindowCounts,
    weights: Option<&'a [f64]>,
    modes: Vec<f64>,
    curvature: Vec<f64>,
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
    scratch: Scratch,
}

struct Scratch {
    rate: Vec<f64>,
    trial_rate: Vec<f64>,
    trial: Vec<f64>,
    delta: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(data: &'a WindowCounts, weights: Option<&'a [f64]>) -> Self {
        let q = data.slots;
        Self {
            data,
            weights,
            modes: vec![0.0; data.subjects * q],
            curvature: vec![1.0; data.subjects],
            nodes: Vec::new(),
            log_weights: Vec::new(),
            scratch: Scratch {
                rate: vec![0.0; q],
                trial_rate: vec![0.0; q],
                trial: vec![0.0; q],
                delta: vec![0.0; q],
                grad: vec![0.0; q],
            },
        }
    }

    fn set_nodes(&mut self, k: usize) {
        let (x, w) = gauss_hermite(k);
        self.log_weights = w.iter().map(|w| libm::log(*w)).collect();
        self.nodes = x;
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn log_factorial_total(&self) -> f64 {
        (0..self.data.subjects)
            .map(|i| self.weight(i) * self.data.subject(i).iter().map(|s| s.log_factorial).sum::<f64>())
            .sum()
    }

    fn laplace(&mut self, theta: &[f64]) -> f64 {
        let (mu, t0, t1) = unpack(theta);
        let q = self.data.slots;
        let mut total = 0.0;
        for i in 0..self.data.subjects {
            let stats = self.data.subject(i);
            let u = &mut self.modes[i * q..(i + 1) * q];
            let (f, logdet, h00) = posterior_mode(stats, mu, t0, t1, u, &mut self.scratch);
            self.curvature[i] = h00;
            total += self.weights.map_or(1.0, |w| w[i]) * (f - 0.5 * logdet);
        }
        -total
    }

    /// Single-slot adaptive Gauss–Hermite objective.
    fn adaptive(&mut self, theta: &[f64]) -> f64 {
        let (mu, t0, _) = unpack(theta);
        let mut total = 0.0;
        let sqrt2 = core::f64::consts::SQRT_2;
        for i in 0..self.data.subjects {
            let stats = self.data.subject(i);
            let u = &mut self.modes[i..i + 1];
            let (_, logdet, _) = posterior_mode(stats, mu, t0, 0.0, u, &mut self.scratch);
            let sigma = libm::exp(-0.5 * logdet);
            let s = stats[0];
            let mut terms = [0.0f64; 64];
            let k = self.nodes.len().min(64);
            let mut peak = f64::NEG_INFINITY;
            for (idx, (&x, &lw)) in self.nodes.iter().zip(&self.log_weights).take(k).enumerate() {
                let v = u[0] + sqrt2 * sigma * x;
                let eta = (mu + t0 * v).min(MAX_EXPONENT);
                let f = s.total * eta - s.observed * libm::exp(eta) - 0.5 * v * v;
                terms[idx] = lw + f + x * x;
                peak = peak.max(terms[idx]);
            }
            let sum: f64 = terms[..k].iter().map(|t| libm::exp(t - peak)).sum();
            let log_int = peak + libm::log(sum) + libm::log(sqrt2 * sigma) - HALF_LOG_2PI;
            total += self.weight(i) * log_int;
        }
        -total
    }
}

fn unpack(theta: &[f64]) -> (f64, f64, f64) {
    (theta[0], theta[1], theta.get(2).copied().unwrap_or(0.0))
}

/// Newton ascent to the posterior mode of `u` for one subject. Returns
/// `(f(û), log det H(û), H00)` where `f` is the conditional log-likelihood
/// (without `log y!`) minus `|u|²/2` and `H` its negative Hessian.
fn posterior_mode(
    stats: &[SlotStat],
    mu: f64,
    t0: f64,
    t1: f64,
    u: &mut [f64],
    sc: &mut Scratch,
) -> (f64, f64, f64) {
    let q = stats.len();
    let eval = |u: &[f64], rate: &mut [f64]| -> f64 {
        let mut f = 0.0;
        for d in 0..q {
            let dev = if d > 0 { t1 * u[d] } else { 0.0 };
            let eta = (mu + t0 * u[0] + dev).min(MAX_EXPONENT);
            let lam = libm::exp(eta);
            rate[d] = lam;
            f += stats[d].total * eta - stats[d].observed * lam;
        }
        f - 0.5 * u.iter().map(|v| v * v).sum::<f64>()
    };
    let mut f = eval(u, &mut sc.rate);
    for _ in 0..100 {
        // gradient and the arrow-shaped negative Hessian
        let mut sum_r = 0.0;
        let mut h00 = 1.0;
        for d in 0..q {
            let h = stats[d].observed * sc.rate[d];
            sum_r += stats[d].total - h;
            h00 += t0 * t0 * h;
        }
        sc.grad[0] = t0 * sum_r - u[0];
        let mut schur = h00;
        let mut rhs0 = sc.grad[0];
        for d in 1..q {
            let h = stats[d].observed * sc.rate[d];
            sc.grad[d] = t1 * (stats[d].total - h) - u[d];
            let a = t1 * t1 * h + 1.0;
            let b = t0 * t1 * h;
            schur -= b * b / a;
            rhs0 -= b * sc.grad[d] / a;
        }
        sc.delta[0] = rhs0 / schur;
        for d in 1..q {
            let h = stats[d].observed * sc.rate[d];
            let a = t1 * t1 * h + 1.0;
            let b = t0 * t1 * h;
            sc.delta[d] = (sc.grad[d] - b * sc.delta[0]) / a;
        }
        let size = sc.delta.iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max);
        if size < 1e-11 {
            break;
        }
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            for d in 0..q {
                sc.trial[d] = u[d] + scale * sc.delta[d];
            }
            let ft = eval(&sc.trial, &mut sc.trial_rate);
            if ft >= f - 1e-12 * libm::fabs(f) {
                u.copy_from_slice(&sc.trial);
                core::mem::swap(&mut sc.rate, &mut sc.trial_rate);
                f = ft;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved || size * scale < 1e-11 {
            break;
        }
    }
    let mut h00 = 1.0;
    for d in 0..q {
        h00 += t0 * t0 * stats[d].observed * sc.rate[d];
    }
    let mut schur = h00;
    let mut logdet = 0.0;
    for d in 1..q {
        let h = stats[d].observed * sc.rate[d];
        let a = t1 * t1 * h + 1.0;
        let b = t0 * t1 * h;
        schur -= b * b / a;
        logdet += libm::log(a);
    }
    logdet += libm::log(schur);
    (f, logdet, h00)
}

/// Identity-link Gaussian random-intercept model for one time point, fitted by
/// ANOVA moments with a GLS mean; used to check shrinkage behaviour.
pub fn fit_gaussian_pointwise(rows: &[Vec<Option<f64>>]) -> Result<GlmmFit> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidData("need at least 2 subjects".into()));
    }
    let mut means = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let (mut within, mut within_df) = (0.0, 0.0);
    for r in rows {
        let obs: Vec<f64> = r.iter().flatten().copied().collect();
        let m = obs.len() as f64;
        let mean = if m > 0.0 { obs.iter().sum::<f64>() / m } else { 0.0 };
        within += obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        within_df += (m - 1.0).max(0.0);
        means.push(mean);
        counts.push(m);
    }
    let present: Vec<usize> = (0..n).filter(|&i| counts[i] > 0.0).collect();
    if present.len() < 2 {
        return Err(Error::InvalidData("need at least 2 observed subjects".into()));
    }
    let sigma2 = if within_df > 0.0 { within / within_df } else { 0.0 };
    let k = present.len() as f64;
    let grand = present.iter().map(|&i| means[i]).sum::<f64>() / k;
    let between = present.iter().map(|&i| (means[i] - grand).powi2()).sum::<f64>() / (k - 1.0);
    let inv_m = present.iter().map(|&i| 1.0 / counts[i]).sum::<f64>() / k;
    let tau2 = (between - sigma2 * inv_m).max(0.0);
    let gls = |i: usize| 1.0 / (tau2 + sigma2 / counts[i]);
    let mu = if tau2 > 0.0 || sigma2 > 0.0 {
        present.iter().map(|&i| gls(i) * means[i]).sum::<f64>()
            / present.iter().map(|&i| gls(i)).sum::<f64>()
    } else {
        grand
    };
    let effects = (0..n)
        .map(|i| {
            if counts[i] == 0.0 || tau2 == 0.0 {
                0.0
            } else {
                tau2 / (tau2 + sigma2 / counts[i]) * (means[i] - mu)
            }
        })
        .collect();
    Ok(GlmmFit {
        mu,
        var_components: vec![tau2, sigma2],
        slots: 1,
        effects,
        converged: true,
        degenerate: false,
        loglik: f64::NAN,
        iterations: 0,
        approximation: Approximation::Gaussian,
    })
}

trait Square {
    fn powi2(self) -> f64;
}

impl Square for f64 {
    fn powi2(self) -> f64 {
        self * self
    }
}

/// Real-valued replicate observations for the Gaussian test variant.
pub type GaussianArray = ReplicateArray<f64>;
