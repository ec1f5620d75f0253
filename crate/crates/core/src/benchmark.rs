//! Monte Carlo harness: every requested estimator is fitted on the same
//! simulated dataset per replicate, and the replicate outcomes are folded into
//! a [`MetricReport`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Curves;
use crate::error::{Error, Result};
use crate::glmm::GlmmOptions;
use crate::mem::Method;
use crate::metrics::{abias2, avar, jackknife_se, MetricReport, MetricRow, ScenarioEcho};
use crate::pace::DEFAULT_FVE;
use crate::pipeline::{reconstruct, second_stage, PipelineConfig};
use crate::rng::replicate_seed;
use crate::simulate::{make_dataset, true_beta, ScenarioConfig};

/// Largest tolerated share of failed replicate fits per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// `seed` is the master seed, `monte_carlo` the replicate count R.
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub fve: f64,
    pub glmm: GlmmOptions,
}

impl BenchmarkConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self { scenario, methods: Method::ALL.to_vec(), fve: DEFAULT_FVE, glmm: GlmmOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no estimators requested".into()));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return Err(Error::InvalidConfig(format!("estimator {m} requested twice")));
            }
        }
        if self.methods.contains(&Method::MpMem) && self.scenario.window < 2 {
            return Err(Error::WindowTooSmall);
        }
        Ok(())
    }

    fn pipeline(&self, method: Method) -> PipelineConfig {
        PipelineConfig {
            method,
            window: self.scenario.window,
            basis_size: self.scenario.basis_size,
            fve: self.fve,
            glmm: self.glmm.clone(),
        }
    }

    /// Dataset settings of replicate `r`.
    pub fn replicate_scenario(&self, r: usize) -> ScenarioConfig {
        ScenarioConfig { seed: replicate_seed(self.scenario.seed, r as u64), ..self.scenario.clone() }
    }
}

/// One estimator's output on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub beta: Vec<f64>,
    pub scalars: Vec<f64>,
    pub reconstruction: Curves,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    /// Aligned with [`BenchmarkConfig::methods`].
    pub runs: Vec<Result<EstimatorRun>>,
}

/// Simulates replicate `r` once and fits every requested estimator on it.
pub fn run_replicate(cfg: &BenchmarkConfig, r: usize) -> Result<ReplicateOutcome> {
    let data = make_dataset(&cfg.replicate_scenario(r))?;
    let sample = data.to_sample();
    let runs = cfg
        .methods
        .iter()
        .map(|&m| {
            let pc = cfg.pipeline(m);
            let rec = reconstruct(&sample, &pc)?;
            let fit = second_stage(&sample, &rec, pc.basis_size)?;
            Ok(EstimatorRun { scalars: fit.coefficients_scalar(), beta: fit.beta_curve, reconstruction: rec.values })
        })
        .collect();
    Ok(ReplicateOutcome { index: r, runs })
}

/// Per-cell running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct CellMoments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl CellMoments {
    fn add(&mut self, x: &Curves) -> Result<()> {
        if self.count == 0 {
            self.mean = vec![0.0; x.as_slice().len()];
            self.m2 = vec![0.0; x.as_slice().len()];
        } else if x.as_slice().len() != self.mean.len() {
            return Err(Error::LengthMismatch { expected: self.mean.len(), found: x.as_slice().len() });
        }
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x.as_slice()) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
        Ok(())
    }

    fn variance(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.m2.iter().sum::<f64>() / (self.count as f64 * self.m2.len() as f64)
    }
}

#[derive(Debug, Clone)]
struct Track {
    method: Method,
    beta: Vec<Option<Vec<f64>>>,
    scalars: Vec<Vec<f64>>,
    covariate: CellMoments,
    errors: Vec<(usize, String)>,
}

/// Folds replicate outcomes in replicate order.
#[derive(Debug, Clone)]
pub struct Accumulator {
    config: BenchmarkConfig,
    tracks: Vec<Track>,
    next: usize,
}

/// Report plus the per-replicate curves it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub report: MetricReport,
    pub truth: Vec<f64>,
    /// `curves[k][r]` is estimator `k`'s curve on replicate `r`, `None` on failure.
    pub curves: Vec<Vec<Option<Vec<f64>>>>,
    /// Failure messages as `(estimator, replicate, message)`.
    pub failures: Vec<(Method, usize, String)>,
}

impl BenchmarkResult {
    pub fn curves_of(&self, method: Method) -> Option<&[Option<Vec<f64>>]> {
        let k = self.report.rows.iter().position(|r| r.estimator == method.name())?;
        Some(&self.curves[k])
    }

    /// Worst per-estimator failure share.
    pub fn failure_rate(&self) -> f64 {
        let r = self.report.scenario.monte_carlo.max(1) as f64;
        self.report.rows.iter().map(|row| row.failures as f64 / r).fold(0.0, f64::max)
    }

    pub fn within_failure_budget(&self) -> bool {
        self.failure_rate() <= MAX_FAILURE_RATE
    }
}

impl Accumulator {
    pub fn new(config: &BenchmarkConfig) -> Self {
        let tracks = config
            .methods
            .iter()
            .map(|&method| Track {
                method,
                beta: Vec::new(),
                scalars: Vec::new(),
                covariate: CellMoments { count: 0, mean: Vec::new(), m2: Vec::new() },
                errors: Vec::new(),
            })
            .collect();
        Self { config: config.clone(), tracks, next: 0 }
    }

    /// Outcomes must arrive in replicate order, which keeps every sum
    /// independent of how the replicates were scheduled.
    pub fn push(&mut self, outcome: ReplicateOutcome) -> Result<()> {
        if outcome.index != self.next {
            return Err(Error::InvalidData(format!(
                "replicate {} arrived out of order, expected {}",
                outcome.index, self.next
            )));
        }
        if outcome.runs.len() != self.tracks.len() {
            return Err(Error::LengthMismatch { expected: self.tracks.len(), found: outcome.runs.len() });
        }
        self.next += 1;
        for (track, run) in self.tracks.iter_mut().zip(outcome.runs) {
            match run {
                Ok(run) => {
                    track.covariate.add(&run.reconstruction)?;
                    track.scalars.push(run.scalars);
                    track.beta.push(Some(run.beta));
                }
                Err(e) => {
                    track.errors.push((outcome.index, format!("{e}")));
                    track.beta.push(None);
                }
            }
        }
        Ok(())
    }

    /// Marks replicate `index` as failed for every estimator, e.g. when the
    /// dataset itself could not be generated.
    pub fn push_failure(&mut self, index: usize, error: &Error) -> Result<()> {
        let runs = self.tracks.iter().map(|_| Err(error.clone())).collect();
        self.push(ReplicateOutcome { index, runs })
    }

    pub fn finish(self) -> Result<BenchmarkResult> {
        let s = &self.config.scenario;
        let truth: Vec<f64> = s.grid()?.points().iter().map(|&t| true_beta(t)).collect();
        let mut rows = Vec::new();
        let mut curves = Vec::new();
        let mut failures = Vec::new();
        for track in self.tracks {
            let ok: Vec<Vec<f64>> = track.beta.iter().flatten().cloned().collect();
            let failed = track.errors.len();
            let row = if ok.is_empty() {
                MetricRow {
                    estimator: track.method.name().into(),
                    abias2: f64::NAN,
                    avar: f64::NAN,
                    aimse: f64::NAN,
                    cov_avar: f64::NAN,
                    abias2_se: f64::NAN,
                    replicates: 0,
                    failures: failed,
                    alpha_mean: Vec::new(),
                }
            } else {
                let b = abias2(&ok, &truth)?;
                let v = avar(&ok)?;
                let se = if ok.len() > 1 { jackknife_se(&ok, |c| abias2(c, &truth))? } else { f64::NAN };
                let width = track.scalars[0].len();
                let alpha_mean = (1..width)
                    .map(|k| track.scalars.iter().map(|a| a[k]).sum::<f64>() / track.scalars.len() as f64)
                    .collect();
                MetricRow {
                    estimator: track.method.name().into(),
                    abias2: b,
                    avar: v,
                    aimse: b + v,
                    cov_avar: track.covariate.variance(),
                    abias2_se: se,
                    replicates: ok.len(),
                    failures: failed,
                    alpha_mean,
                }
            };
            rows.push(row);
            failures.extend(track.errors.into_iter().map(|(r, msg)| (track.method, r, msg)));
            curves.push(track.beta);
        }
        let report = MetricReport {
            scenario: ScenarioEcho {
                subjects: s.subjects,
                grid_size: s.grid_size,
                replicates: s.replicates,
                sigma_x: s.sigma_x,
                rho_x: s.rho_x,
                window: s.window,
                monte_carlo: s.monte_carlo,
                basis_size: s.basis_size,
                seed: s.seed,
            },
            rows,
        };
        Ok(BenchmarkResult { report, truth, curves, failures })
    }
}

/// Sequential driver; parallel drivers call [`run_replicate`] per index and
/// push the outcomes in index order, reproducing this result exactly.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let mut acc = Accumulator::new(cfg);
    for r in 0..cfg.scenario.monte_carlo {
        match run_replicate(cfg, r) {
            Ok(outcome) => acc.push(outcome)?,
            Err(e) => acc.push_failure(r, &e)?,
        }
    }
    acc.finish()
}
