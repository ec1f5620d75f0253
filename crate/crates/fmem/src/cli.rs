//! Command-line front end. [`run`] returns the process exit code so the whole
//! surface can be driven in-process.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use fmem_core::benchmark::{BenchmarkConfig, BenchmarkResult};
use fmem_core::glmm::GlmmOptions;
use fmem_core::mem::{diagnostic_summary, Method};
use fmem_core::pipeline::{fit, reconstruct, scalar_names, PipelineConfig};
use fmem_core::simulate::{make_dataset, ScenarioConfig};
use fmem_core::MultiLevelSample;

use crate::config::{describe_keys, Settings};
use crate::error::{Error, Result};
use crate::harness;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Fit,
    Reconstruct,
    Bootstrap,
    Benchmark,
    Ingest,
}

#[derive(Debug, Parser)]
#[command(
    name = "fmem",
    about = "Measurement-error corrected functional logistic regression",
    after_help = format!("Settings (config file lines or KEY=VALUE arguments):\n{}", describe_keys())
)]
pub struct Cli {
    pub command: Command,
    /// KEY=VALUE overrides applied after the config file.
    pub overrides: Vec<String>,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "NAME")]
    pub method: Option<String>,
    /// Window size D.
    #[arg(long = "D", value_name = "INT")]
    pub window: Option<usize>,
    /// Basis size K_n.
    #[arg(long = "K", value_name = "INT")]
    pub basis: Option<usize>,
    /// Bootstrap resamples B.
    #[arg(long = "B", value_name = "INT")]
    pub resamples: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Cli {
    /// Defaults, then the config file, then `KEY=VALUE` arguments, then flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::new();
        if let Some(path) = &self.config {
            s.merge_file(path)?;
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Usage(format!("expected KEY=VALUE, got `{o}`")))?;
            s.set(k.trim(), v)?;
        }
        if let Some(v) = self.seed {
            s.set("seed", &v.to_string())?;
        }
        if let Some(v) = &self.method {
            let key = if self.command == Command::Benchmark { "methods" } else { "method" };
            s.set(key, v)?;
        }
        if let Some(v) = self.window {
            s.set("window", &v.to_string())?;
        }
        if let Some(v) = self.basis {
            s.set("basis_size", &v.to_string())?;
        }
        if let Some(v) = self.resamples {
            s.set("resamples", &v.to_string())?;
        }
        if let Some(v) = self.threads {
            s.set("threads", &v.to_string())?;
        }
        if let Some(v) = &self.out {
            s.set("out", &v.display().to_string())?;
        }
        Ok(s)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let s = cli.settings()?;
    match cli.command {
        Command::Simulate => simulate(&s),
        Command::Fit => fit_cmd(&s, false),
        Command::Bootstrap => fit_cmd(&s, true),
        Command::Reconstruct => reconstruct_cmd(&s),
        Command::Benchmark => benchmark_cmd(&s),
        Command::Ingest => ingest_cmd(&s),
    }
    .map(|summary| println!("{summary}"))
}

fn out_dir(s: &Settings) -> PathBuf {
    PathBuf::from(s.raw("out"))
}

fn scenario(s: &Settings) -> Result<ScenarioConfig> {
    Ok(ScenarioConfig {
        subjects: s.single("subjects")?,
        grid_size: s.get("grid_size")?,
        replicates: s.get("replicates")?,
        sigma_x: s.single("sigma_x")?,
        rho_x: s.single("rho_x")?,
        window: s.single("window")?,
        seed: s.get("seed")?,
        monte_carlo: s.get("monte_carlo")?,
        basis_size: s.get("basis_size")?,
    })
}

fn pipeline(s: &Settings) -> Result<PipelineConfig> {
    let method: Method = s.get("method")?;
    Ok(PipelineConfig {
        method,
        window: s.single("window")?,
        basis_size: s.get("basis_size")?,
        fve: s.get("fve")?,
        glmm: GlmmOptions::default(),
    })
}

fn load_data(s: &Settings) -> Result<MultiLevelSample> {
    let dir = s.raw("data");
    if dir.is_empty() {
        return Err(Error::Usage("set `data` to a dataset directory (see `fmem simulate` or `fmem ingest`)".into()));
    }
    let grid = if s.is_set("grid_size") { Some(s.get("grid_size")?) } else { None };
    io::read_dataset(Path::new(dir), grid)
}

fn simulate(s: &Settings) -> Result<String> {
    let cfg = scenario(s)?;
    let data = make_dataset(&cfg)?;
    let sample = data.to_sample();
    io::write_dataset(&out_dir(s), &sample, &s.header("simulate"))?;
    let prevalence = sample.outcome.iter().map(|&y| y as f64).sum::<f64>() / sample.subjects() as f64;
    Ok(format!("n={} T={} J={} prevalence={prevalence:.4}", cfg.subjects, cfg.grid_size, cfg.replicates))
}

fn reconstruct_cmd(s: &Settings) -> Result<String> {
    let sample = load_data(s)?;
    let cfg = pipeline(s)?;
    let rec = reconstruct(&sample, &cfg)?;
    let path = out_dir(s).join("reconstruction.csv");
    io::write_text(&path, &io::reconstruction_csv(&sample, &rec, &s.header("reconstruct"))?)?;
    let mut summary = format!("{} reconstruction of n={} subjects written to {}", cfg.method, sample.subjects(), path.display());
    let problems = diagnostic_summary(&rec);
    if !problems.is_empty() {
        summary.push_str(&format!("; {problems}"));
    }
    if rec.imputed > 0 {
        summary.push_str(&format!("; {} missing cells interpolated", rec.imputed));
    }
    Ok(summary)
}

fn fit_cmd(s: &Settings, force_bootstrap: bool) -> Result<String> {
    let sample = load_data(s)?;
    let cfg = pipeline(s)?;
    let command = if force_bootstrap { "bootstrap" } else { "fit" };
    let header = s.header(command);
    let out = out_dir(s);
    let point = fit(&sample, &cfg)?;
    let bands = if force_bootstrap || s.is_set("resamples") {
        let b = harness::bootstrap(&sample, &cfg, s.get("resamples")?, s.get("level")?, s.get("seed")?, s.get("threads")?)?;
        io::write_text(&out.join("bands.csv"), &io::bands_csv(&b, &header)?)?;
        Some(b)
    } else {
        None
    };
    io::write_text(&out.join("beta.csv"), &io::beta_csv(&sample.grid, &point.fit, &header)?)?;
    let names = scalar_names(&sample);
    io::write_text(&out.join("coefficients.csv"), &io::coefficients_csv(&names, &point.fit, bands.as_ref(), &header)?)?;
    let coef = point.fit.coefficients_scalar();
    let mut summary = format!("{} fit on n={}:", cfg.method, sample.subjects());
    for (name, v) in names.iter().zip(&coef) {
        summary.push_str(&format!(" {name}={v:.4}"));
    }
    if let Some(b) = &bands {
        summary.push_str(&format!("; {} of {} resamples, mean band width {:.4}", b.draws.len(), b.requested, b.mean_width()));
    }
    Ok(summary)
}

fn benchmark_cmd(s: &Settings) -> Result<String> {
    let header = s.header("benchmark");
    let out = out_dir(s);
    let threads: usize = s.get("threads")?;
    let methods: Vec<Method> = s.list("methods")?;
    let mut results: Vec<BenchmarkResult> = Vec::new();
    let mut log = String::new();
    let mut over_budget = Vec::new();
    let mut lines = String::new();
    let mut k = 0;
    for n in s.list::<usize>("subjects")? {
        for sigma in s.list::<f64>("sigma_x")? {
            for rho in s.list::<f64>("rho_x")? {
                for d in s.list::<usize>("window")? {
                    let sc = ScenarioConfig { subjects: n, sigma_x: sigma, rho_x: rho, window: d, ..scenario_base(s)? };
                    let cfg = BenchmarkConfig { methods: methods.clone(), fve: s.get("fve")?, ..BenchmarkConfig::new(sc) };
                    let res = harness::benchmark(&cfg, threads)?;
                    io::write_text(&out.join(format!("report_{k}.csv")), &io::report_csv(&res.report, &header)?)?;
                    for (m, r, msg) in &res.failures {
                        log.push_str(&format!("scenario {k} replicate {r} {m}: {msg}\n"));
                    }
                    if !res.within_failure_budget() {
                        over_budget.push(k);
                    }
                    lines.push_str(&format!("scenario {k}: n={n} sigma_x={sigma} rho_x={rho} D={d}\n"));
                    for row in &res.report.rows {
                        lines.push_str(&format!(
                            "  {:<8} abias2={:.4} avar={:.4} aimse={:.4} cov_avar={:.4} failures={}\n",
                            row.estimator, row.abias2, row.avar, row.aimse, row.cov_avar, row.failures
                        ));
                    }
                    results.push(res);
                    k += 1;
                }
            }
        }
    }
    io::write_text(&out.join("benchmark.csv"), &io::combined_csv(&results, &header)?)?;
    if !log.is_empty() {
        io::write_text(&out.join("failures.log"), &format!("{header}{log}"))?;
    }
    if !over_budget.is_empty() {
        print!("{lines}");
        return Err(Error::Threshold(format!(
            "more than 5% of replicate fits failed in scenario(s) {over_budget:?}; see failures.log"
        )));
    }
    Ok(lines.trim_end().to_string())
}

fn scenario_base(s: &Settings) -> Result<ScenarioConfig> {
    Ok(ScenarioConfig {
        subjects: 2,
        sigma_x: 0.0,
        rho_x: 0.0,
        window: 1,
        grid_size: s.get("grid_size")?,
        replicates: s.get("replicates")?,
        seed: s.get("seed")?,
        monte_carlo: s.get("monte_carlo")?,
        basis_size: s.get("basis_size")?,
    })
}

fn ingest_cmd(s: &Settings) -> Result<String> {
    let (counts, covs) = (s.raw("counts"), s.raw("covariates"));
    if counts.is_empty() || covs.is_empty() {
        return Err(Error::Usage("ingest needs both `counts` and `covariates` paths".into()));
    }
    let run: usize = s.get("nonwear_run")?;
    let opts = io::IngestOptions {
        grid: io::GridSpec { slots_per_day: s.get("slots_per_day")?, bins: s.get("bins")? },
        min_days: s.get("min_days")?,
        nonwear_run: (run > 0).then_some(run),
    };
    let got = io::ingest(Path::new(counts), Path::new(covs), &opts)?;
    for w in &got.warnings {
        eprintln!("warning: {w}");
    }
    io::write_dataset(&out_dir(s), &got.sample, &s.header("ingest"))?;
    Ok(format!(
        "kept {} subjects ({} excluded with fewer than {} days), J={}, masked {} of {} observed minutes",
        got.sample.subjects(),
        got.excluded.len(),
        opts.min_days,
        got.sample.counts.replicates(),
        got.masked_minutes,
        got.observed_minutes
    ))
}
