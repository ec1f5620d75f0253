//! CSV formats: long-format counts, covariate tables, reconstructions, fitted
//! curves, bootstrap bands and benchmark reports.
//!
//! Every writer takes a header of `#` comment lines that is copied verbatim to
//! the top of the file; every reader skips such lines. Floats are written with
//! 17 significant digits so files round-trip exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use fmem_core::benchmark::BenchmarkResult;
use fmem_core::inference::BootstrapBands;
use fmem_core::metrics::MetricReport;
use fmem_core::mem::ReconstructedCovariate;
use fmem_core::sofr::SofrFit;
use fmem_core::{CountArray, Curves, FunctionalGrid, MultiLevelSample};

use crate::error::{Error, Result};

pub const COUNTS_FILE: &str = "counts.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const LATENT_FILE: &str = "latent.csv";
/// Optional covariate-file column read as observation weights.
pub const WEIGHT_COLUMN: &str = "weight";

/// Float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Marks every position inside a maximal run of zeros of length at least
/// `run_threshold`. Missing minutes end a run.
pub fn nonwear_mask(minutes: &[Option<u64>], run_threshold: usize) -> Vec<bool> {
    let mut mask = vec![false; minutes.len()];
    if run_threshold == 0 {
        return mask;
    }
    let mut start = 0;
    while start < minutes.len() {
        if minutes[start] != Some(0) {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < minutes.len() && minutes[end] == Some(0) {
            end += 1;
        }
        if end - start >= run_threshold {
            mask[start..end].iter_mut().for_each(|m| *m = true);
        }
        start = end;
    }
    mask
}

/// Raw slots per day and the analysis bins they are summed into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub slots_per_day: usize,
    pub bins: usize,
}

impl GridSpec {
    /// One bin per slot; used for datasets already on the analysis grid.
    pub fn identity(slots: usize) -> Self {
        Self { slots_per_day: slots, bins: slots }
    }

    fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.slots_per_day == 0 || !self.slots_per_day.is_multiple_of(self.bins) {
            return Err(Error::Usage(format!(
                "slots_per_day ({}) must be a positive multiple of bins ({})",
                self.slots_per_day, self.bins
            )));
        }
        if self.bins < 2 {
            return Err(Error::Usage("need at least 2 bins".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub grid: GridSpec,
    pub min_days: usize,
    /// `None` disables non-wear masking.
    pub nonwear_run: Option<usize>,
}

impl IngestOptions {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, min_days: 4, nonwear_run: Some(60) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub sample: MultiLevelSample,
    /// Subjects with fewer than `min_days` valid days.
    pub excluded: Vec<String>,
    /// Days beyond the common replicate count.
    pub dropped_days: usize,
    pub observed_minutes: usize,
    pub masked_minutes: usize,
    pub warnings: Vec<String>,
}

struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table<R: Read>(input: R, name: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let parse_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse { file: name.into(), line, message: e.to_string() }
    };
    let headers = rdr.headers().map_err(parse_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(Table { name: name.into(), headers, rows })
}

impl Table {
    fn expect_columns(&self, wanted: &[&str]) -> Result<()> {
        if self.headers.len() < wanted.len() || self.headers[..wanted.len()] != *wanted {
            return Err(Error::Parse {
                file: self.name.clone(),
                line: 1,
                message: format!("header must start with {}", wanted.join(",")),
            });
        }
        Ok(())
    }

    fn err(&self, line: u64, message: String) -> Error {
        Error::Parse { file: self.name.clone(), line, message }
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads long counts and covariates from files.
pub fn ingest(counts: &Path, covariates: &Path, opts: &IngestOptions) -> Result<Ingested> {
    let c = read_table(open(counts)?, &counts.display().to_string())?;
    let z = read_table(open(covariates)?, &covariates.display().to_string())?;
    assemble(c, z, opts)
}

/// [`ingest`] over in-memory readers.
pub fn ingest_from<R1: Read, R2: Read>(counts: R1, covariates: R2, opts: &IngestOptions) -> Result<Ingested> {
    assemble(read_table(counts, "counts")?, read_table(covariates, "covariates")?, opts)
}

type DayMinutes = BTreeMap<u64, Vec<Option<u64>>>;

fn assemble(counts: Table, covs: Table, opts: &IngestOptions) -> Result<Ingested> {
    opts.grid.validate()?;
    counts.expect_columns(&["subject_id", "day", "slot", "count"])?;
    covs.expect_columns(&["subject_id", "Y"])?;
    let spd = opts.grid.slots_per_day;

    let mut days: BTreeMap<String, DayMinutes> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (line, row) in &counts.rows {
        if row.len() != 4 {
            return Err(counts.err(*line, format!("expected 4 fields, found {}", row.len())));
        }
        let day: u64 = row[1].parse().map_err(|_| counts.err(*line, format!("bad day `{}`", row[1])))?;
        if day < 1 {
            return Err(counts.err(*line, "day must be at least 1".into()));
        }
        let slot: usize = row[2].parse().map_err(|_| counts.err(*line, format!("bad slot `{}`", row[2])))?;
        if slot >= spd {
            return Err(counts.err(*line, format!("slot {slot} outside 0..{spd}")));
        }
        let count = if row[3].is_empty() {
            None
        } else {
            Some(row[3].parse::<u64>().map_err(|_| counts.err(*line, format!("bad count `{}`", row[3])))?)
        };
        if !seen.insert((row[0].clone(), day, slot)) {
            return Err(counts.err(*line, format!("duplicate record for subject {}, day {day}, slot {slot}", row[0])));
        }
        days.entry(row[0].clone()).or_default().entry(day).or_insert_with(|| vec![None; spd])[slot] = count;
    }

    let per_bin = spd / opts.grid.bins;
    let mut observed_minutes = 0;
    let mut masked_minutes = 0;
    let mut binned: BTreeMap<String, Vec<Vec<Option<u64>>>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (id, by_day) in days {
        let mut valid = Vec::new();
        for minutes in by_day.values() {
            observed_minutes += minutes.iter().filter(|m| m.is_some()).count();
            let mask = opts.nonwear_run.map(|r| nonwear_mask(minutes, r)).unwrap_or_else(|| vec![false; spd]);
            masked_minutes += mask.iter().filter(|m| **m).count();
            let bins: Vec<Option<u64>> = (0..opts.grid.bins)
                .map(|b| {
                    let range = b * per_bin..(b + 1) * per_bin;
                    let kept: Vec<u64> = range.filter(|&s| !mask[s]).filter_map(|s| minutes[s]).collect();
                    (!kept.is_empty()).then(|| kept.iter().sum())
                })
                .collect();
            if bins.iter().any(Option::is_some) {
                valid.push(bins);
            }
        }
        if valid.len() < opts.min_days.max(1) {
            excluded.push(id);
        } else {
            binned.insert(id, valid);
        }
    }

    let mut warnings = Vec::new();
    let j = binned.values().map(Vec::len).min().unwrap_or(0);
    let dropped_days: usize = binned.values().map(|d| d.len() - j).sum();
    if dropped_days > 0 {
        warnings.push(format!("dropped {dropped_days} day(s) beyond the common {j} replicates per subject"));
    }

    let names: Vec<String> = covs.headers[2..].iter().filter(|h| *h != WEIGHT_COLUMN).cloned().collect();
    let weight_col = covs.headers.iter().position(|h| h == WEIGHT_COLUMN);
    let mut cov_rows: BTreeMap<String, (u8, Vec<f64>, Option<f64>)> = BTreeMap::new();
    for (line, row) in &covs.rows {
        if row.len() != covs.headers.len() {
            return Err(covs.err(*line, format!("expected {} fields, found {}", covs.headers.len(), row.len())));
        }
        let y = match row[1].as_str() {
            "0" => 0,
            "1" => 1,
            other => return Err(covs.err(*line, format!("outcome must be 0 or 1, got `{other}`"))),
        };
        let mut z = Vec::new();
        let mut w = None;
        for (k, v) in row.iter().enumerate().skip(2) {
            let x: f64 = v.parse().map_err(|_| covs.err(*line, format!("bad number `{v}` in {}", covs.headers[k])))?;
            if Some(k) == weight_col {
                w = Some(x);
            } else {
                z.push(x);
            }
        }
        if cov_rows.insert(row[0].clone(), (y, z, w)).is_some() {
            return Err(covs.err(*line, format!("duplicate subject {}", row[0])));
        }
    }

    let n = binned.len();
    let t = opts.grid.bins;
    let mut array = CountArray::new(n, j, t);
    let mut ids = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut zdata = Vec::with_capacity(n * names.len());
    let mut weights = Vec::with_capacity(n);
    for (i, (id, valid)) in binned.into_iter().enumerate() {
        let (y, z, w) = cov_rows
            .get(&id)
            .ok_or_else(|| Error::Data(format!("subject {id} has counts but no covariate row")))?;
        for (jj, bins) in valid.iter().take(j).enumerate() {
            for (s, v) in bins.iter().enumerate() {
                array.set(i, jj, s, *v);
            }
        }
        ids.push(id);
        outcome.push(*y);
        zdata.extend_from_slice(z);
        weights.push(*w);
    }
    let weights = if weight_col.is_some() { Some(weights.into_iter().map(|w| w.unwrap_or(f64::NAN)).collect()) } else { None };
    let sample = MultiLevelSample {
        grid: FunctionalGrid::uniform(t)?,
        subject_ids: ids,
        counts: array,
        covariates: Curves::from_vec(n, names.len(), zdata)?,
        covariate_names: names,
        outcome,
        latent: None,
        weights,
    };
    sample.validate()?;
    Ok(Ingested { sample, excluded, dropped_days, observed_minutes, masked_minutes, warnings })
}

fn csv_text(header: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(columns).map_err(|e| Error::Data(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(format!("{header}{}", String::from_utf8_lossy(&body)))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Long counts `subject_id,day,slot,count`; missing counts are empty fields.
pub fn counts_csv(sample: &MultiLevelSample, header: &str) -> Result<String> {
    let c = &sample.counts;
    let rows = (0..c.subjects()).flat_map(move |i| {
        (0..c.replicates()).flat_map(move |j| {
            (0..c.times()).map(move |t| {
                vec![
                    sample.subject_ids[i].clone(),
                    (j + 1).to_string(),
                    t.to_string(),
                    c.get(i, j, t).map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
        })
    });
    csv_text(header, &["subject_id", "day", "slot", "count"], rows)
}

/// `subject_id,Y,<covariates>[,weight]`.
pub fn covariates_csv(sample: &MultiLevelSample, header: &str) -> Result<String> {
    let mut cols: Vec<&str> = vec!["subject_id", "Y"];
    cols.extend(sample.covariate_names.iter().map(String::as_str));
    if sample.weights.is_some() {
        cols.push(WEIGHT_COLUMN);
    }
    let rows = (0..sample.subjects()).map(|i| {
        let mut r = vec![sample.subject_ids[i].clone(), sample.outcome[i].to_string()];
        r.extend(sample.covariates.row(i).iter().map(|v| fmt_f64(*v)));
        if let Some(w) = &sample.weights {
            r.push(fmt_f64(w[i]));
        }
        r
    });
    csv_text(header, &cols, rows)
}

/// Long curves `subject_id,slot,t,x`.
pub fn curves_csv(ids: &[String], grid: &FunctionalGrid, values: &Curves, header: &str) -> Result<String> {
    let rows = (0..values.rows()).flat_map(|i| {
        grid.points().iter().enumerate().map(move |(l, t)| {
            vec![ids[i].clone(), l.to_string(), fmt_f64(*t), fmt_f64(values.get(i, l))]
        })
    });
    csv_text(header, &["subject_id", "slot", "t", "x"], rows)
}

pub fn reconstruction_csv(sample: &MultiLevelSample, rec: &ReconstructedCovariate, header: &str) -> Result<String> {
    curves_csv(&sample.subject_ids, &sample.grid, &rec.values, header)
}

/// Writes counts, covariates and, when present, the latent curves into `dir`.
pub fn write_dataset(dir: &Path, sample: &MultiLevelSample, header: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let counts = dir.join(COUNTS_FILE);
    write_text(&counts, &counts_csv(sample, header)?)?;
    written.push(counts);
    let covs = dir.join(COVARIATES_FILE);
    write_text(&covs, &covariates_csv(sample, header)?)?;
    written.push(covs);
    if let Some(x) = &sample.latent {
        let path = dir.join(LATENT_FILE);
        write_text(&path, &curves_csv(&sample.subject_ids, &sample.grid, x, header)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a dataset directory already on its analysis grid. The grid size is
/// taken from `grid_size` or else from the largest slot present.
pub fn read_dataset(dir: &Path, grid_size: Option<usize>) -> Result<MultiLevelSample> {
    let counts_path = dir.join(COUNTS_FILE);
    let mut text = String::new();
    open(&counts_path)?.read_to_string(&mut text).map_err(|e| Error::io(&counts_path, e))?;
    let slots = match grid_size {
        Some(t) => t,
        None => {
            let table = read_table(text.as_bytes(), &counts_path.display().to_string())?;
            table.rows.iter().filter_map(|(_, r)| r.get(2)?.parse::<usize>().ok()).max().map_or(0, |m| m + 1)
        }
    };
    let opts = IngestOptions { grid: GridSpec::identity(slots), min_days: 1, nonwear_run: None };
    let c = read_table(text.as_bytes(), &counts_path.display().to_string())?;
    let covs_path = dir.join(COVARIATES_FILE);
    let z = read_table(open(&covs_path)?, &covs_path.display().to_string())?;
    let mut sample = assemble(c, z, &opts)?.sample;
    let latent_path = dir.join(LATENT_FILE);
    if latent_path.exists() {
        sample.latent = Some(read_latent(&latent_path, &sample)?);
    }
    sample.validate()?;
    Ok(sample)
}

fn read_latent(path: &Path, sample: &MultiLevelSample) -> Result<Curves> {
    let table = read_table(open(path)?, &path.display().to_string())?;
    table.expect_columns(&["subject_id", "slot", "t", "x"])?;
    let index: BTreeMap<&str, usize> = sample.subject_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let t = sample.grid.len();
    let mut x = vec![None; sample.subjects() * t];
    for (line, row) in &table.rows {
        let Some(&i) = index.get(row[0].as_str()) else { continue };
        let l: usize = row[1].parse().map_err(|_| table.err(*line, format!("bad slot `{}`", row[1])))?;
        if l >= t {
            return Err(table.err(*line, format!("slot {l} outside 0..{t}")));
        }
        let v: f64 = row[3].parse().map_err(|_| table.err(*line, format!("bad value `{}`", row[3])))?;
        x[i * t + l] = Some(v);
    }
    let values = x
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::Data(format!("{} does not cover every subject and slot", path.display())))?;
    Ok(Curves::from_vec(sample.subjects(), t, values)?)
}

/// `t,beta`.
pub fn beta_csv(grid: &FunctionalGrid, fit: &SofrFit, header: &str) -> Result<String> {
    let rows = grid.points().iter().zip(&fit.beta_curve).map(|(t, b)| vec![fmt_f64(*t), fmt_f64(*b)]);
    csv_text(header, &["t", "beta"], rows)
}

/// Scalar coefficients: `term,estimate,std_error,lower,upper`; the interval
/// columns are empty without bootstrap bands.
pub fn coefficients_csv(names: &[String], fit: &SofrFit, bands: Option<&BootstrapBands>, header: &str) -> Result<String> {
    let est = fit.coefficients_scalar();
    let se = fit.scalar_std_errors();
    let rows = names.iter().enumerate().map(|(k, name)| {
        vec![
            name.clone(),
            fmt_f64(est[k]),
            opt_f64(se.get(k).copied()),
            opt_f64(bands.map(|b| b.scalar_lower[k])),
            opt_f64(bands.map(|b| b.scalar_upper[k])),
        ]
    });
    csv_text(header, &["term", "estimate", "std_error", "lower", "upper"], rows)
}

/// `t,lower,estimate,upper`.
pub fn bands_csv(bands: &BootstrapBands, header: &str) -> Result<String> {
    let rows = (0..bands.points.len()).map(|l| {
        vec![fmt_f64(bands.points[l]), fmt_f64(bands.lower[l]), fmt_f64(bands.estimate[l]), fmt_f64(bands.upper[l])]
    });
    csv_text(header, &["t", "lower", "estimate", "upper"], rows)
}

pub const REPORT_COLUMNS: [&str; 5] = ["estimator", "abias2", "avar", "aimse", "cov_avar"];

fn scenario_header(report: &MetricReport) -> String {
    let s = &report.scenario;
    format!(
        "# scenario n={} T={} J={} sigma_x={} rho_x={} D={} R={} K_n={} seed={}\n",
        s.subjects, s.grid_size, s.replicates, s.sigma_x, s.rho_x, s.window, s.monte_carlo, s.basis_size, s.seed
    )
}

/// One scenario's table with the fixed metric columns.
pub fn report_csv(report: &MetricReport, header: &str) -> Result<String> {
    let rows = report.rows.iter().map(|r| {
        vec![r.estimator.clone(), fmt_f64(r.abias2), fmt_f64(r.avar), fmt_f64(r.aimse), fmt_f64(r.cov_avar)]
    });
    csv_text(&format!("{header}{}", scenario_header(report)), &REPORT_COLUMNS, rows)
}

/// Every scenario in one table, with scenario columns, Monte Carlo standard
/// errors and failure counts.
pub fn combined_csv(results: &[BenchmarkResult], header: &str) -> Result<String> {
    let cols = [
        "n", "T", "J", "sigma_x", "rho_x", "D", "R", "K_n", "estimator", "abias2", "avar", "aimse", "cov_avar",
        "abias2_se", "replicates", "failures",
    ];
    let rows = results.iter().flat_map(|res| {
        let s = res.report.scenario.clone();
        res.report.rows.iter().map(move |r| {
            vec![
                s.subjects.to_string(),
                s.grid_size.to_string(),
                s.replicates.to_string(),
                s.sigma_x.to_string(),
                s.rho_x.to_string(),
                s.window.to_string(),
                s.monte_carlo.to_string(),
                s.basis_size.to_string(),
                r.estimator.clone(),
                fmt_f64(r.abias2),
                fmt_f64(r.avar),
                fmt_f64(r.aimse),
                fmt_f64(r.cov_avar),
                fmt_f64(r.abias2_se),
                r.replicates.to_string(),
                r.failures.to_string(),
            ]
        })
    });
    csv_text(header, &cols, rows)
}
