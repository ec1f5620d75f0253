//! `key=value` settings with `#` comments, layered over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every recognised key, its default and a one-line description, in the order
/// used for embedded headers.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "20240607", "master seed"),
    ("subjects", "500", "number of subjects n (comma list for benchmark)"),
    ("grid_size", "50", "grid points T"),
    ("replicates", "5", "surrogate replicates J"),
    ("sigma_x", "2.0", "latent process scale (comma list for benchmark)"),
    ("rho_x", "0.5", "AR(1) lag-one correlation (comma list for benchmark)"),
    ("window", "3", "MP_MEM window D (comma list for benchmark)"),
    ("monte_carlo", "100", "Monte Carlo replicates R"),
    ("basis_size", "15", "cubic B-spline basis size K_n"),
    ("method", "mp_mem", "estimator for fit, reconstruct and bootstrap"),
    ("methods", "oracle,mp_mem,up_mem,pace,average,naive", "benchmark estimators"),
    ("resamples", "200", "bootstrap resamples B"),
    ("level", "0.95", "bootstrap confidence level"),
    ("fve", "0.99", "PACE fraction of variance explained"),
    ("data", "", "dataset directory for fit, reconstruct and bootstrap"),
    ("counts", "", "long count CSV for ingest"),
    ("covariates", "", "covariate CSV for ingest"),
    ("slots_per_day", "1440", "raw slots per day for ingest"),
    ("bins", "24", "analysis grid bins for ingest"),
    ("min_days", "4", "minimum valid days per subject for ingest"),
    ("nonwear_run", "60", "zero-run length marking non-wear, 0 disables"),
    ("threads", "0", "worker threads, 0 uses every core"),
    ("out", "out", "output directory"),
];

/// Keys that only affect how a run executes, never its results.
const EXECUTION_KEYS: &[&str] = &["threads", "out"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn valid_keys() -> String {
    KEYS.iter().map(|k| k.0).collect::<Vec<_>>().join(", ")
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key` after checking it is known.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|k| k.0 == key) {
            return Err(Error::Usage(format!("unknown config key `{key}`; valid keys: {}", valid_keys())));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("{origin}:{}: expected key=value, got `{line}`", no + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Usage(format!("{origin}:{}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        KEYS.iter().find(|k| k.0 == key).map(|k| k.1).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| Error::Usage(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        let out = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Usage(format!("bad value `{s}` in `{key}`: {e}"))))
            .collect::<Result<Vec<T>>>()?;
        if out.is_empty() {
            return Err(Error::Usage(format!("`{key}` needs at least one value")));
        }
        Ok(out)
    }

    /// Single value of a key that may hold a list elsewhere.
    pub fn single<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let mut v = self.list(key)?;
        if v.len() != 1 {
            return Err(Error::Usage(format!("`{key}` takes a single value for this command")));
        }
        Ok(v.remove(0))
    }

    /// Comment lines embedding every result-relevant setting.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("# fmem {command}\n");
        for (k, _, _) in KEYS {
            if !EXECUTION_KEYS.contains(k) {
                out.push_str(&format!("# {k}={}\n", self.raw(k)));
            }
        }
        out
    }
}

/// Text listing every key with its default.
pub fn describe_keys() -> String {
    KEYS.iter().map(|(k, d, h)| format!("  {k:<14} {h} [default: {d}]\n")).collect()
}
