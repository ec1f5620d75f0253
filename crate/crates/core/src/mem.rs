//! Stage-one reconstructions of the latent curves `X_i(t)` from replicate counts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{CountArray, Curves};
use crate::error::{Error, Result};
use crate::glmm::{
    fit_gaussian_pointwise, fit_pointwise, fit_pointwise_from, fit_window, fit_window_from,
    predict_x, GaussianArray, GlmmFit, GlmmOptions, WindowCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Oracle,
    MpMem,
    UpMem,
    Pace,
    Average,
    Naive,
}

impl Method {
    /// Column order of the benchmark tables.
    pub const ALL: [Method; 6] =
        [Method::Oracle, Method::MpMem, Method::UpMem, Method::Pace, Method::Average, Method::Naive];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::MpMem => "mp_mem",
            Method::UpMem => "up_mem",
            Method::Pace => "pace",
            Method::Average => "average",
            Method::Naive => "naive",
        }
    }

    /// Whether the reconstruction depends on the window size `D`.
    pub fn uses_window(self) -> bool {
        self == Method::MpMem
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL.iter().copied().find(|m| m.name() == key).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown method '{s}'; expected one of oracle, mp_mem, up_mem, pace, average, naive"
            ))
        })
    }
}

/// Summary of one mixed-model fit behind a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostic {
    /// First grid index covered by the fit.
    pub start: usize,
    pub mu: f64,
    pub var_components: Vec<f64>,
    pub converged: bool,
    pub degenerate: bool,
    pub iterations: usize,
}

impl FitDiagnostic {
    fn from_fit(start: usize, fit: &GlmmFit) -> Self {
        Self {
            start,
            mu: fit.mu,
            var_components: fit.var_components.clone(),
            converged: fit.converged,
            degenerate: fit.degenerate,
            iterations: fit.iterations,
        }
    }
}

/// `n x T` reconstruction with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedCovariate {
    pub method: Method,
    pub values: Curves,
    /// Window size for `MpMem`, `None` otherwise.
    pub window: Option<usize>,
    pub diagnostics: Vec<FitDiagnostic>,
    /// Entries filled from neighbouring times because nothing was observed there.
    pub imputed: usize,
}

impl ReconstructedCovariate {
    pub fn new(method: Method, values: Curves) -> Self {
        Self { method, values, window: None, diagnostics: Vec::new(), imputed: 0 }
    }

    pub fn degenerate_fits(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.degenerate).count()
    }

    pub fn unconverged_fits(&self) -> usize {
        self.diagnostics.iter().filter(|d| !d.converged).count()
    }
}

fn check_weights(counts: &CountArray, weights: Option<&[f64]>) -> Result<()> {
    match weights {
        Some(w) if w.len() != counts.subjects() => {
            Err(Error::LengthMismatch { expected: counts.subjects(), found: w.len() })
        }
        _ => Ok(()),
    }
}

/// Point-wise random-intercept Poisson fits, one per grid point.
pub fn up_mem(counts: &CountArray, weights: Option<&[f64]>, opts: &GlmmOptions) -> Result<ReconstructedCovariate> {
    if counts.replicates() < 2 {
        return Err(Error::InvalidData(format!(
            "point-wise mixed model needs at least 2 replicates, got {}",
            counts.replicates()
        )));
    }
    check_weights(counts, weights)?;
    let mut out = windowed(counts, 1, weights, opts)?;
    out.method = Method::UpMem;
    out.window = None;
    Ok(out)
}

/// Sliding-window fits over `D` adjacent grid points.
pub fn mp_mem(
    counts: &CountArray,
    window: usize,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
) -> Result<ReconstructedCovariate> {
    if window < 2 {
        return Err(Error::WindowTooSmall);
    }
    if window > counts.times() {
        return Err(Error::WindowTooLarge { window, available: counts.times() });
    }
    check_weights(counts, weights)?;
    windowed(counts, window, weights, opts)
}

/// Slot of a window of size `d` whose prediction is kept (0-based).
pub fn center_slot(d: usize) -> usize {
    (d - 1) / 2
}

/// Shared driver; `d = 1` reproduces the point-wise fit. Each fit starts
/// from the estimates of the previous window.
fn windowed(
    counts: &CountArray,
    d: usize,
    weights: Option<&[f64]>,
    opts: &GlmmOptions,
) -> Result<ReconstructedCovariate> {
    let (n, times) = (counts.subjects(), counts.times());
    let mut values = Curves::zeros(n, times);
    let mut diagnostics = Vec::with_capacity(times + 1 - d);
    let c = center_slot(d);
    let last = times - d;
    let mut previous: Option<GlmmFit> = None;
    for s in 0..=last {
        let data = WindowCounts::from_array(counts, s, d)?;
        let fit = match (&previous, d) {
            (None, 1) => fit_pointwise(&data, weights, opts),
            (Some(p), 1) => fit_pointwise_from(&data, weights, opts, p),
            (None, _) => fit_window(&data, weights, opts),
            (Some(p), _) => fit_window_from(&data, weights, opts, p),
        }
        .map_err(|e| at_time(e, s))?;
        // boundary times take the first and last windows' own slots
        let slots: Vec<usize> = if d == 1 {
            vec![0]
        } else if s == 0 && s == last {
            (0..d).collect()
        } else if s == 0 {
            (0..=c).collect()
        } else if s == last {
            (c..d).collect()
        } else {
            vec![c]
        };
        for slot in slots {
            for i in 0..n {
                values.set(i, s + slot, predict_x(&fit, i, slot)?);
            }
        }
        diagnostics.push(FitDiagnostic::from_fit(s, &fit));
        previous = Some(fit);
    }
    Ok(ReconstructedCovariate {
        method: Method::MpMem,
        values,
        window: Some(d),
        diagnostics,
        imputed: 0,
    })
}

fn at_time(e: Error, t: usize) -> Error {
    match e {
        Error::InvalidData(msg) => Error::InvalidData(format!("{msg} (grid index {t})")),
        other => other,
    }
}

/// `log(mean_j W_ij(t) + 1)` over the observed replicates.
pub fn average_reconstruct(counts: &CountArray) -> Result<ReconstructedCovariate> {
    transform(counts, Method::Average, |obs| {
        let (s, m) = obs.iter().flatten().fold((0.0, 0.0), |(s, m), &c| (s + c as f64, m + 1.0));
        (m > 0.0).then(|| libm::log(s / m + 1.0))
    })
}

/// `log(W_i1(t) + 1)` from the first replicate only.
pub fn naive_reconstruct(counts: &CountArray) -> Result<ReconstructedCovariate> {
    transform(counts, Method::Naive, |obs| obs.first().copied().flatten().map(|c| libm::log(c as f64 + 1.0)))
}

/// Per-subject mean of `log(W_ij(t) + 1)` over observed replicates; `None` when
/// nothing is observed.
pub fn mean_log_curves(counts: &CountArray) -> Vec<Vec<Option<f64>>> {
    per_entry(counts, |obs| {
        let (s, m) = obs
            .iter()
            .flatten()
            .fold((0.0, 0.0), |(s, m), &c| (s + libm::log(c as f64 + 1.0), m + 1.0));
        (m > 0.0).then(|| s / m)
    })
}

fn per_entry<F: Fn(&[Option<u64>]) -> Option<f64>>(counts: &CountArray, f: F) -> Vec<Vec<Option<f64>>> {
    let (n, reps, times) = (counts.subjects(), counts.replicates(), counts.times());
    let mut column = vec![None; reps];
    (0..n)
        .map(|i| {
            (0..times)
                .map(|t| {
                    for (j, slot) in column.iter_mut().enumerate() {
                        *slot = counts.get(i, j, t);
                    }
                    f(&column)
                })
                .collect()
        })
        .collect()
}

fn transform<F: Fn(&[Option<u64>]) -> Option<f64>>(
    counts: &CountArray,
    method: Method,
    f: F,
) -> Result<ReconstructedCovariate> {
    if counts.replicates() == 0 {
        return Err(Error::InvalidData("no replicates".into()));
    }
    let rows = per_entry(counts, f);
    let (values, imputed) = fill_gaps(&rows)?;
    Ok(ReconstructedCovariate { method, values, window: None, diagnostics: Vec::new(), imputed })
}

/// Linear interpolation across missing times within each subject, constant
/// beyond the first and last observed times.
pub fn fill_gaps(rows: &[Vec<Option<f64>>]) -> Result<(Curves, usize)> {
    let times = rows.first().map_or(0, Vec::len);
    let mut out = Curves::zeros(rows.len(), times);
    let mut imputed = 0;
    for (i, row) in rows.iter().enumerate() {
        let known: Vec<usize> = (0..times).filter(|&t| row[t].is_some()).collect();
        let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
            return Err(Error::InvalidData(format!("subject {i} has no observed counts")));
        };
        let mut k = 0;
        for t in 0..times {
            let v = match row[t] {
                Some(v) => v,
                None => {
                    imputed += 1;
                    if t < first {
                        row[first].unwrap_or_default()
                    } else if t > last {
                        row[last].unwrap_or_default()
                    } else {
                        while known[k + 1] < t {
                            k += 1;
                        }
                        let (a, b) = (known[k], known[k + 1]);
                        let (va, vb) = (row[a].unwrap_or_default(), row[b].unwrap_or_default());
                        va + (vb - va) * (t - a) as f64 / (b - a) as f64
                    }
                }
            };
            out.set(i, t, v);
        }
    }
    Ok((out, imputed))
}

/// Identity-link analogue of [`up_mem`]: Gaussian random-intercept BLUPs per time.
pub fn up_mem_gaussian(values: &GaussianArray) -> Result<ReconstructedCovariate> {
    let (n, reps, times) = (values.subjects(), values.replicates(), values.times());
    let mut out = Curves::zeros(n, times);
    let mut diagnostics = Vec::with_capacity(times);
    for t in 0..times {
        let rows: Vec<Vec<Option<f64>>> =
            (0..n).map(|i| (0..reps).map(|j| values.get(i, j, t)).collect()).collect();
        let fit = fit_gaussian_pointwise(&rows).map_err(|e| at_time(e, t))?;
        for i in 0..n {
            out.set(i, t, predict_x(&fit, i, 0)?);
        }
        diagnostics.push(FitDiagnostic::from_fit(t, &fit));
    }
    Ok(ReconstructedCovariate { method: Method::UpMem, values: out, window: None, diagnostics, imputed: 0 })
}

/// Human-readable one-line summary of fit problems, empty when there are none.
pub fn diagnostic_summary(rec: &ReconstructedCovariate) -> String {
    let (deg, unc) = (rec.degenerate_fits(), rec.unconverged_fits());
    if deg == 0 && unc == 0 {
        String::new()
    } else {
        format!("{}: {deg} degenerate and {unc} unconverged fits", rec.method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{make_dataset, ScenarioConfig};

    fn constant_counts(n: usize, reps: usize, times: usize, c: u64) -> CountArray {
        CountArray::from_vec(n, reps, times, vec![Some(c); n * reps * times]).unwrap()
    }

    fn mse(a: &Curves, b: &Curves) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.as_slice().len() as f64
    }

    #[test]
    fn up_mem_constant_counts_recover_log_rate() {
        let w = constant_counts(20, 4, 6, 7);
        let rec = up_mem(&w, None, &GlmmOptions::default()).unwrap();
        for v in rec.values.as_slice() {
            assert!((v - libm::log(7.0)).abs() < 1e-6, "{v}");
        }
        assert_eq!(rec.diagnostics.len(), 6);
    }

    #[test]
    fn up_mem_requires_two_replicates() {
        let w = constant_counts(10, 1, 4, 3);
        assert!(up_mem(&w, None, &GlmmOptions::default()).is_err());
    }

    #[test]
    fn mp_mem_rejects_unit_window() {
        let w = constant_counts(10, 3, 5, 3);
        let err = mp_mem(&w, 1, None, &GlmmOptions::default()).unwrap_err();
        assert_eq!(err, Error::WindowTooSmall);
        assert!(format!("{err}").contains("up_mem"));
        assert!(matches!(mp_mem(&w, 6, None, &GlmmOptions::default()), Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn mp_mem_constant_in_time_when_subjects_repeat_across_time() {
        let (n, reps, times) = (30, 4, 8);
        let mut w = CountArray::new(n, reps, times);
        for i in 0..n {
            for j in 0..reps {
                for t in 0..times {
                    w.set(i, j, t, Some(((i * 7 + j * 3) % 11) as u64));
                }
            }
        }
        let rec = mp_mem(&w, 3, None, &GlmmOptions::default()).unwrap();
        for i in 0..n {
            let row = rec.values.row(i);
            for v in row {
                assert!((v - row[0]).abs() < 1e-6, "subject {i}: {row:?}");
            }
        }
    }

    #[test]
    fn center_slot_matches_odd_and_even_windows() {
        assert_eq!(center_slot(3), 1);
        assert_eq!(center_slot(4), 1);
        assert_eq!(center_slot(5), 2);
        assert_eq!(center_slot(6), 2);
    }

    #[test]
    fn windowed_unit_shim_equals_up_mem() {
        let cfg = ScenarioConfig { subjects: 60, grid_size: 8, ..Default::default() };
        let data = make_dataset(&cfg).unwrap();
        let opts = GlmmOptions::default();
        let up = up_mem(&data.counts, None, &opts).unwrap();
        let shim = windowed(&data.counts, 1, None, &opts).unwrap();
        for (a, b) in up.values.as_slice().iter().zip(shim.values.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mp_mem_covers_every_time_from_the_right_window() {
        let cfg = ScenarioConfig { subjects: 60, grid_size: 9, ..Default::default() };
        let data = make_dataset(&cfg).unwrap();
        let opts = GlmmOptions::default();
        for d in [3, 4] {
            let rec = mp_mem(&data.counts, d, None, &opts).unwrap();
            assert_eq!(rec.diagnostics.len(), 9 - d + 1);
            // the first window's fit predicts its leading slots directly
            let first = fit_window(&WindowCounts::from_array(&data.counts, 0, d).unwrap(), None, &opts).unwrap();
            for i in 0..5 {
                for slot in 0..=center_slot(d) {
                    let direct = predict_x(&first, i, slot).unwrap();
                    assert!((rec.values.get(i, slot) - direct).abs() < 1e-5);
                }
            }
            assert!(rec.values.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn average_and_naive_arithmetic() {
        let mut w = CountArray::new(2, 5, 1);
        for j in 0..5 {
            w.set(0, j, 0, Some(j as u64 + 1));
            w.set(1, j, 0, Some(0));
        }
        w.set(1, 0, 0, Some(2));
        let avg = average_reconstruct(&w).unwrap();
        assert!((avg.values.get(0, 0) - libm::log(4.0)).abs() < 1e-15);
        assert!((avg.values.get(0, 0) - 1.386_294_361_119_890_6).abs() < 1e-12);
        let naive = naive_reconstruct(&w).unwrap();
        assert_eq!(naive.values.get(0, 0), libm::log(2.0));
        assert_eq!(naive.values.get(1, 0), libm::log(3.0));
        let zero = constant_counts(3, 4, 2, 0);
        assert!(average_reconstruct(&zero).unwrap().values.as_slice().iter().all(|v| *v == 0.0));
        assert!(naive_reconstruct(&zero).unwrap().values.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn average_ignores_replicate_order_and_naive_ignores_later_replicates() {
        let cfg = ScenarioConfig { subjects: 40, grid_size: 10, ..Default::default() };
        let data = make_dataset(&cfg).unwrap();
        let avg = average_reconstruct(&data.counts).unwrap();
        let permuted = data.counts.permute_replicates(&[3, 1, 4, 0, 2]);
        assert_eq!(avg.values, average_reconstruct(&permuted).unwrap().values);
        let mut changed = data.counts.clone();
        for i in 0..40 {
            for t in 0..10 {
                changed.set(i, 2, t, Some(999));
            }
        }
        assert_eq!(naive_reconstruct(&data.counts).unwrap().values, naive_reconstruct(&changed).unwrap().values);
    }

    #[test]
    fn missing_entries_are_interpolated() {
        let rows = vec![vec![None, Some(1.0), None, None, Some(4.0), None]];
        let (c, imputed) = fill_gaps(&rows).unwrap();
        assert_eq!(c.row(0), &[1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert_eq!(imputed, 4);
        assert!(fill_gaps(&[vec![None, None]]).is_err());
    }

    #[test]
    fn gaussian_variant_shrinks_toward_grand_mean() {
        let (n, reps) = (40, 3);
        let mut g = GaussianArray::new(n, reps, 2);
        for i in 0..n {
            for j in 0..reps {
                for t in 0..2 {
                    let v = (i % 7) as f64 + [0.5, -0.3, -0.2][j] * (1.0 + t as f64);
                    g.set(i, j, t, Some(v));
                }
            }
        }
        let rec = up_mem_gaussian(&g).unwrap();
        for t in 0..2 {
            let means: Vec<f64> =
                (0..n).map(|i| (0..reps).map(|j| g.get(i, j, t).unwrap()).sum::<f64>() / reps as f64).collect();
            let grand = means.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                let (x, m) = (rec.values.get(i, t), means[i]);
                assert!((x - grand).abs() <= (m - grand).abs() + 1e-12);
                assert!((x - grand) * (m - grand) >= 0.0);
            }
        }
    }

    #[test]
    fn up_mem_beats_naive_against_truth() {
        let cfg = ScenarioConfig { subjects: 1000, ..Default::default() };
        let data = make_dataset(&cfg).unwrap();
        let up = up_mem(&data.counts, None, &GlmmOptions::default()).unwrap();
        let naive = naive_reconstruct(&data.counts).unwrap();
        let (e_up, e_naive) = (mse(&up.values, &data.latent), mse(&naive.values, &data.latent));
        assert!(e_up < e_naive, "{e_up} vs {e_naive}");
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("MP-MEM".parse::<Method>().unwrap(), Method::MpMem);
        assert!("bogus".parse::<Method>().is_err());
    }
}
