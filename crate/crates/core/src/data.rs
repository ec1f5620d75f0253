use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::FunctionalGrid;

/// Row-major `rows x cols` matrix of curves: one row per subject, one column per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Curves {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows picked (with repetition) by `index`.
    pub fn select_rows(&self, index: &[usize]) -> Self {
        let mut data = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: index.len(), cols: self.cols, data }
    }
}

/// `subjects x replicates x times` array of possibly missing observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateArray<V> {
    subjects: usize,
    replicates: usize,
    times: usize,
    data: Vec<Option<V>>,
}

/// Surrogate counts `W_ij(t)`; `None` marks a missing (e.g. non-wear) observation.
pub type CountArray = ReplicateArray<u64>;

impl<V: Copy> ReplicateArray<V> {
    pub fn new(subjects: usize, replicates: usize, times: usize) -> Self {
        Self { subjects, replicates, times, data: alloc::vec![None; subjects * replicates * times] }
    }

    pub fn from_vec(
        subjects: usize,
        replicates: usize,
        times: usize,
        data: Vec<Option<V>>,
    ) -> Result<Self> {
        let expected = subjects * replicates * times;
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, found: data.len() });
        }
        Ok(Self { subjects, replicates, times, data })
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn times(&self) -> usize {
        self.times
    }

    fn offset(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.replicates + j) * self.times + t
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> Option<V> {
        self.data[self.offset(i, j, t)]
    }

    pub fn set(&mut self, i: usize, j: usize, t: usize, v: Option<V>) {
        let o = self.offset(i, j, t);
        self.data[o] = v;
    }

    /// One subject's replicate `j` across all times.
    pub fn curve(&self, i: usize, j: usize) -> &[Option<V>] {
        let o = self.offset(i, j, 0);
        &self.data[o..o + self.times]
    }

    pub fn as_slice(&self) -> &[Option<V>] {
        &self.data
    }

    pub fn select_subjects(&self, index: &[usize]) -> Self {
        let block = self.replicates * self.times;
        let mut data = Vec::with_capacity(index.len() * block);
        for &i in index {
            data.extend_from_slice(&self.data[i * block..(i + 1) * block]);
        }
        Self { subjects: index.len(), replicates: self.replicates, times: self.times, data }
    }

    /// Same subjects and times with replicates reordered by `order`.
    pub fn permute_replicates(&self, order: &[usize]) -> Self {
        let mut out = Self::new(self.subjects, order.len(), self.times);
        for i in 0..self.subjects {
            for (jn, &jo) in order.iter().enumerate() {
                for t in 0..self.times {
                    out.set(i, jn, t, self.get(i, jo, t));
                }
            }
        }
        out
    }
}

/// Everything the two-stage estimators consume: surrogate replicates, error-free
/// covariates, binary outcomes, and (in simulation only) the latent curves.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelSample {
    pub grid: FunctionalGrid,
    pub subject_ids: Vec<String>,
    pub counts: CountArray,
    pub covariate_names: Vec<String>,
    pub covariates: Curves,
    pub outcome: Vec<u8>,
    pub latent: Option<Curves>,
    pub weights: Option<Vec<f64>>,
}

impl MultiLevelSample {
    pub fn subjects(&self) -> usize {
        self.outcome.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.outcome.len();
        let checks = [
            (self.subject_ids.len(), n),
            (self.counts.subjects(), n),
            (self.covariates.rows(), n),
            (self.counts.times(), self.grid.len()),
            (self.covariate_names.len(), self.covariates.cols()),
        ];
        for (found, expected) in checks {
            if found != expected {
                return Err(Error::LengthMismatch { expected, found });
            }
        }
        if let Some(x) = &self.latent {
            if x.rows() != n || x.cols() != self.grid.len() {
                return Err(Error::InvalidData("latent curves do not match sample shape".into()));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: w.len() });
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidData("weights must be positive and finite".into()));
            }
        }
        if self.outcome.iter().any(|y| *y > 1) {
            return Err(Error::InvalidData("outcome must be binary".into()));
        }
        Ok(())
    }

    /// Subject-level resample; rows repeat when `index` repeats.
    pub fn resample(&self, index: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            subject_ids: index.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            counts: self.counts.select_subjects(index),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.select_rows(index),
            outcome: index.iter().map(|&i| self.outcome[i]).collect(),
            latent: self.latent.as_ref().map(|x| x.select_rows(index)),
            weights: self.weights.as_ref().map(|w| index.iter().map(|&i| w[i]).collect()),
        }
    }
}
