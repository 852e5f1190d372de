use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named numeric features with binary labels, one row per case.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    labels: Vec<bool>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, labels: Vec<bool>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::FeatureMismatch {
                expected: names.len(),
                got: x.ncols(),
            });
        }
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % x.nrows().max(1), pos / x.nrows().max(1));
            return Err(Error::invalid(format!(
                "non-finite value in row {r}, column `{}`",
                names[c]
            )));
        }
        Ok(DesignMatrix { names, x, labels })
    }

    /// Builds from row-major rows.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], labels: Vec<bool>) -> Result<Self> {
        let p = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::FeatureMismatch {
                expected: p,
                got: rows[r].len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(names, x, labels)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.x[(row, col)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub(crate) fn row_into(&self, i: usize, buf: &mut [f64]) {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = self.x[(i, j)];
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            names: self.names.clone(),
            x: self.x.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn with_labels(&self, labels: Vec<bool>) -> Result<DesignMatrix> {
        Self::new(self.names.clone(), self.x.clone(), labels)
    }

    pub fn prevalence(&self) -> f64 {
        self.labels.iter().filter(|y| **y).count() as f64 / self.labels.len() as f64
    }
}

/// Per-column `(mean, std)` fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Number of rows the statistics were computed from.
    pub fit_rows: usize,
}

impl Standardizer {
    /// Population standard deviation; constant columns get scale 1.
    pub fn fit(x: &DesignMatrix) -> Result<Standardizer> {
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::Empty("cannot standardize zero rows".into()));
        }
        let mut means = Vec::with_capacity(x.n_cols());
        let mut stds = Vec::with_capacity(x.n_cols());
        for col in x.x.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            stds.push(if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 });
        }
        Ok(Standardizer {
            names: x.names.clone(),
            means,
            stds,
            fit_rows: n,
        })
    }

    pub fn transform(&self, x: &DesignMatrix) -> Result<DesignMatrix> {
        if x.names != self.names {
            return Err(Error::FeatureMismatch {
                expected: self.names.len(),
                got: x.n_cols(),
            });
        }
        let mut out = x.x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        DesignMatrix::new(x.names.clone(), out, x.labels.clone())
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.means[j]) / self.stds[j];
        }
    }
}

/// Down-samples the majority class to the minority count. Returns sorted row indices.
pub fn balance_downsample(labels: &[bool], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate("balancing needs both classes".into()));
    }
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, majority.len(), minority.len());
    let mut out: Vec<usize> = minority
        .into_iter()
        .chain(picked.into_iter().map(|i| majority[i]))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Seeded uniform split of `0..n`; both parts sorted.
pub fn split_train_test(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Degenerate(format!("cannot split {n} rows")));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Degenerate(format!(
                "class {} has {} rows for {k} folds",
                class as u8,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[(j + offset) % k].push(i);
        }
        offset += 1;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
