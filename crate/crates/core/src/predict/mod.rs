//! Binary classifiers trained on standardized, balanced design matrices.

mod design;
mod gbdt;
mod logistic;

pub use design::{balance_downsample, split_train_test, stratified_folds, DesignMatrix, Standardizer};
pub use gbdt::{
    fit_gbdt, train_gbdt, CvConfig, CvReport, GbdtGrid, GbdtModel, GbdtParams, GridPoint, Node, Tree,
};
pub use logistic::{
    fit_logistic, penalized_gradient, penalized_log_likelihood, CoefRow, LogisticConfig, LogisticFit,
};

use crate::error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability bounds applied to every model output.
pub const PROBA_CLAMP: f64 = 1e-15;

/// A fitted model producing plaintiff-win probabilities.
pub trait Classifier: Send + Sync {
    fn feature_names(&self) -> &[String];

    /// Probability for one row in training column order; no schema check.
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict_proba(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let names = self.feature_names();
        if x.names() != names {
            return Err(Error::FeatureMismatch {
                expected: names.len(),
                got: x.n_cols(),
            });
        }
        let mut row = vec![0.0; x.n_cols()];
        Ok((0..x.n_rows())
            .map(|i| {
                x.row_into(i, &mut row);
                self.predict_row(&row)
            })
            .collect())
    }
}

/// Fraction of rows where `p > 0.5` agrees with the label.
pub fn accuracy(proba: &[f64], labels: &[bool]) -> f64 {
    if proba.is_empty() {
        return f64::NAN;
    }
    let hits = proba
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p > 0.5) == **y)
        .count();
    hits as f64 / proba.len() as f64
}

/// Mean of per-class recalls.
pub fn balanced_accuracy(proba: &[f64], labels: &[bool]) -> f64 {
    let mut hit = [0usize; 2];
    let mut tot = [0usize; 2];
    for (p, y) in proba.iter().zip(labels) {
        let c = *y as usize;
        tot[c] += 1;
        if (*p > 0.5) == *y {
            hit[c] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|c| tot[*c] > 0)
        .map(|c| hit[c] as f64 / tot[c] as f64)
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}
