use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::predict::Classifier;

/// Exact enumeration is limited to this many features.
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMethod {
    ExactEnumeration,
    PermutationSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub method: ShapleyMethod,
    /// Permutations per case in sampling mode.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            method: ShapleyMethod::PermutationSampling,
            n_samples: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub feature_names: Vec<String>,
    pub method: ShapleyMethod,
    pub n_samples: usize,
    /// Mean model output over the background sample.
    pub base_value: f64,
    /// Model output for each explained row.
    pub outputs: Vec<f64>,
    /// `values[case][feature]`.
    pub values: Vec<Vec<f64>>,
    /// Monte Carlo standard errors, sampling mode only.
    pub std_errors: Option<Vec<Vec<f64>>>,
}

/// Up to `n` distinct rows drawn without replacement, in original order.
pub fn sample_background(rows: &[Vec<f64>], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = par::stream_rng(seed, 0);
    let mut idx = index::sample(&mut rng, rows.len(), n.min(rows.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Expected output with features in `mask` taken from `x` and the rest from each background row.
fn coalition_value<M: Classifier + ?Sized>(
    model: &M,
    x: &[f64],
    in_coalition: &[bool],
    background: &[Vec<f64>],
    buf: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    for b in background {
        for j in 0..x.len() {
            buf[j] = if in_coalition[j] { x[j] } else { b[j] };
        }
        total += model.predict_row(buf);
    }
    total / background.len() as f64
}

fn exact_one<M: Classifier + ?Sized>(model: &M, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let p = x.len();
    let mut buf = vec![0.0; p];
    let mut mask = vec![false; p];
    let values: Vec<f64> = (0..1usize << p)
        .map(|s| {
            for (j, m) in mask.iter_mut().enumerate() {
                *m = s >> j & 1 == 1;
            }
            coalition_value(model, x, &mask, background, &mut buf)
        })
        .collect();
    // weight[s] = s! (p - s - 1)! / p!
    let mut weight = vec![0.0; p];
    for (s, w) in weight.iter_mut().enumerate() {
        let mut v = 1.0 / p as f64;
        for t in 1..=s {
            v *= t as f64 / (p - t) as f64;
        }
        *w = v;
    }
    (0..p)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << p)
                .filter(|s| s & bit == 0)
                .map(|s| weight[s.count_ones() as usize] * (values[s | bit] - values[s]))
                .sum()
        })
        .collect()
}

/// Permutation sampling where sample `s` pairs a random feature order with
/// background row `s mod |background|`. Each step costs one prediction, and when
/// `n_samples` is a multiple of the background size every row is used equally
/// often, so attributions sum exactly to `f(x)` minus the background mean.
fn sampled_one<M: Classifier + ?Sized>(
    model: &M,
    x: &[f64],
    background: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> (Vec<f64>, Vec<f64>) {
    let p = x.len();
    let mut rng = par::stream_rng(seed, stream);
    let mut order: Vec<usize> = (0..p).collect();
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    let mut buf = vec![0.0; p];
    for s in 0..n_samples {
        order.shuffle(&mut rng);
        buf.copy_from_slice(&background[s % background.len()]);
        let mut prev = model.predict_row(&buf);
        for &j in &order {
            buf[j] = x[j];
            let v = model.predict_row(&buf);
            let d = v - prev;
            sum[j] += d;
            sum_sq[j] += d * d;
            prev = v;
        }
    }
    let n = n_samples as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = (0..p)
        .map(|j| {
            if n_samples < 2 {
                return f64::INFINITY;
            }
            let var = ((sum_sq[j] - n * means[j] * means[j]) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    (means, se)
}

/// Interventional Shapley values of the model's probability output.
pub fn shapley_importance<M: Classifier + ?Sized>(
    model: &M,
    rows: &[Vec<f64>],
    background: &[Vec<f64>],
    config: &ShapleyConfig,
) -> Result<ShapleyReport> {
    let p = model.feature_names().len();
    if background.is_empty() {
        return Err(Error::Empty("background sample is empty".into()));
    }
    if let Some(r) = rows.iter().chain(background).find(|r| r.len() != p) {
        return Err(Error::FeatureMismatch { expected: p, got: r.len() });
    }
    if config.method == ShapleyMethod::ExactEnumeration && p > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "exact enumeration over {p} features exceeds the limit of {MAX_EXACT_FEATURES}"
        )));
    }
    if config.method == ShapleyMethod::PermutationSampling && config.n_samples == 0 {
        return Err(Error::invalid("permutation sampling needs n_samples >= 1"));
    }
    let base_value = background.iter().map(|b| model.predict_row(b)).sum::<f64>() / background.len() as f64;
    let outputs: Vec<f64> = rows.iter().map(|r| model.predict_row(r)).collect();
    let (values, std_errors) = match config.method {
        ShapleyMethod::ExactEnumeration => (
            par::map(rows, |x| exact_one(model, x, background)),
            None,
        ),
        ShapleyMethod::PermutationSampling => {
            let res = par::map_range(rows.len(), |i| {
                sampled_one(model, &rows[i], background, config.n_samples, config.seed, i as u64)
            });
            let (v, s): (Vec<_>, Vec<_>) = res.into_iter().unzip();
            (v, Some(s))
        }
    };
    Ok(ShapleyReport {
        feature_names: model.feature_names().to_vec(),
        method: config.method,
        n_samples: match config.method {
            ShapleyMethod::ExactEnumeration => 1 << p,
            ShapleyMethod::PermutationSampling => config.n_samples,
        },
        base_value,
        outputs,
        values,
        std_errors,
    })
}

impl ShapleyReport {
    /// Largest `|base + Σφ − f(x)|` over explained rows.
    pub fn max_efficiency_gap(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.outputs)
            .map(|(v, f)| (self.base_value + v.iter().sum::<f64>() - f).abs())
            .fold(0.0, f64::max)
    }

    /// Mean absolute attribution per feature.
    pub fn mean_abs(&self) -> Vec<f64> {
        let n = self.values.len().max(1) as f64;
        (0..self.feature_names.len())
            .map(|j| self.values.iter().map(|v| v[j].abs()).sum::<f64>() / n)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["row".to_string(), "output".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, (v, f)) in self.values.iter().zip(&self.outputs).enumerate() {
            let mut rec = vec![i.to_string(), f.to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
