use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Classifier, DesignMatrix, PROBA_CLAMP};
use crate::error::{Error, Result};
use crate::stats::{normal_quantile, normal_two_sided};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Ridge weight on the non-intercept coefficients.
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// A coefficient beyond this magnitude on standardized inputs is treated as diverging.
    pub divergence_bound: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 0.001,
            max_iter: 200,
            grad_tol: 1e-8,
            divergence_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub intercept: CoefRow,
    pub coefs: Vec<CoefRow>,
    pub l2_weight: f64,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    /// McFadden: `1 − ll / ll₀`.
    pub pseudo_r2: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub n_rows: usize,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `Σ yη − log(1+eη) − ½ l2 Σ_{j≥1} β_j²` where column 0 of `x` is the intercept.
pub fn penalized_log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>, l2: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta
        .iter()
        .zip(y)
        .map(|(e, &yi)| if yi { *e } else { 0.0 } - log1pexp(*e))
        .sum();
    ll - 0.5 * l2 * beta.rows(1, beta.len() - 1).norm_squared()
}

pub fn penalized_gradient(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>, l2: f64) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter().zip(y).map(|(e, &yi)| yi as u8 as f64 - sigmoid(*e)),
    );
    let mut g = x.transpose() * resid;
    for j in 1..g.len() {
        g[j] -= l2 * beta[j];
    }
    g
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>, l2: f64) -> DMatrix<f64> {
    let eta = x * beta;
    let mut xw = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = sigmoid(*e);
        let w = p * (1.0 - p);
        xw.row_mut(i).scale_mut(w);
    }
    let mut h = x.transpose() * xw;
    for j in 1..h.nrows() {
        h[(j, j)] += l2;
    }
    h
}

/// Ridge logistic regression by damped Newton steps with an unpenalized intercept.
pub fn fit_logistic(x: &DesignMatrix, config: &LogisticConfig) -> Result<LogisticFit> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Empty("no rows to fit".into()));
    }
    let l2 = config.l2;
    if !(l2 >= 0.0) {
        return Err(Error::invalid("l2 weight must be non-negative"));
    }
    let y = x.labels();
    let xa = with_intercept(x.x());
    let p = xa.ncols();
    let mut names = vec!["intercept".to_string()];
    names.extend(x.names().iter().cloned());

    let mut beta = DVector::zeros(p);
    let mut ll = penalized_log_likelihood(&xa, y, &beta, l2);
    let mut grad = penalized_gradient(&xa, y, &beta, l2);
    let mut iterations = 0;
    let diverging = |b: &DVector<f64>| -> Vec<String> {
        (0..p)
            .filter(|&j| b[j].abs() > config.divergence_bound)
            .map(|j| names[j].clone())
            .collect()
    };

    while grad.norm() >= config.grad_tol && iterations < config.max_iter {
        iterations += 1;
        let h = information(&xa, &beta, l2);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                let d = diverging(&beta);
                if !d.is_empty() {
                    return Err(Error::PerfectSeparation { features: d });
                }
                return Err(Error::Singular(format!(
                    "information matrix not positive definite after {iterations} iterations"
                )));
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = penalized_log_likelihood(&xa, y, &cand, l2);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = penalized_gradient(&xa, y, &beta, l2);
        let d = diverging(&beta);
        if !d.is_empty() {
            return Err(Error::PerfectSeparation { features: d });
        }
        if !accepted {
            // No ascent along the Newton direction: we are at the optimum up to rounding.
            break;
        }
    }
    if grad.norm() > 1e-6 * (n as f64).max(1.0) {
        let d = diverging(&beta);
        return Err(if d.is_empty() {
            Error::Degenerate(format!(
                "Newton iterations stopped with gradient norm {:.3e}",
                grad.norm()
            ))
        } else {
            Error::PerfectSeparation { features: d }
        });
    }

    let unpenalized = ll + 0.5 * l2 * beta.rows(1, p - 1).norm_squared();
    if unpenalized > -1e-6 * n as f64 {
        // Every row fitted with certainty: the likelihood has no finite maximizer.
        let top = beta.amax();
        let features = (0..p)
            .filter(|&j| beta[j].abs() >= 0.5 * top)
            .map(|j| names[j].clone())
            .collect();
        return Err(Error::PerfectSeparation { features });
    }

    let h = information(&xa, &beta, l2);
    let cov = h
        .cholesky()
        .ok_or_else(|| Error::Singular("information matrix at optimum".into()))?
        .inverse();
    let zcrit = normal_quantile(0.975);
    let mut rows: Vec<CoefRow> = (0..p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = beta[j] / se;
            CoefRow {
                name: names[j].clone(),
                coef: beta[j],
                std_err: se,
                z,
                p_value: normal_two_sided(z),
                ci_low: beta[j] - zcrit * se,
                ci_high: beta[j] + zcrit * se,
            }
        })
        .collect();

    let prev = x.prevalence();
    let null_ll = if prev <= 0.0 || prev >= 1.0 {
        0.0
    } else {
        n as f64 * (prev * prev.ln() + (1.0 - prev) * (1.0 - prev).ln())
    };
    let pseudo_r2 = if p == 1 || null_ll == 0.0 {
        0.0
    } else {
        1.0 - unpenalized / null_ll
    };
    let intercept = rows.remove(0);
    Ok(LogisticFit {
        names: x.names().to_vec(),
        intercept,
        coefs: rows,
        l2_weight: l2,
        log_likelihood: unpenalized,
        null_log_likelihood: null_ll,
        pseudo_r2,
        iterations,
        gradient_norm: grad.norm(),
        n_rows: n,
    })
}

impl LogisticFit {
    pub fn coefficient(&self, name: &str) -> Option<&CoefRow> {
        self.coefs.iter().find(|c| c.name == name)
    }

    /// Coefficient table with one row per term, intercept first.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["term", "coef", "std_err", "z", "p_value", "ci_low", "ci_high"])?;
        for r in std::iter::once(&self.intercept).chain(&self.coefs) {
            w.write_record([
                r.name.clone(),
                r.coef.to_string(),
                r.std_err.to_string(),
                r.z.to_string(),
                r.p_value.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl Classifier for LogisticFit {
    fn feature_names(&self) -> &[String] {
        &self.names
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let eta = self.intercept.coef
            + self
                .coefs
                .iter()
                .zip(row)
                .map(|(c, v)| c.coef * v)
                .sum::<f64>();
        sigmoid(eta).clamp(PROBA_CLAMP, 1.0 - PROBA_CLAMP)
    }
}
