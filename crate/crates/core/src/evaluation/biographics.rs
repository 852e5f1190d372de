use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{compute_all_features, Dataset};
use crate::error::{Error, Result};
use crate::predict::{fit_logistic, CoefRow, DesignMatrix, LogisticConfig, Standardizer};
use crate::stats::{normal_quantile, normal_two_sided};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Continuous,
    Binary,
}

/// One attribute value per row; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitType {
    /// Ridge least squares, scored by R².
    Linear,
    /// Ridge logistic regression, scored by McFadden pseudo-R².
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFit {
    pub attribute: String,
    pub fit_type: FitType,
    pub n_rows: usize,
    pub r2: f64,
    /// Intercept first, then one row per embedding dimension (standardized).
    pub coefs: Vec<CoefRow>,
}

fn ridge_linear(names: &[String], x: &DMatrix<f64>, y: &[f64], l2: f64) -> Result<(f64, Vec<CoefRow>)> {
    let (n, p) = x.shape();
    let xa = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let yv = DVector::from_column_slice(y);
    let mut a = xa.transpose() * &xa;
    for j in 1..=p {
        a[(j, j)] += l2;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("ridge normal equations".into()))?;
    let beta = chol.solve(&(xa.transpose() * &yv));
    let resid = &yv - &xa * &beta;
    let ssr = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let dof = (n as f64 - (p + 1) as f64).max(1.0);
    let cov = chol.inverse() * (ssr / dof);
    let zcrit = normal_quantile(0.975);
    let mut all = vec!["intercept".to_string()];
    all.extend(names.iter().cloned());
    let rows = (0..=p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = beta[j] / se;
            CoefRow {
                name: all[j].clone(),
                coef: beta[j],
                std_err: se,
                z,
                p_value: normal_two_sided(z),
                ci_low: beta[j] - zcrit * se,
                ci_high: beta[j] + zcrit * se,
            }
        })
        .collect();
    Ok((1.0 - ssr / sst, rows))
}

/// Regresses each attribute on the embedding dimensions.
pub fn explain_biographics(
    names: &[String],
    rows: &[Vec<f64>],
    attributes: &[Attribute],
    l2: f64,
) -> Result<Vec<AttributeFit>> {
    let mut out = Vec::with_capacity(attributes.len());
    for attr in attributes {
        if attr.values.len() != rows.len() {
            return Err(Error::invalid(format!(
                "attribute `{}` has {} values for {} rows",
                attr.name,
                attr.values.len(),
                rows.len()
            )));
        }
        let keep: Vec<usize> = (0..rows.len()).filter(|&i| !attr.values[i].is_nan()).collect();
        let y: Vec<f64> = keep.iter().map(|&i| attr.values[i]).collect();
        if y.len() < 2 || y.iter().all(|v| *v == y[0]) {
            return Err(Error::Degenerate(format!("attribute `{}` is constant", attr.name)));
        }
        let kept: Vec<Vec<f64>> = keep.iter().map(|&i| rows[i].clone()).collect();
        let labels: Vec<bool> = y.iter().map(|v| *v >= 0.5).collect();
        let design = DesignMatrix::from_rows(names.to_vec(), &kept, labels)?;
        let design = Standardizer::fit(&design)?.transform(&design)?;
        let fit = match attr.kind {
            AttributeKind::Continuous => {
                let (r2, coefs) = ridge_linear(names, design.x(), &y, l2)?;
                AttributeFit {
                    attribute: attr.name.clone(),
                    fit_type: FitType::Linear,
                    n_rows: y.len(),
                    r2,
                    coefs,
                }
            }
            AttributeKind::Binary => {
                if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
                    return Err(Error::invalid(format!(
                        "binary attribute `{}` has value {v}",
                        attr.name
                    )));
                }
                let f = fit_logistic(&design, &LogisticConfig { l2, ..Default::default() })?;
                let mut coefs = vec![f.intercept.clone()];
                coefs.extend(f.coefs.iter().cloned());
                AttributeFit {
                    attribute: attr.name.clone(),
                    fit_type: FitType::Logistic,
                    n_rows: y.len(),
                    r2: f.pseudo_r2,
                    coefs,
                }
            }
        };
        out.push(fit);
    }
    Ok(out)
}

/// Case-level biographic attributes paired with the deciding judge's embedding row.
///
/// Only cases whose judge has an embedding row are returned. Win rate and
/// workload are missing for cases without prior history.
pub fn case_level_attributes(
    dataset: &Dataset,
    judges: &[String],
    embedding: &DMatrix<f64>,
) -> Result<(Vec<Vec<f64>>, Vec<Attribute>)> {
    if judges.len() != embedding.nrows() {
        return Err(Error::invalid("one embedding row per judge required"));
    }
    let index: HashMap<&str, usize> = judges.iter().enumerate().map(|(i, j)| (j.as_str(), i)).collect();
    let features = compute_all_features(dataset);
    let mut rows = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for (case, f) in dataset.cases().iter().zip(&features) {
        let Some(&r) = index.get(case.judge_id.as_str()) else {
            continue;
        };
        rows.push(embedding.row(r).iter().copied().collect());
        let vals = [
            f.experience,
            f.win_rate.unwrap_or(f64::NAN),
            f.workload.unwrap_or(f64::NAN),
            f.gender_male,
            f.party_republican,
            f.promoted,
        ];
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    let spec = [
        ("experience", AttributeKind::Continuous),
        ("win_rate", AttributeKind::Continuous),
        ("workload", AttributeKind::Continuous),
        ("gender_male", AttributeKind::Binary),
        ("party_republican", AttributeKind::Binary),
        ("promoted", AttributeKind::Binary),
    ];
    let attrs = spec
        .iter()
        .zip(cols)
        .map(|((name, kind), values)| Attribute {
            name: name.to_string(),
            kind: *kind,
            values,
        })
        .collect();
    Ok((rows, attrs))
}

impl AttributeFit {
    /// Long-format table: one row per (attribute, term).
    pub fn write_csv(fits: &[AttributeFit], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "attribute", "fit_type", "r2", "n_rows", "term", "coef", "std_err", "z", "p_value", "ci_low",
            "ci_high",
        ])?;
        for f in fits {
            let ft = match f.fit_type {
                FitType::Linear => "linear",
                FitType::Logistic => "logistic",
            };
            for c in &f.coefs {
                w.write_record([
                    f.attribute.clone(),
                    ft.to_string(),
                    f.r2.to_string(),
                    f.n_rows.to_string(),
                    c.name.clone(),
                    c.coef.to_string(),
                    c.std_err.to_string(),
                    c.z.to_string(),
                    c.p_value.to_string(),
                    c.ci_low.to_string(),
                    c.ci_high.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn embedding(n: usize, seed: u64) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        ((0..3).map(|j| format!("dim_{j}")).collect(), rows)
    }

    #[test]
    fn linear_attribute_is_recovered() {
        let (names, rows) = embedding(200, 1);
        let y = rows.iter().map(|r| 3.0 + 2.0 * r[0] - r[2]).collect();
        let attr = Attribute { name: "exp".into(), kind: AttributeKind::Continuous, values: y };
        let fit = &explain_biographics(&names, &rows, &[attr], 0.001).unwrap()[0];
        assert!(fit.r2 >= 0.999, "{}", fit.r2);
        assert_eq!(fit.fit_type, FitType::Linear);
    }

    #[test]
    fn independent_attribute_explains_little() {
        let (names, rows) = embedding(2000, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = (0..2000).map(|_| rng.random::<f64>()).collect();
        let bin = (0..2000).map(|_| (rng.random::<f64>() < 0.4) as u8 as f64).collect();
        let attrs = [
            Attribute { name: "noise".into(), kind: AttributeKind::Continuous, values: y },
            Attribute { name: "flag".into(), kind: AttributeKind::Binary, values: bin },
        ];
        let fits = explain_biographics(&names, &rows, &attrs, 0.001).unwrap();
        assert!(fits[0].r2 < 0.01, "{}", fits[0].r2);
        assert!(fits[1].r2 < 0.01, "{}", fits[1].r2);
        assert_eq!(fits[1].fit_type, FitType::Logistic);
    }

    #[test]
    fn constant_attribute_is_rejected() {
        let (names, rows) = embedding(10, 4);
        let attr = Attribute { name: "c".into(), kind: AttributeKind::Continuous, values: vec![1.0; 10] };
        assert!(explain_biographics(&names, &rows, &[attr], 0.001).is_err());
    }
}
