use serde::{Deserialize, Serialize};

use super::describe::pearson;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqResult {
    /// (theoretical uniform quantile, empirical p-value), ascending.
    pub pairs: Vec<(f64, f64)>,
    /// `None` when the p-values have zero variance.
    pub pearson_r: Option<f64>,
}

/// Sorted p-values against uniform plotting positions (i - 0.5) / K.
pub fn qq_uniformity(ps: &[f64]) -> Result<QqResult> {
    if ps.len() < 2 {
        return Err(Error::invalid("QQ diagnostics need at least two p-values"));
    }
    let mut sorted = ps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let theoretical: Vec<f64> = (0..sorted.len()).map(|i| (i as f64 + 0.5) / k).collect();
    let pearson_r = pearson(&theoretical, &sorted);
    Ok(QqResult {
        pairs: theoretical.into_iter().zip(sorted).collect(),
        pearson_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_is_linear() {
        let ps: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let r = qq_uniformity(&ps).unwrap().pearson_r.unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_values_have_no_correlation() {
        assert_eq!(qq_uniformity(&[0.3; 5]).unwrap().pearson_r, None);
        assert!(qq_uniformity(&[0.3]).is_err());
    }
}
