//! Bonferroni, Benjamini-Hochberg and Benjamini-Yekutieli corrections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Bonferroni,
    BenjaminiHochberg,
    BenjaminiYekutieli,
}

impl Correction {
    pub const ALL: [Correction; 3] = [
        Correction::Bonferroni,
        Correction::BenjaminiHochberg,
        Correction::BenjaminiYekutieli,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Correction::Bonferroni => "bf",
            Correction::BenjaminiHochberg => "bh",
            Correction::BenjaminiYekutieli => "by",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub method: Correction,
    pub alpha: f64,
    /// Adjusted p-values in input order.
    pub adjusted: Vec<f64>,
    /// Rejection flags in input order.
    pub rejected: Vec<bool>,
}

impl Corrected {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|r| **r).count()
    }

    pub fn rejected_fraction(&self) -> f64 {
        self.n_rejected() as f64 / self.rejected.len() as f64
    }
}

/// H(K) = 1 + 1/2 + ... + 1/K.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

pub fn correct_pvalues(ps: &[f64], method: Correction, alpha: f64) -> Result<Corrected> {
    if ps.is_empty() {
        return Err(Error::Empty("no p-values to correct".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} not in (0, 1)")));
    }
    if let Some(bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {bad} not in [0, 1]")));
    }
    let k = ps.len();
    let kf = k as f64;

    if method == Correction::Bonferroni {
        return Ok(Corrected {
            method,
            alpha,
            adjusted: ps.iter().map(|p| (p * kf).min(1.0)).collect(),
            rejected: ps.iter().map(|&p| p <= alpha / kf).collect(),
        });
    }

    let scale = match method {
        Correction::BenjaminiYekutieli => harmonic(k),
        _ => 1.0,
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]).then(a.cmp(&b)));

    // Step-up: largest rank whose p-value clears its threshold.
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|(i, &idx)| ps[idx] <= (i + 1) as f64 * alpha / (kf * scale))
        .map(|(_, &idx)| ps[idx]);
    let rejected = match cutoff {
        Some(c) => ps.iter().map(|&p| p <= c).collect(),
        None => vec![false; k],
    };

    let mut adjusted = vec![0.0; k];
    let mut running = f64::INFINITY;
    for (i, &idx) in order.iter().enumerate().rev() {
        let a = ps[idx] * kf * scale / (i + 1) as f64;
        running = running.min(a);
        adjusted[idx] = running.min(1.0);
    }
    Ok(Corrected {
        method,
        alpha,
        adjusted,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PS: [f64; 4] = [0.01, 0.02, 0.04, 0.05];

    #[test]
    fn bh_rejects_all_four() {
        let c = correct_pvalues(&PS, Correction::BenjaminiHochberg, 0.05).unwrap();
        assert_eq!(c.rejected, vec![true; 4]);
        assert!(c.adjusted.iter().all(|a| *a <= 0.05 + 1e-15));
    }

    #[test]
    fn by_rejects_none() {
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
        let c = correct_pvalues(&PS, Correction::BenjaminiYekutieli, 0.05).unwrap();
        assert_eq!(c.rejected, vec![false; 4]);
    }

    #[test]
    fn single_test_methods_coincide() {
        for m in Correction::ALL {
            let c = correct_pvalues(&[0.04], m, 0.05).unwrap();
            assert_eq!(c.rejected, vec![true]);
            assert!((c.adjusted[0] - 0.04).abs() < 1e-15);
        }
    }

    #[test]
    fn bonferroni_need_not_be_inside_by() {
        // K = 2: BF threshold 0.025, BY first threshold 0.05 / 3.
        let ps = [0.02, 0.9];
        let bf = correct_pvalues(&ps, Correction::Bonferroni, 0.05).unwrap();
        let by = correct_pvalues(&ps, Correction::BenjaminiYekutieli, 0.05).unwrap();
        assert_eq!(bf.rejected, vec![true, false]);
        assert_eq!(by.rejected, vec![false, false]);
    }

    #[test]
    fn errors() {
        assert!(correct_pvalues(&[], Correction::Bonferroni, 0.05).is_err());
        assert!(correct_pvalues(&[1.5], Correction::Bonferroni, 0.05).is_err());
        assert!(correct_pvalues(&[0.5], Correction::Bonferroni, 1.0).is_err());
    }
}
