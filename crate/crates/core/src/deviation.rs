//! Career win-rate deviation test: each judge's plaintiff wins against
//! Binomial(n, p0), with p0 the pooled win rate unless overridden.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{binomial_two_sided, correct_pvalues, Correction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationFlag {
    Below,
    Within,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub judge_id: String,
    pub n: u64,
    pub k: u64,
    pub win_rate: f64,
    pub p_raw: f64,
    pub flag: DeviationFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    /// Null win rate; `None` uses the pooled rate of the dataset.
    pub p0: Option<f64>,
    pub alpha: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            p0: None,
            alpha: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub p0: f64,
    pub alpha: f64,
    pub entries: Vec<DeviationEntry>,
}

pub fn flag_for(k: u64, n: u64, p0: f64, p_raw: f64, alpha: f64) -> DeviationFlag {
    if p_raw > alpha {
        DeviationFlag::Within
    } else if (k as f64) > p0 * n as f64 {
        DeviationFlag::Above
    } else {
        DeviationFlag::Below
    }
}

/// One entry per judge with at least one case, ordered by judge id.
pub fn judge_deviation_test(dataset: &Dataset, config: DeviationConfig) -> Result<DeviationResult> {
    let p0 = match config.p0 {
        Some(p) => p,
        None => dataset
            .pooled_win_rate()
            .ok_or_else(|| Error::Empty("dataset has no cases".into()))?,
    };
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("null win rate {p0} not in (0, 1)")));
    }
    let judges: Vec<&str> = dataset.active_judges().collect();
    let entries = par::map(&judges, |judge| {
        let (mut n, mut k) = (0u64, 0u64);
        for c in dataset.cases_of(judge) {
            n += 1;
            k += c.won() as u64;
        }
        let p_raw = binomial_two_sided(k, n, p0)?;
        Ok(DeviationEntry {
            judge_id: judge.to_string(),
            n,
            k,
            win_rate: k as f64 / n as f64,
            p_raw,
            flag: flag_for(k, n, p0, p_raw, config.alpha),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(DeviationResult {
        p0,
        alpha: config.alpha,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges over [0, 1].
    pub edges: Vec<f64>,
    pub observed: Vec<u64>,
    /// Mean bin counts of simulated null courts, one B(p0, n_j) draw per judge.
    pub null_expected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub n_judges: usize,
    pub p0: f64,
    pub alpha: f64,
    pub fraction_significant: f64,
    pub fraction_above: f64,
    pub fraction_below: f64,
    /// Fraction rejected after Benjamini-Hochberg at `alpha`.
    pub fraction_significant_bh: f64,
    pub histogram: Histogram,
}

fn bin_of(x: f64, bins: usize) -> usize {
    ((x * bins as f64).floor() as usize).min(bins - 1)
}

pub fn deviation_summary(
    result: &DeviationResult,
    bins: usize,
    null_replicates: usize,
    seed: u64,
) -> Result<DeviationSummary> {
    let entries = &result.entries;
    if entries.is_empty() {
        return Err(Error::Empty("no deviation entries".into()));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let n = entries.len() as f64;
    let count = |f: DeviationFlag| entries.iter().filter(|e| e.flag == f).count() as f64 / n;
    let ps: Vec<f64> = entries.iter().map(|e| e.p_raw).collect();
    let bh = correct_pvalues(&ps, Correction::BenjaminiHochberg, result.alpha)?;

    let mut observed = vec![0u64; bins];
    for e in entries {
        observed[bin_of(e.win_rate, bins)] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut null_counts = vec![0u64; bins];
    for _ in 0..null_replicates {
        for e in entries {
            let draw = Binomial::new(e.n, result.p0)
                .map_err(|err| Error::invalid(err.to_string()))?
                .sample(&mut rng);
            null_counts[bin_of(draw as f64 / e.n as f64, bins)] += 1;
        }
    }
    let reps = null_replicates.max(1) as f64;
    Ok(DeviationSummary {
        n_judges: entries.len(),
        p0: result.p0,
        alpha: result.alpha,
        fraction_significant: 1.0 - count(DeviationFlag::Within),
        fraction_above: count(DeviationFlag::Above),
        fraction_below: count(DeviationFlag::Below),
        fraction_significant_bh: bh.rejected_fraction(),
        histogram: Histogram {
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            observed,
            null_expected: null_counts.iter().map(|&c| c as f64 / reps).collect(),
        },
    })
}

impl DeviationResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["judge_id", "n", "k", "win_rate", "p_raw", "flag"])?;
        for e in &self.entries {
            let flag = match e.flag {
                DeviationFlag::Below => "below",
                DeviationFlag::Within => "within",
                DeviationFlag::Above => "above",
            };
            w.write_record([
                e.judge_id.clone(),
                e.n.to_string(),
                e.k.to_string(),
                e.win_rate.to_string(),
                e.p_raw.to_string(),
                flag.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

impl Histogram {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_low", "bin_high", "observed", "null_expected"])?;
        for i in 0..self.observed.len() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.observed[i].to_string(),
                self.null_expected[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(k: u64, n: u64, p0: f64, alpha: f64) -> DeviationEntry {
        let p_raw = binomial_two_sided(k, n, p0).unwrap();
        DeviationEntry {
            judge_id: format!("{k}/{n}"),
            n,
            k,
            win_rate: k as f64 / n as f64,
            p_raw,
            flag: flag_for(k, n, p0, p_raw, alpha),
        }
    }

    #[test]
    fn discussion_examples() {
        assert_eq!(entry(107, 158, 0.25, 0.10).flag, DeviationFlag::Above);
        assert_eq!(entry(20, 330, 0.25, 0.10).flag, DeviationFlag::Below);
        let one_of_four = entry(1, 4, 0.25, 0.10);
        assert_eq!(one_of_four.p_raw, 1.0);
        assert_eq!(one_of_four.flag, DeviationFlag::Within);
    }

    #[test]
    fn all_zero_wins_is_fully_significant() {
        let entries: Vec<_> = (0..10).map(|_| entry(0, 50, 0.25, 0.10)).collect();
        let r = DeviationResult {
            p0: 0.25,
            alpha: 0.10,
            entries,
        };
        let s = deviation_summary(&r, 30, 5, 1).unwrap();
        assert_eq!(s.fraction_significant, 1.0);
        assert_eq!(s.histogram.observed[0], 10);
        assert_eq!(s.histogram.edges.len(), 31);
        assert!((s.histogram.null_expected.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn empty_summary_errors() {
        let r = DeviationResult {
            p0: 0.25,
            alpha: 0.1,
            entries: vec![],
        };
        assert!(deviation_summary(&r, 30, 1, 0).is_err());
    }
}
