use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::stats::{mean, std_dev};

/// Out-of-sample prediction for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub case_id: String,
    pub judge_id: String,
    pub probability: f64,
    pub label: bool,
}

impl CasePrediction {
    pub fn correct(&self) -> bool {
        (self.probability > 0.5) == self.label
    }
}

pub const BIN_EDGES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Bin index in `0..5`; the last bin is closed on the right.
pub fn confidence_bin(p: f64) -> usize {
    ((p * 5.0).floor() as usize).min(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub accuracy: Option<f64>,
    pub bootstrap_mean: Option<f64>,
    pub bootstrap_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEval {
    pub n_cases: usize,
    pub overall_accuracy: f64,
    pub n_bootstrap: usize,
    pub bins: Vec<BinStat>,
}

fn bin_counts(preds: &[CasePrediction], idx: impl Iterator<Item = usize>) -> [(usize, usize); 5] {
    let mut c = [(0, 0); 5];
    for i in idx {
        let b = confidence_bin(preds[i].probability);
        c[b].0 += 1;
        c[b].1 += preds[i].correct() as usize;
    }
    c
}

pub fn bin_accuracy(preds: &[CasePrediction], n_bootstrap: usize, seed: u64) -> Result<PredictionEval> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(&p.probability)) {
        return Err(Error::invalid(format!(
            "probability {} for case `{}` outside [0, 1]",
            p.probability, p.case_id
        )));
    }
    let n = preds.len();
    let counts = bin_counts(preds, 0..n);
    let boot: Vec<[Option<f64>; 5]> = par::map_range(n_bootstrap, |r| {
        let mut rng = par::stream_rng(seed, r as u64);
        let c = bin_counts(preds, (0..n).map(|_| rng.random_range(0..n)));
        c.map(|(tot, hit)| (tot > 0).then(|| hit as f64 / tot as f64))
    });
    let bins = (0..5)
        .map(|b| {
            let (count, hit) = counts[b];
            let reps: Vec<f64> = boot.iter().filter_map(|r| r[b]).collect();
            BinStat {
                low: BIN_EDGES[b],
                high: BIN_EDGES[b + 1],
                count,
                accuracy: (count > 0).then(|| hit as f64 / count as f64),
                bootstrap_mean: (!reps.is_empty()).then(|| mean(&reps)),
                bootstrap_std: (reps.len() > 1).then(|| std_dev(&reps)),
            }
        })
        .collect();
    let correct = preds.iter().filter(|p| p.correct()).count();
    Ok(PredictionEval {
        n_cases: n,
        overall_accuracy: correct as f64 / n as f64,
        n_bootstrap,
        bins,
    })
}

impl PredictionEval {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_low", "bin_high", "count", "accuracy", "bootstrap_mean", "bootstrap_std"])?;
        for b in &self.bins {
            w.write_record([
                b.low.to_string(),
                b.high.to_string(),
                b.count.to_string(),
                opt(b.accuracy),
                opt(b.bootstrap_mean),
                opt(b.bootstrap_std),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl CasePrediction {
    pub fn write_csv(preds: &[CasePrediction], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in preds {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<CasePrediction>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}
