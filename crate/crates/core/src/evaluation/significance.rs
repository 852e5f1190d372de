use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::CasePrediction;
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{binomial_quantile, binomial_two_sided, correct_pvalues, mean, std_dev, Correction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    /// Minimum balanced cases per judge.
    pub min_cases: usize,
    /// Cases with `|p − 0.5| < kappa` are dropped before balancing.
    pub kappa: f64,
    /// Two-sided level of the exact confidence interval.
    pub alpha: f64,
    /// False discovery rate for the Benjamini-Hochberg step across judges.
    pub fdr_alpha: f64,
    pub n_repetitions: usize,
    pub seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            min_cases: 50,
            kappa: 0.025,
            alpha: 0.10,
            fdr_alpha: 0.05,
            n_repetitions: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeFlag {
    Under,
    Within,
    Over,
}

impl JudgeFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeFlag::Under => "under",
            JudgeFlag::Within => "within",
            JudgeFlag::Over => "over",
        }
    }
}

/// Exact chance-level interval for `n` balanced predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiBound {
    pub n: usize,
    pub ci_low: u64,
    pub ci_high: u64,
}

impl CiBound {
    pub fn flag(&self, correct: u64) -> JudgeFlag {
        if correct > self.ci_high {
            JudgeFlag::Over
        } else if correct < self.ci_low {
            JudgeFlag::Under
        } else {
            JudgeFlag::Within
        }
    }
}

/// Central `1 − alpha` interval of Binomial(n, 0.5).
pub fn ci_bounds(n: usize, alpha: f64) -> Result<CiBound> {
    Ok(CiBound {
        n,
        ci_low: binomial_quantile(alpha / 2.0, n as u64, 0.5)?,
        ci_high: binomial_quantile(1.0 - alpha / 2.0, n as u64, 0.5)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTestRow {
    pub judge_id: String,
    pub repetition: usize,
    pub n_balanced: usize,
    pub n_correct: u64,
    pub accuracy: f64,
    pub ci_low: u64,
    pub ci_high: u64,
    pub p_raw: f64,
    pub p_bh: f64,
    pub flag: JudgeFlag,
    pub bh_rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub rows: Vec<JudgeTestRow>,
    pub over_fraction: f64,
    pub under_fraction: f64,
    pub raw_flagged_fraction: f64,
    pub bh_flagged_fraction: f64,
}

/// Per-judge outcome across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub judge_id: String,
    pub n_balanced: usize,
    pub mean_accuracy: f64,
    pub times_over: usize,
    pub times_under: usize,
    pub times_bh: usize,
    /// Direction flagged in at least half of the repetitions, else within.
    pub flag: JudgeFlag,
    pub bh_majority: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> MeanStd {
        MeanStd {
            mean: mean(xs),
            std: if xs.len() > 1 { std_dev(xs) } else { 0.0 },
        }
    }
}

/// Flagged fractions summarized across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummary {
    pub n_judges: usize,
    pub n_repetitions: usize,
    pub over: MeanStd,
    pub under: MeanStd,
    pub raw_flagged: MeanStd,
    pub bh_flagged: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSignificance {
    pub config: SignificanceConfig,
    pub repetitions: Vec<Repetition>,
    pub per_judge: Vec<JudgeSummary>,
    pub summary: SignificanceSummary,
    pub bounds: Vec<CiBound>,
}

struct JudgeCases {
    judge_id: String,
    wins: Vec<bool>,
    losses: Vec<bool>,
}

pub fn judge_significance(
    preds: &[CasePrediction],
    config: &SignificanceConfig,
) -> Result<JudgeSignificance> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) || !(config.fdr_alpha > 0.0 && config.fdr_alpha < 1.0) {
        return Err(Error::invalid("significance levels must lie in (0, 1)"));
    }
    if config.n_repetitions == 0 {
        return Err(Error::invalid("need at least one repetition"));
    }
    // Correctness per kept case, split by true label.
    let mut by_judge: BTreeMap<&str, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    for p in preds {
        if (p.probability - 0.5).abs() < config.kappa {
            continue;
        }
        let e = by_judge.entry(p.judge_id.as_str()).or_default();
        if p.label {
            e.0.push(p.correct());
        } else {
            e.1.push(p.correct());
        }
    }
    let half = config.min_cases.div_ceil(2);
    let judges: Vec<JudgeCases> = by_judge
        .into_iter()
        .filter(|(_, (w, l))| {
            let m = w.len().min(l.len());
            m >= half && 2 * m >= config.min_cases
        })
        .map(|(j, (wins, losses))| JudgeCases {
            judge_id: j.to_string(),
            wins,
            losses,
        })
        .collect();
    if judges.is_empty() {
        return Err(Error::Empty(format!(
            "no judge has {} balanced predictions after filtering",
            config.min_cases
        )));
    }

    let mut bounds: BTreeMap<usize, CiBound> = BTreeMap::new();
    for j in &judges {
        let n = 2 * j.wins.len().min(j.losses.len());
        if let std::collections::btree_map::Entry::Vacant(e) = bounds.entry(n) {
            e.insert(ci_bounds(n, config.alpha)?);
        }
    }

    let repetitions = par::map_range(config.n_repetitions, |rep| -> Result<Repetition> {
        let mut rows = Vec::with_capacity(judges.len());
        for (ji, j) in judges.iter().enumerate() {
            let m = j.wins.len().min(j.losses.len());
            let mut rng = par::stream_rng(config.seed, (rep * judges.len() + ji) as u64);
            let mut take = |v: &[bool]| -> u64 {
                index::sample(&mut rng, v.len(), m)
                    .into_iter()
                    .filter(|&i| v[i])
                    .count() as u64
            };
            let correct = take(&j.wins) + take(&j.losses);
            let n = 2 * m;
            let b = bounds[&n];
            rows.push(JudgeTestRow {
                judge_id: j.judge_id.clone(),
                repetition: rep,
                n_balanced: n,
                n_correct: correct,
                accuracy: correct as f64 / n as f64,
                ci_low: b.ci_low,
                ci_high: b.ci_high,
                p_raw: binomial_two_sided(correct, n as u64, 0.5)?,
                p_bh: f64::NAN,
                flag: b.flag(correct),
                bh_rejected: false,
            });
        }
        let ps: Vec<f64> = rows.iter().map(|r| r.p_raw).collect();
        let bh = correct_pvalues(&ps, Correction::BenjaminiHochberg, config.fdr_alpha)?;
        for (r, (adj, rej)) in rows.iter_mut().zip(bh.adjusted.iter().zip(&bh.rejected)) {
            r.p_bh = *adj;
            r.bh_rejected = *rej;
        }
        let k = rows.len() as f64;
        let frac = |f: &dyn Fn(&JudgeTestRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / k;
        Ok(Repetition {
            index: rep,
            over_fraction: frac(&|r| r.flag == JudgeFlag::Over),
            under_fraction: frac(&|r| r.flag == JudgeFlag::Under),
            raw_flagged_fraction: frac(&|r| r.flag != JudgeFlag::Within),
            bh_flagged_fraction: frac(&|r| r.bh_rejected),
            rows,
        })
    });
    let repetitions = repetitions.into_iter().collect::<Result<Vec<_>>>()?;

    let reps = repetitions.len();
    let per_judge = judges
        .iter()
        .enumerate()
        .map(|(ji, j)| {
            let rows: Vec<&JudgeTestRow> = repetitions.iter().map(|r| &r.rows[ji]).collect();
            let count = |f: &dyn Fn(&JudgeTestRow) -> bool| rows.iter().filter(|r| f(r)).count();
            let times_over = count(&|r| r.flag == JudgeFlag::Over);
            let times_under = count(&|r| r.flag == JudgeFlag::Under);
            let times_bh = count(&|r| r.bh_rejected);
            let flag = if 2 * times_over >= reps && times_over >= times_under {
                JudgeFlag::Over
            } else if 2 * times_under >= reps {
                JudgeFlag::Under
            } else {
                JudgeFlag::Within
            };
            JudgeSummary {
                judge_id: j.judge_id.clone(),
                n_balanced: rows[0].n_balanced,
                mean_accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / reps as f64,
                times_over,
                times_under,
                times_bh,
                flag,
                bh_majority: 2 * times_bh >= reps,
            }
        })
        .collect();

    let col = |f: fn(&Repetition) -> f64| repetitions.iter().map(f).collect::<Vec<f64>>();
    let summary = SignificanceSummary {
        n_judges: judges.len(),
        n_repetitions: reps,
        over: MeanStd::of(&col(|r| r.over_fraction)),
        under: MeanStd::of(&col(|r| r.under_fraction)),
        raw_flagged: MeanStd::of(&col(|r| r.raw_flagged_fraction)),
        bh_flagged: MeanStd::of(&col(|r| r.bh_flagged_fraction)),
    };
    Ok(JudgeSignificance {
        config: *config,
        repetitions,
        per_judge,
        summary,
        bounds: bounds.into_values().collect(),
    })
}

impl JudgeSignificance {
    pub fn flagged(&self, flag: JudgeFlag) -> Vec<&str> {
        self.per_judge
            .iter()
            .filter(|j| j.flag == flag)
            .map(|j| j.judge_id.as_str())
            .collect()
    }

    /// Every (repetition, judge) test.
    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.repetitions.iter().flat_map(|r| &r.rows) {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One row per judge sorted by mean accuracy, with the chance interval as accuracies.
    pub fn write_judges_csv(&self, path: &Path) -> Result<()> {
        let mut judges: Vec<&JudgeSummary> = self.per_judge.iter().collect();
        judges.sort_by(|a, b| a.mean_accuracy.total_cmp(&b.mean_accuracy).then(a.judge_id.cmp(&b.judge_id)));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "judge_id",
            "n_balanced",
            "mean_accuracy",
            "ci_low_accuracy",
            "ci_high_accuracy",
            "times_over",
            "times_under",
            "times_bh",
            "flag",
        ])?;
        for j in judges {
            let b = self.bounds.iter().find(|b| b.n == j.n_balanced).unwrap();
            w.write_record([
                j.judge_id.clone(),
                j.n_balanced.to_string(),
                j.mean_accuracy.to_string(),
                (b.ci_low as f64 / b.n as f64).to_string(),
                (b.ci_high as f64 / b.n as f64).to_string(),
                j.times_over.to_string(),
                j.times_under.to_string(),
                j.times_bh.to_string(),
                j.flag.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_bounds_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "ci_low", "ci_high", "min_correct_over", "max_correct_under"])?;
        for b in &self.bounds {
            w.write_record([
                b.n.to_string(),
                b.ci_low.to_string(),
                b.ci_high.to_string(),
                (b.ci_high + 1).to_string(),
                b.ci_low.saturating_sub(1).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judge_preds(judge: &str, n_per_class: usize, correct_wins: usize, correct_losses: usize) -> Vec<CasePrediction> {
        let mut v = Vec::new();
        for i in 0..n_per_class {
            v.push(CasePrediction {
                case_id: format!("{judge}-w{i}"),
                judge_id: judge.into(),
                probability: if i < correct_wins { 0.8 } else { 0.2 },
                label: true,
            });
            v.push(CasePrediction {
                case_id: format!("{judge}-l{i}"),
                judge_id: judge.into(),
                probability: if i < correct_losses { 0.2 } else { 0.8 },
                label: false,
            });
        }
        v
    }

    #[test]
    fn fifty_case_bounds() {
        let b = ci_bounds(50, 0.10).unwrap();
        assert_eq!((b.ci_low, b.ci_high), (19, 31));
        assert_eq!(b.flag(31), JudgeFlag::Within);
        assert_eq!(b.flag(32), JudgeFlag::Over);
        assert_eq!(b.flag(18), JudgeFlag::Under);
    }

    #[test]
    fn flags_are_monotone_in_correct_count() {
        for n in [50usize, 60, 80, 101] {
            let b = ci_bounds(n, 0.10).unwrap();
            let rank = |f: JudgeFlag| match f {
                JudgeFlag::Under => 0,
                JudgeFlag::Within => 1,
                JudgeFlag::Over => 2,
            };
            for k in 0..n as u64 {
                assert!(rank(b.flag(k)) <= rank(b.flag(k + 1)));
            }
        }
    }

    #[test]
    fn detects_predictable_judge() {
        let mut preds = judge_preds("good", 40, 32, 30);
        preds.extend(judge_preds("coin", 40, 20, 20));
        preds.extend(judge_preds("few", 10, 10, 10));
        let r = judge_significance(&preds, &SignificanceConfig::default()).unwrap();
        assert_eq!(r.per_judge.len(), 2);
        assert_eq!(r.flagged(JudgeFlag::Over), vec!["good"]);
        assert_eq!(r.per_judge[0].judge_id, "coin");
        assert_eq!(r.per_judge[0].flag, JudgeFlag::Within);
        for rep in &r.repetitions {
            for row in &rep.rows {
                if row.bh_rejected {
                    assert_ne!(row.flag, JudgeFlag::Within);
                }
            }
        }
    }

    #[test]
    fn kappa_filter_applies_before_balancing() {
        let mut preds = judge_preds("j", 30, 30, 30);
        for p in preds.iter_mut().filter(|p| p.label).take(10) {
            p.probability = 0.51;
        }
        let err = judge_significance(&preds, &SignificanceConfig::default());
        assert!(err.is_err());
        let ok = judge_significance(
            &preds,
            &SignificanceConfig {
                kappa: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ok.per_judge[0].n_balanced, 60);
    }

    #[test]
    fn repetitions_are_deterministic() {
        let mut preds = judge_preds("a", 45, 30, 25);
        preds.extend(judge_preds("b", 35, 20, 20));
        preds.truncate(150);
        let cfg = SignificanceConfig { seed: 7, ..Default::default() };
        assert_eq!(judge_significance(&preds, &cfg).unwrap(), judge_significance(&preds, &cfg).unwrap());
    }
}
