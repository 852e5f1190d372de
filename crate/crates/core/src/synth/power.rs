use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{simulate_court, CourtConfig, GroundTruth};
use crate::assignment::{audit_assignment, AuditConfig, LabelKind};
use crate::data::Dataset;
use crate::deviation::{judge_deviation_test, DeviationConfig, DeviationFlag};
use crate::error::{Error, Result};
use crate::evaluation::{judge_significance, JudgeFlag, SignificanceConfig};
use crate::par;
use crate::pipeline::{run_embedding, train_all, PipelineConfig};
use crate::stats::{mean, std_dev, Correction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerStage {
    /// Judge flagged if any of its case-type tests survives the BY correction.
    Assignment,
    /// Judge flagged if its career win rate deviates at the raw level.
    Deviation,
    /// Judge flagged "over" by the predictability test after the full chain.
    Predictability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub label: String,
    pub court: CourtConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub stage: PowerStage,
    pub n_replicates: usize,
    pub seed: u64,
    pub audit: AuditConfig,
    pub deviation: DeviationConfig,
    pub pipeline: PipelineConfig,
    pub significance: SignificanceConfig,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            stage: PowerStage::Deviation,
            n_replicates: 200,
            seed: 0,
            audit: AuditConfig::default(),
            deviation: DeviationConfig::default(),
            pipeline: PipelineConfig::default(),
            significance: SignificanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub label: String,
    pub stage: PowerStage,
    pub n_replicates: usize,
    /// Flagged fraction among planted judges; `None` without planted judges.
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    /// Flagged fraction among impartial judges.
    pub false_flag_rate: Option<f64>,
    pub false_flag_se: Option<f64>,
    pub mean_planted: f64,
    pub mean_impartial: f64,
}

struct Replicate {
    planted: usize,
    planted_flagged: usize,
    impartial: usize,
    impartial_flagged: usize,
}

fn flagged_judges(dataset: &Dataset, config: &PowerConfig, seed: u64) -> Result<HashSet<String>> {
    Ok(match config.stage {
        PowerStage::Deviation => judge_deviation_test(dataset, config.deviation)?
            .entries
            .into_iter()
            .filter(|e| e.flag != DeviationFlag::Within)
            .map(|e| e.judge_id)
            .collect(),
        PowerStage::Assignment => {
            let report = match audit_assignment(dataset, LabelKind::CaseType, config.audit) {
                Ok(r) => r,
                Err(Error::Empty(_)) => return Ok(HashSet::new()),
                Err(e) => return Err(e),
            };
            let by = &report.corrected[&Correction::BenjaminiYekutieli];
            report
                .entries
                .iter()
                .zip(&by.rejected)
                .filter(|(_, r)| **r)
                .map(|(e, _)| e.judge_id.clone())
                .collect()
        }
        PowerStage::Predictability => {
            let pipeline = PipelineConfig {
                seed,
                ..config.pipeline.clone()
            };
            let emb = run_embedding(dataset, &pipeline)?;
            let run = train_all(dataset, Some(&emb.embedding), &pipeline)?;
            let sig = SignificanceConfig {
                seed: par::derive_seed(seed, 7),
                ..config.significance
            };
            match judge_significance(&run.predictions(), &sig) {
                Ok(r) => r.flagged(JudgeFlag::Over).into_iter().map(String::from).collect(),
                Err(Error::Empty(_)) => HashSet::new(),
                Err(e) => return Err(e),
            }
        }
    })
}

fn is_planted(truth: &GroundTruth, stage: PowerStage, judge: &str) -> bool {
    match stage {
        PowerStage::Assignment => truth.assignment_biased(judge),
        PowerStage::Deviation | PowerStage::Predictability => truth.is_planted(judge),
    }
}

fn rate_and_se(hits: &[usize], totals: &[usize]) -> (Option<f64>, Option<f64>) {
    let rates: Vec<f64> = hits
        .iter()
        .zip(totals)
        .filter(|(_, t)| **t > 0)
        .map(|(h, t)| *h as f64 / *t as f64)
        .collect();
    if rates.is_empty() {
        return (None, None);
    }
    if rates.len() >= 2 {
        let m = mean(&rates);
        return (Some(m), Some(std_dev(&rates) / (rates.len() as f64).sqrt()));
    }
    let h: usize = hits.iter().sum();
    let t: usize = totals.iter().sum();
    let p = h as f64 / t as f64;
    (Some(p), Some((p * (1.0 - p) / t as f64).sqrt()))
}

/// Detection power and false-flag rate per grid point, with Monte Carlo standard errors.
pub fn power_study(grid: &[PowerPoint], config: &PowerConfig) -> Result<Vec<PowerRow>> {
    if config.n_replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (gi, point) in grid.iter().enumerate() {
        let reps = par::map_range(config.n_replicates, |r| -> Result<Replicate> {
            let seed = par::derive_seed(config.seed, ((gi as u64) << 32) | r as u64);
            let sim = simulate_court(&CourtConfig {
                seed,
                ..point.court.clone()
            })?;
            let flagged = flagged_judges(&sim.dataset, config, seed)?;
            let mut out = Replicate {
                planted: 0,
                planted_flagged: 0,
                impartial: 0,
                impartial_flagged: 0,
            };
            for j in sim.dataset.judges() {
                let f = flagged.contains(&j.judge_id) as usize;
                if is_planted(&sim.truth, config.stage, &j.judge_id) {
                    out.planted += 1;
                    out.planted_flagged += f;
                } else {
                    out.impartial += 1;
                    out.impartial_flagged += f;
                }
            }
            Ok(out)
        });
        let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
        let col = |f: fn(&Replicate) -> usize| reps.iter().map(f).collect::<Vec<usize>>();
        let (power, power_se) = rate_and_se(&col(|r| r.planted_flagged), &col(|r| r.planted));
        let (false_flag_rate, false_flag_se) = rate_and_se(&col(|r| r.impartial_flagged), &col(|r| r.impartial));
        let n = reps.len() as f64;
        rows.push(PowerRow {
            label: point.label.clone(),
            stage: config.stage,
            n_replicates: reps.len(),
            power,
            power_se,
            false_flag_rate,
            false_flag_se,
            mean_planted: reps.iter().map(|r| r.planted as f64).sum::<f64>() / n,
            mean_impartial: reps.iter().map(|r| r.impartial as f64).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

impl PowerRow {
    pub fn write_csv(rows: &[PowerRow], path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "label",
            "stage",
            "n_replicates",
            "power",
            "power_se",
            "false_flag_rate",
            "false_flag_se",
            "mean_planted",
            "mean_impartial",
        ])?;
        for r in rows {
            let stage = serde_json::to_value(r.stage)?;
            w.write_record([
                r.label.clone(),
                stage.as_str().unwrap_or_default().to_string(),
                r.n_replicates.to_string(),
                opt(r.power),
                opt(r.power_se),
                opt(r.false_flag_rate),
                opt(r.false_flag_se),
                r.mean_planted.to_string(),
                r.mean_impartial.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::BiasPlan;

    fn court(cases_per_judge: usize, bias: BiasPlan) -> CourtConfig {
        CourtConfig {
            n_judges: 40,
            n_cases: 40 * cases_per_judge,
            bias,
            ..Default::default()
        }
    }

    #[test]
    fn deviation_power_grows_with_cases() {
        let bias = BiasPlan::Planted { fraction: 0.25, magnitude: 0.5 };
        let grid = vec![
            PowerPoint { label: "n50".into(), court: court(50, bias.clone()) },
            PowerPoint { label: "n400".into(), court: court(400, bias) },
        ];
        let cfg = PowerConfig { n_replicates: 10, seed: 3, ..Default::default() };
        let rows = power_study(&grid, &cfg).unwrap();
        assert!(rows[1].power.unwrap() > rows[0].power.unwrap());
        assert!(rows[0].power_se.unwrap() > 0.0);
    }

    #[test]
    fn null_point_has_no_power_column() {
        let grid = vec![PowerPoint { label: "null".into(), court: court(100, BiasPlan::None) }];
        let cfg = PowerConfig { n_replicates: 5, ..Default::default() };
        let rows = power_study(&grid, &cfg).unwrap();
        assert_eq!(rows[0].power, None);
        let f = rows[0].false_flag_rate.unwrap();
        assert!(f < 0.25, "{f}");
    }

    #[test]
    fn single_replicate_uses_pooled_error() {
        let (p, se) = rate_and_se(&[3], &[10]);
        assert_eq!(p, Some(0.3));
        assert!((se.unwrap() - (0.21f64 / 10.0).sqrt()).abs() < 1e-15);
    }
}
