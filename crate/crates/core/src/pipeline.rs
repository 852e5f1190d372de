//! The per-case-type classification chain shared by the CLI, power studies and tests.
//!
//! For each case type: collect eligible cases (outside every early-career
//! window), build features, split 75/25, balance the training rows, fit
//! standardization on them, fit the model and predict every test row.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{compute_all_features, CaseType, Dataset, FeatureVector};
use crate::embedding::{
    build_citation_matrix, nmf_fit, window_case_ids, CitationConfig, CitationMatrix, NmfConfig, NmfModel,
};
use crate::error::{Error, Result};
use crate::evaluation::CasePrediction;
use crate::par;
use crate::predict::{
    balance_downsample, fit_gbdt, fit_logistic, split_train_test, Classifier, CvConfig, CvReport,
    DesignMatrix, GbdtModel, LogisticConfig, LogisticFit, Standardizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Gbdt,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Judge embedding dimensions plus controls.
    #[default]
    Embedding,
    /// Biographic features plus controls.
    Biographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub citation: CitationConfig,
    pub nmf: NmfConfig,
    pub split_ratio: f64,
    pub model: ModelKind,
    pub features: FeatureSet,
    pub cv: CvConfig,
    pub logistic: LogisticConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            citation: CitationConfig::default(),
            nmf: NmfConfig::default(),
            split_ratio: 0.75,
            model: ModelKind::Gbdt,
            features: FeatureSet::Embedding,
            cv: CvConfig::default(),
            logistic: LogisticConfig::default(),
            seed: 0,
        }
    }
}

/// One embedding row per judge.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeEmbedding {
    pub judges: Vec<String>,
    pub weights: DMatrix<f64>,
}

impl JudgeEmbedding {
    pub fn dim_names(&self) -> Vec<String> {
        (0..self.weights.ncols()).map(|j| format!("dim_{j}")).collect()
    }
}

pub struct EmbeddingRun {
    pub matrix: CitationMatrix,
    pub model: NmfModel,
    pub embedding: JudgeEmbedding,
}

/// Citation matrix and its factorization. `k` is capped at the matrix rank bound.
pub fn run_embedding(dataset: &Dataset, config: &PipelineConfig) -> Result<EmbeddingRun> {
    let matrix = build_citation_matrix(dataset, &config.citation)?;
    let (m, n) = matrix.values.shape();
    let nmf = NmfConfig {
        k: config.nmf.k.min(m.min(n)),
        seed: par::derive_seed(config.seed, 1),
        ..config.nmf
    };
    let model = nmf_fit(&matrix.values, &nmf)?;
    let embedding = JudgeEmbedding {
        judges: matrix.judges.clone(),
        weights: model.w.clone(),
    };
    Ok(EmbeddingRun {
        matrix,
        model,
        embedding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbdt(GbdtModel),
    Logistic(LogisticFit),
}

impl Classifier for TrainedModel {
    fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Gbdt(m) => m.feature_names(),
            TrainedModel::Logistic(m) => m.feature_names(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            TrainedModel::Gbdt(m) => m.predict_row(row),
            TrainedModel::Logistic(m) => m.predict_row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTypeResult {
    pub case_type: CaseType,
    pub n_eligible: usize,
    pub n_train_balanced: usize,
    pub n_test: usize,
    pub standardizer: Standardizer,
    pub model: TrainedModel,
    pub cv: Option<CvReport>,
    /// Every test row, in case-id order.
    pub predictions: Vec<CasePrediction>,
    /// A class-balanced subsample of the test rows.
    pub balanced_predictions: Vec<CasePrediction>,
    /// Standardized training rows, kept for attribution backgrounds.
    #[serde(skip)]
    pub train_rows: Vec<Vec<f64>>,
    /// Standardized test rows aligned with `predictions`.
    #[serde(skip)]
    pub test_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub per_type: Vec<CaseTypeResult>,
    /// Types skipped for lack of data, with the reason.
    pub skipped: Vec<(CaseType, String)>,
}

impl TrainingRun {
    pub fn predictions(&self) -> Vec<CasePrediction> {
        let mut v: Vec<CasePrediction> = self.per_type.iter().flat_map(|r| r.predictions.iter().cloned()).collect();
        v.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        v
    }

    pub fn balanced_predictions(&self) -> Vec<CasePrediction> {
        let mut v: Vec<CasePrediction> =
            self.per_type.iter().flat_map(|r| r.balanced_predictions.iter().cloned()).collect();
        v.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        v
    }
}

/// Column names for a feature set; controls (decision date, circuits) are always included.
pub fn feature_names(set: FeatureSet, embedding: Option<&JudgeEmbedding>) -> Result<Vec<String>> {
    let mut names: Vec<String> = match set {
        FeatureSet::Embedding => {
            let mut v = embedding
                .ok_or_else(|| Error::invalid("embedding features need a judge embedding"))?
                .dim_names();
            v.push("decision_date".into());
            v
        }
        FeatureSet::Biographic => FeatureVector::BIOGRAPHIC_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    names.extend(FeatureVector::circuit_names());
    Ok(names)
}

fn feature_row(
    set: FeatureSet,
    f: &FeatureVector,
    judge_row: Option<usize>,
    embedding: Option<&JudgeEmbedding>,
) -> Option<Vec<f64>> {
    match set {
        FeatureSet::Embedding => {
            let mut row: Vec<f64> = embedding?.weights.row(judge_row?).iter().copied().collect();
            row.push(f.decision_date);
            row.extend_from_slice(&f.circuit_onehot);
            Some(row)
        }
        FeatureSet::Biographic => f.biographic_row(),
    }
}

struct Eligible {
    case_ids: Vec<String>,
    judge_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

/// Trains one model per case type. Window cases are excluded from every set.
pub fn train_all(
    dataset: &Dataset,
    embedding: Option<&JudgeEmbedding>,
    config: &PipelineConfig,
) -> Result<TrainingRun> {
    let names = feature_names(config.features, embedding)?;
    let excluded = window_case_ids(dataset, config.citation.fraction)?;
    let features = compute_all_features(dataset);
    let judge_row: HashMap<&str, usize> = embedding
        .map(|e| e.judges.iter().enumerate().map(|(i, j)| (j.as_str(), i)).collect())
        .unwrap_or_default();

    let mut eligible: Vec<Eligible> = (0..CaseType::ALL.len())
        .map(|_| Eligible {
            case_ids: vec![],
            judge_ids: vec![],
            rows: vec![],
            labels: vec![],
        })
        .collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset.cases()[a].case_id.cmp(&dataset.cases()[b].case_id));
    for i in order {
        let case = &dataset.cases()[i];
        if excluded.contains(&case.case_id) {
            continue;
        }
        let jr = judge_row.get(case.judge_id.as_str()).copied();
        let Some(row) = feature_row(config.features, &features[i], jr, embedding) else {
            continue;
        };
        let e = &mut eligible[case.case_type.index()];
        e.case_ids.push(case.case_id.clone());
        e.judge_ids.push(case.judge_id.clone());
        e.rows.push(row);
        e.labels.push(case.won());
    }

    let results = par::map_range(CaseType::ALL.len(), |t| {
        train_case_type(CaseType::ALL[t], &eligible[t], &names, config)
    });
    let mut per_type = Vec::new();
    let mut skipped = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => per_type.push(r),
            Err(e @ (Error::Degenerate(_) | Error::Empty(_))) => skipped.push((CaseType::ALL[t], e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if per_type.is_empty() {
        return Err(Error::Empty("no case type had enough data to train".into()));
    }
    Ok(TrainingRun { per_type, skipped })
}

fn train_case_type(
    case_type: CaseType,
    data: &Eligible,
    names: &[String],
    config: &PipelineConfig,
) -> Result<CaseTypeResult> {
    let n = data.rows.len();
    if n < 4 {
        return Err(Error::Empty(format!("{case_type}: {n} eligible cases")));
    }
    let tag = case_type.index() as u64 * 16;
    let all = DesignMatrix::from_rows(names.to_vec(), &data.rows, data.labels.clone())?;
    let (train, test) = split_train_test(n, config.split_ratio, par::derive_seed(config.seed, tag + 2))?;
    let train_set = all.select_rows(&train);
    let balanced = balance_downsample(train_set.labels(), par::derive_seed(config.seed, tag + 3))?;
    let train_set = train_set.select_rows(&balanced);
    let standardizer = Standardizer::fit(&train_set)?;
    let train_z = standardizer.transform(&train_set)?;
    let test_z = standardizer.transform(&all.select_rows(&test))?;

    let (model, cv) = match config.model {
        ModelKind::Gbdt => {
            let cv = CvConfig {
                seed: par::derive_seed(config.seed, tag + 4),
                ..config.cv.clone()
            };
            let (m, report) = fit_gbdt(&train_z, &cv)?;
            (TrainedModel::Gbdt(m), Some(report))
        }
        ModelKind::Logistic => (TrainedModel::Logistic(fit_logistic(&train_z, &config.logistic)?), None),
    };
    let proba = model.predict_proba(&test_z)?;
    let predictions: Vec<CasePrediction> = test
        .iter()
        .zip(&proba)
        .map(|(&i, &p)| CasePrediction {
            case_id: data.case_ids[i].clone(),
            judge_id: data.judge_ids[i].clone(),
            probability: p,
            label: data.labels[i],
        })
        .collect();
    let test_labels: Vec<bool> = predictions.iter().map(|p| p.label).collect();
    let balanced_predictions = match balance_downsample(&test_labels, par::derive_seed(config.seed, tag + 5)) {
        Ok(idx) => idx.into_iter().map(|i| predictions[i].clone()).collect(),
        Err(_) => Vec::new(),
    };
    Ok(CaseTypeResult {
        case_type,
        n_eligible: n,
        n_train_balanced: train_z.n_rows(),
        n_test: test.len(),
        standardizer,
        model,
        cv,
        predictions,
        balanced_predictions,
        train_rows: (0..train_z.n_rows()).map(|i| train_z.row(i)).collect(),
        test_rows: (0..test_z.n_rows()).map(|i| test_z.row(i)).collect(),
    })
}

impl CaseTypeResult {
    pub fn write_model(&self, dir: &Path) -> Result<()> {
        let stem = self.case_type.as_str();
        let path = dir.join(format!("model_{stem}.json"));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        if let TrainedModel::Logistic(fit) = &self.model {
            fit.write_csv(&dir.join(format!("coefficients_{stem}.csv")))?;
        }
        Ok(())
    }
}

/// Case ids of the eligible set, for leakage checks.
pub fn eligible_case_ids(run: &TrainingRun) -> HashSet<&str> {
    run.per_type
        .iter()
        .flat_map(|r| r.predictions.iter().map(|p| p.case_id.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::GbdtGrid;
    use crate::synth::{simulate_court, BiasPlan, CourtConfig};

    fn quick_config() -> PipelineConfig {
        PipelineConfig {
            nmf: NmfConfig { k: 5, max_iter: 200, ..Default::default() },
            cv: CvConfig {
                grid: GbdtGrid {
                    n_estimators: vec![10],
                    max_depth: vec![2],
                    learning_rate: vec![0.1],
                },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn window_cases_never_reach_the_classifier() {
        let sim = simulate_court(&CourtConfig {
            n_judges: 30,
            n_cases: 9000,
            bias: BiasPlan::Planted { fraction: 0.2, magnitude: 1.0 },
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let cfg = quick_config();
        let emb = run_embedding(&sim.dataset, &cfg).unwrap();
        assert!(emb.model.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        let run = train_all(&sim.dataset, Some(&emb.embedding), &cfg).unwrap();
        let window = window_case_ids(&sim.dataset, cfg.citation.fraction).unwrap();
        assert!(!window.is_empty());
        for r in &run.per_type {
            for p in &r.predictions {
                assert!(!window.contains(&p.case_id));
            }
            assert_eq!(r.standardizer.fit_rows, r.n_train_balanced);
        }
        let again = train_all(&sim.dataset, Some(&emb.embedding), &cfg).unwrap();
        assert_eq!(run.predictions(), again.predictions());
    }

    #[test]
    fn biographic_set_trains_logistic() {
        let sim = simulate_court(&CourtConfig {
            n_judges: 20,
            n_cases: 6000,
            seed: 6,
            ..Default::default()
        })
        .unwrap();
        let cfg = PipelineConfig {
            model: ModelKind::Logistic,
            features: FeatureSet::Biographic,
            ..quick_config()
        };
        let run = train_all(&sim.dataset, None, &cfg).unwrap();
        assert_eq!(run.per_type.len(), 6);
        let names = feature_names(FeatureSet::Biographic, None).unwrap();
        assert_eq!(run.per_type[0].model.feature_names(), names.as_slice());
    }
}
