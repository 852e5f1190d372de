//! Run configuration: one TOML section per stage, every key defaulted to the
//! library default. Precedence is file, then `--set`, then dedicated flags.

use std::path::{Path, PathBuf};

use courtaudit::assignment::{AuditConfig, LabelKind, DEFAULT_MIN_CONTEXT_CASES};
use courtaudit::deviation::DeviationConfig;
use courtaudit::embedding::{CitationConfig, NmfConfig, NmfSolver, ReferenceMode};
use courtaudit::evaluation::{ShapleyMethod, SignificanceConfig};
use courtaudit::pipeline::{FeatureSet, ModelKind, PipelineConfig};
use courtaudit::predict::{CvConfig, GbdtGrid, GbdtParams, LogisticConfig};
use courtaudit::synth::{CourtConfig, PowerStage};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub input: InputSection,
    pub simulate: CourtConfig,
    pub audit: AuditSection,
    pub deviation: DeviationSection,
    pub embed: EmbedSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub judge_test: JudgeTestSection,
    pub explain: ExplainSection,
    pub power: PowerSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            input: InputSection::default(),
            simulate: CourtConfig::default(),
            audit: AuditSection::default(),
            deviation: DeviationSection::default(),
            embed: EmbedSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            judge_test: JudgeTestSection::default(),
            explain: ExplainSection::default(),
            power: PowerSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Case file (`.csv`, or `.jsonl`/`.ndjson`). Defaults to the simulate stage output.
    pub cases: Option<PathBuf>,
    pub judges: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub label_kinds: Vec<LabelKind>,
    pub min_judgments: usize,
    pub min_context_cases: usize,
    pub alpha: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        let d = AuditConfig::default();
        AuditSection {
            label_kinds: vec![LabelKind::CaseType, LabelKind::EntityLabel],
            min_judgments: d.min_judgments,
            min_context_cases: DEFAULT_MIN_CONTEXT_CASES,
            alpha: d.alpha,
        }
    }
}

impl AuditSection {
    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            min_judgments: self.min_judgments,
            min_context_cases: self.min_context_cases,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationSection {
    /// Null win rate; the pooled rate when absent.
    pub p0: Option<f64>,
    pub alpha: f64,
    pub bins: usize,
    pub null_replicates: usize,
}

impl Default for DeviationSection {
    fn default() -> Self {
        let d = DeviationConfig::default();
        DeviationSection {
            p0: d.p0,
            alpha: d.alpha,
            bins: 30,
            null_replicates: 100,
        }
    }
}

impl DeviationSection {
    pub fn deviation_config(&self) -> DeviationConfig {
        DeviationConfig {
            p0: self.p0,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub fraction: f64,
    pub n_top: usize,
    pub exclude_self_citations: bool,
    pub reference: ReferenceMode,
    pub k: usize,
    pub l1_w: f64,
    pub l2_w: f64,
    pub l1_h: f64,
    pub l2_h: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub solver: NmfSolver,
    /// Dimensions for the optional reconstruction-error sweep; empty skips it.
    pub sweep_ks: Vec<usize>,
    pub sweep_seeds: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let c = CitationConfig::default();
        let n = NmfConfig::default();
        EmbedSection {
            fraction: c.fraction,
            n_top: c.n_top,
            exclude_self_citations: c.exclude_self_citations,
            reference: c.reference,
            k: n.k,
            l1_w: n.l1_w,
            l2_w: n.l2_w,
            l1_h: n.l1_h,
            l2_h: n.l2_h,
            tol: n.tol,
            max_iter: n.max_iter,
            solver: n.solver,
            sweep_ks: Vec::new(),
            sweep_seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: ModelKind,
    pub features: FeatureSet,
    pub split_ratio: f64,
    pub folds: usize,
    pub grid_n_estimators: Vec<usize>,
    pub grid_max_depth: Vec<usize>,
    pub grid_learning_rate: Vec<f64>,
    pub min_leaf: usize,
    pub lambda: f64,
    pub max_bins: usize,
    pub exact_splits: bool,
    pub logistic_l2: f64,
    pub logistic_max_iter: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let g = GbdtGrid::default();
        let b = GbdtParams::default();
        let l = LogisticConfig::default();
        TrainSection {
            model: p.model,
            features: p.features,
            split_ratio: p.split_ratio,
            folds: p.cv.folds,
            grid_n_estimators: g.n_estimators,
            grid_max_depth: g.max_depth,
            grid_learning_rate: g.learning_rate,
            min_leaf: b.min_leaf,
            lambda: b.lambda,
            max_bins: b.max_bins,
            exact_splits: b.exact_splits,
            logistic_l2: l.l2,
            logistic_max_iter: l.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub n_bootstrap: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { n_bootstrap: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeTestSection {
    pub min_cases: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub fdr_alpha: f64,
    pub n_repetitions: usize,
}

impl Default for JudgeTestSection {
    fn default() -> Self {
        let d = SignificanceConfig::default();
        JudgeTestSection {
            min_cases: d.min_cases,
            kappa: d.kappa,
            alpha: d.alpha,
            fdr_alpha: d.fdr_alpha,
            n_repetitions: d.n_repetitions,
        }
    }
}

impl JudgeTestSection {
    pub fn significance(&self, seed: u64) -> SignificanceConfig {
        SignificanceConfig {
            min_cases: self.min_cases,
            kappa: self.kappa,
            alpha: self.alpha,
            fdr_alpha: self.fdr_alpha,
            n_repetitions: self.n_repetitions,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub method: ShapleyMethod,
    pub n_samples: usize,
    /// Background rows drawn from each case type's balanced training set.
    pub background: usize,
    /// Test cases explained per case type; 0 explains all of them.
    pub n_cases: usize,
    /// Ridge weight of the attribute-on-embedding regressions.
    pub biographic_l2: f64,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            method: ShapleyMethod::PermutationSampling,
            n_samples: 2000,
            background: 100,
            n_cases: 100,
            biographic_l2: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub stage: PowerStage,
    pub n_replicates: usize,
    /// Grid points: a label plus overrides of `[simulate]` keys.
    pub points: Vec<toml::Table>,
}

impl Default for PowerSection {
    fn default() -> Self {
        let point = |label: &str, bias: &str| -> toml::Table {
            format!("label = \"{label}\"\nbias = {bias}\n")
                .parse()
                .expect("static TOML")
        };
        PowerSection {
            stage: PowerStage::Deviation,
            n_replicates: 200,
            points: vec![
                point("null", "{ kind = \"none\" }"),
                point("planted", "{ kind = \"planted\", fraction = 0.1, magnitude = 2.0 }"),
            ],
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and resolves stage seeds.
    pub fn load(path: Option<&Path>, sets: &[String]) -> CliResult<RunConfig> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            apply_set(&mut table, s)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self) {
        self.simulate.seed = self.seed;
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.train.split_ratio > 0.0 && self.train.split_ratio < 1.0) {
            return bad("train.split_ratio must lie in (0, 1)");
        }
        if self.train.grid_n_estimators.is_empty()
            || self.train.grid_max_depth.is_empty()
            || self.train.grid_learning_rate.is_empty()
        {
            return bad("train grids must be non-empty");
        }
        if self.judge_test.n_repetitions == 0 {
            return bad("judge_test.n_repetitions must be at least 1");
        }
        if self.explain.background == 0 {
            return bad("explain.background must be at least 1");
        }
        if self.audit.label_kinds.is_empty() {
            return bad("audit.label_kinds must be non-empty");
        }
        for (i, p) in self.power.points.iter().enumerate() {
            if !matches!(p.get("label"), Some(toml::Value::String(_))) {
                return Err(CliError::Config(format!("power.points[{i}] needs a string `label`")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let e = &self.embed;
        let t = &self.train;
        PipelineConfig {
            citation: CitationConfig {
                fraction: e.fraction,
                n_top: e.n_top,
                exclude_self_citations: e.exclude_self_citations,
                reference: e.reference,
            },
            nmf: NmfConfig {
                k: e.k,
                l1_w: e.l1_w,
                l2_w: e.l2_w,
                l1_h: e.l1_h,
                l2_h: e.l2_h,
                tol: e.tol,
                max_iter: e.max_iter,
                seed: 0,
                solver: e.solver,
            },
            split_ratio: t.split_ratio,
            model: t.model,
            features: t.features,
            cv: CvConfig {
                folds: t.folds,
                grid: GbdtGrid {
                    n_estimators: t.grid_n_estimators.clone(),
                    max_depth: t.grid_max_depth.clone(),
                    learning_rate: t.grid_learning_rate.clone(),
                },
                seed: 0,
                base: GbdtParams {
                    min_leaf: t.min_leaf,
                    lambda: t.lambda,
                    max_bins: t.max_bins,
                    exact_splits: t.exact_splits,
                    ..GbdtParams::default()
                },
            },
            logistic: LogisticConfig {
                l2: t.logistic_l2,
                max_iter: t.logistic_max_iter,
                ..LogisticConfig::default()
            },
            seed: self.seed,
        }
    }

    /// Court configuration for one power grid point.
    pub fn power_court(&self, point: &toml::Table) -> CliResult<(String, CourtConfig)> {
        let label = point
            .get("label")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        let mut base = toml::Table::try_from(&self.simulate).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in point.iter().filter(|(k, _)| k.as_str() != "label") {
            base.insert(k.clone(), v.clone());
        }
        let court: CourtConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("power point `{label}`: {e}")))?;
        Ok((label, court))
    }
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("`--set {assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn set_overrides_nested_keys() {
        let cfg = RunConfig::load(
            None,
            &[
                "embed.k=12".into(),
                "seed=7".into(),
                "train.model=logistic".into(),
                "simulate.bias={ kind = \"planted\", fraction = 0.2, magnitude = 1.0 }".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.embed.k, 12);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.simulate.seed, 7);
        assert_eq!(cfg.train.model, ModelKind::Logistic);
        assert!(matches!(cfg.simulate.bias, courtaudit::synth::BiasPlan::Planted { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["embed.kk=3".into()]).unwrap_err();
        assert_eq!(err.kind(), "invalid_config");
    }

    #[test]
    fn power_points_merge_onto_simulate() {
        let mut cfg = RunConfig::default();
        cfg.simulate.n_judges = 17;
        let (label, court) = cfg.power_court(&cfg.power.points[1].clone()).unwrap();
        assert_eq!(label, "planted");
        assert_eq!(court.n_judges, 17);
        assert!(matches!(court.bias, courtaudit::synth::BiasPlan::Planted { .. }));
    }
}
