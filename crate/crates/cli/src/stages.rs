//! One function per subcommand. Each reads its prerequisites from the output
//! root, writes into a staged directory and commits it with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use courtaudit::assignment::{audit_assignment, LabelKind};
use courtaudit::data::{load_dataset, write_cases, write_judges, CaseType, Dataset, FileFormat, ValidationReport};
use courtaudit::deviation::{deviation_summary, judge_deviation_test};
use courtaudit::embedding::{dimension_sweep, NmfConfig, NmfModel};
use courtaudit::evaluation::{
    bin_accuracy, case_level_attributes, explain_biographics, judge_significance, sample_background,
    shapley_importance, AttributeFit, CasePrediction, ShapleyConfig,
};
use courtaudit::par::derive_seed;
use courtaudit::pipeline::{run_embedding, train_all, CaseTypeResult, FeatureSet, JudgeEmbedding};
use courtaudit::synth::{power_study, simulate_court, PowerConfig, PowerPoint, PowerRow};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::workspace::Workspace;

const SEED_DEVIATION: u64 = 6;
const SEED_JUDGE_TEST: u64 = 7;
const SEED_EVALUATE: u64 = 8;
const SEED_EXPLAIN: u64 = 10;

fn load_ingested(ws: &Workspace) -> CliResult<(Dataset, [PathBuf; 2])> {
    let cases = ws.require("ingest", "cases.csv")?;
    let judges = ws.require("ingest", "judges.csv")?;
    let ds = load_dataset(&cases, &judges, FileFormat::Csv)?;
    Ok((ds, [cases, judges]))
}

pub fn simulate(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let sim = simulate_court(&cfg.simulate)?;
    let out = ws.begin("simulate")?;
    write_cases(&out.path("cases.csv"), sim.dataset.cases(), FileFormat::Csv)?;
    write_judges(&out.path("judges.csv"), sim.dataset.judges(), FileFormat::Csv)?;
    sim.truth.write_json(&out.path("truth.json"))?;
    out.commit(ws, cfg, &cfg.simulate)
}

pub fn ingest(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let pick = |given: &Option<PathBuf>, name: &str| -> CliResult<PathBuf> {
        match given {
            Some(p) => {
                if p.is_file() {
                    Ok(p.clone())
                } else {
                    Err(CliError::Prerequisite(format!("input file {} does not exist", p.display())))
                }
            }
            None => ws.require("simulate", name).map_err(|_| {
                CliError::Prerequisite(format!(
                    "no input.{} given and no simulate output in {}",
                    name.trim_end_matches(".csv"),
                    ws.root().display()
                ))
            }),
        }
    };
    let cases = pick(&cfg.input.cases, "cases.csv")?;
    let judges = pick(&cfg.input.judges, "judges.csv")?;
    let format = FileFormat::from_path(&cases);
    if FileFormat::from_path(&judges) != format {
        return Err(CliError::Config("case and judge files must share one format".into()));
    }
    let ds = load_dataset(&cases, &judges, format)?;
    let mut out = ws.begin("ingest")?;
    out.input(&cases);
    out.input(&judges);
    write_cases(&out.path("cases.csv"), ds.cases(), FileFormat::Csv)?;
    write_judges(&out.path("judges.csv"), ds.judges(), FileFormat::Csv)?;
    let report = ValidationReport {
        case_rows: ds.len(),
        judge_rows: ds.judges().len(),
        errors: vec![],
    };
    out.write_json(
        "summary.json",
        &json!({
            "validation": report,
            "n_cases": ds.len(),
            "n_judges": ds.judges().len(),
            "n_active_judges": ds.active_judges().count(),
            "pooled_win_rate": ds.pooled_win_rate(),
        }),
    )?;
    out.commit(ws, cfg, &json!({ "format": format }))
}

fn kind_name(kind: LabelKind) -> &'static str {
    match kind {
        LabelKind::CaseType => "case_type",
        LabelKind::EntityLabel => "entity_label",
    }
}

pub fn audit_assignment_stage(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let (ds, inputs) = load_ingested(ws)?;
    let mut out = ws.begin("audit-assignment")?;
    inputs.iter().for_each(|p| out.input(p));
    let mut summary = BTreeMap::new();
    for &kind in &cfg.audit.label_kinds {
        let name = kind_name(kind);
        match audit_assignment(&ds, kind, cfg.audit.audit_config()) {
            Ok(report) => {
                report.write_csv(&out.path(&format!("tests_{name}.csv")))?;
                report.write_qq_csv(&out.path(&format!("qq_{name}.csv")))?;
                summary.insert(
                    name,
                    json!({
                        "summary": report.summary,
                        "qq_pearson_r": report.qq.as_ref().and_then(|q| q.pearson_r),
                    }),
                );
            }
            Err(courtaudit::Error::Empty(reason)) => {
                summary.insert(name, json!({ "skipped": reason }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.write_json("summary.json", &summary)?;
    out.commit(ws, cfg, &cfg.audit)
}

pub fn audit_deviation(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let (ds, inputs) = load_ingested(ws)?;
    let d = &cfg.deviation;
    let result = judge_deviation_test(&ds, d.deviation_config())?;
    let summary = deviation_summary(&result, d.bins, d.null_replicates, derive_seed(cfg.seed, SEED_DEVIATION))?;
    let mut out = ws.begin("audit-deviation")?;
    inputs.iter().for_each(|p| out.input(p));
    result.write_csv(&out.path("judges.csv"))?;
    summary.histogram.write_csv(&out.path("histogram.csv"))?;
    out.write_json("summary.json", &summary)?;
    out.commit(ws, cfg, &cfg.deviation)
}

pub fn embed(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let (ds, inputs) = load_ingested(ws)?;
    let pipeline = cfg.pipeline();
    let run = run_embedding(&ds, &pipeline)?;
    let mut out = ws.begin("embed")?;
    inputs.iter().for_each(|p| out.input(p));
    run.matrix.write(
        &out.path("citations.csv"),
        &out.path("citation_rows.csv"),
        &out.path("citation_columns.csv"),
    )?;
    run.model.write(
        &run.matrix.judges,
        &run.matrix.reference_cases,
        &out.path("embedding.csv"),
        &out.path("loadings.csv"),
        &out.path("nmf.json"),
    )?;
    if !cfg.embed.sweep_ks.is_empty() {
        let base = NmfConfig {
            seed: derive_seed(cfg.seed, 1),
            ..pipeline.nmf
        };
        let (m, n) = run.matrix.values.shape();
        let ks: Vec<usize> = cfg.embed.sweep_ks.iter().copied().filter(|&k| k >= 1 && k <= m.min(n)).collect();
        if ks.is_empty() {
            return Err(CliError::Config(format!(
                "embed.sweep_ks has no dimension within 1..={}",
                m.min(n)
            )));
        }
        let sweep = dimension_sweep(&run.matrix.values, &ks, cfg.embed.sweep_seeds, &base)?;
        let path = out.path("sweep.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(["k", "best_error", "warm_started", "seed_errors"])
            .map_err(|e| CliError::Io(e.to_string()))?;
        for p in &sweep {
            let errs: Vec<String> = p.errors.iter().map(|e| e.to_string()).collect();
            w.write_record([
                p.k.to_string(),
                p.best_error.to_string(),
                (p.warm_started as u8).to_string(),
                errs.join(";"),
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    out.write_json(
        "summary.json",
        &json!({
            "n_judges": run.matrix.judges.len(),
            "n_reference_cases": run.matrix.reference_cases.len(),
            "zero_rows": run.matrix.zero_rows(),
            "k": run.model.k,
            "iterations": run.model.iterations(),
            "converged": run.model.converged,
            "final_objective": run.model.objective_trace.last(),
        }),
    )?;
    out.commit(ws, cfg, &json!({ "embed": cfg.embed, "seed": derive_seed(cfg.seed, 1) }))
}

fn write_rows(path: &Path, names: &[String], ids: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let mut header = vec!["case_id".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (id, r) in ids.iter().zip(rows) {
        let mut rec = vec![id.to_string()];
        rec.extend(r.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

fn load_embedding(ws: &Workspace) -> CliResult<(JudgeEmbedding, PathBuf)> {
    let path = ws.require("embed", "embedding.csv")?;
    let (judges, weights) = NmfModel::read_weights(&path)?;
    Ok((JudgeEmbedding { judges, weights }, path))
}

pub fn train(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let (ds, inputs) = load_ingested(ws)?;
    let pipeline = cfg.pipeline();
    let mut embedding_path = None;
    let embedding = match cfg.train.features {
        FeatureSet::Embedding => {
            let (e, p) = load_embedding(ws)?;
            embedding_path = Some(p);
            Some(e)
        }
        FeatureSet::Biographic => None,
    };
    let run = train_all(&ds, embedding.as_ref(), &pipeline)?;
    let mut out = ws.begin("train")?;
    inputs.iter().for_each(|p| out.input(p));
    if let Some(p) = &embedding_path {
        out.input(p);
    }
    let mut per_type = Vec::new();
    for r in &run.per_type {
        let stem = r.case_type.as_str();
        r.write_model(&out.path(""))?;
        let names = courtaudit::predict::Classifier::feature_names(&r.model).to_vec();
        let test_ids: Vec<&str> = r.predictions.iter().map(|p| p.case_id.as_str()).collect();
        write_rows(&out.path(&format!("test_features_{stem}.csv")), &names, &test_ids, &r.test_rows)?;
        let train_ids: Vec<String> = (0..r.train_rows.len()).map(|i| format!("train-{i}")).collect();
        let train_ids: Vec<&str> = train_ids.iter().map(String::as_str).collect();
        write_rows(&out.path(&format!("train_features_{stem}.csv")), &names, &train_ids, &r.train_rows)?;
        per_type.push(json!({
            "case_type": r.case_type,
            "n_eligible": r.n_eligible,
            "n_train_balanced": r.n_train_balanced,
            "n_test": r.n_test,
            "cv_best": r.cv.as_ref().map(|c| &c.best),
        }));
    }
    CasePrediction::write_csv(&run.predictions(), &out.path("predictions.csv"))?;
    CasePrediction::write_csv(&run.balanced_predictions(), &out.path("balanced_predictions.csv"))?;
    let skipped: Vec<_> = run
        .skipped
        .iter()
        .map(|(t, why)| json!({ "case_type": t, "reason": why }))
        .collect();
    out.write_json("summary.json", &json!({ "per_type": per_type, "skipped": skipped }))?;
    out.commit(ws, cfg, &json!({ "embed": cfg.embed, "train": cfg.train }))
}

pub fn evaluate(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let path = ws.require("train", "balanced_predictions.csv")?;
    let preds = CasePrediction::read_csv(&path)?;
    let eval = bin_accuracy(&preds, cfg.evaluate.n_bootstrap, derive_seed(cfg.seed, SEED_EVALUATE))?;
    let mut out = ws.begin("evaluate")?;
    out.input(&path);
    eval.write_csv(&out.path("bins.csv"))?;
    out.write_json("summary.json", &eval)?;
    out.commit(ws, cfg, &cfg.evaluate)
}

pub fn judge_test(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let path = ws.require("train", "predictions.csv")?;
    let preds = CasePrediction::read_csv(&path)?;
    let sig = judge_significance(&preds, &cfg.judge_test.significance(derive_seed(cfg.seed, SEED_JUDGE_TEST)))?;
    let mut out = ws.begin("judge-test")?;
    out.input(&path);
    sig.write_rows_csv(&out.path("repetitions.csv"))?;
    sig.write_judges_csv(&out.path("judges.csv"))?;
    sig.write_bounds_csv(&out.path("bounds.csv"))?;
    out.write_json(
        "summary.json",
        &json!({ "summary": sig.summary, "per_judge": sig.per_judge }),
    )?;
    out.commit(ws, cfg, &cfg.judge_test)
}

#[derive(Serialize)]
struct Importance {
    case_type: CaseType,
    n_explained: usize,
    base_value: f64,
    max_efficiency_gap: f64,
    mean_abs: BTreeMap<String, f64>,
}

pub fn explain(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let e = &cfg.explain;
    let mut out = ws.begin("explain")?;
    let mut importance = Vec::new();
    for t in CaseType::ALL {
        let stem = t.as_str();
        let model_path = ws.stage_dir("train").join(format!("model_{stem}.json"));
        if !model_path.is_file() {
            continue;
        }
        let model_path = ws.require("train", &format!("model_{stem}.json"))?;
        let test_path = ws.require("train", &format!("test_features_{stem}.csv"))?;
        let train_path = ws.require("train", &format!("train_features_{stem}.csv"))?;
        let text = std::fs::read_to_string(&model_path).map_err(|err| io_err(&model_path, err))?;
        let result: CaseTypeResult =
            serde_json::from_str(&text).map_err(|err| CliError::Io(format!("{}: {err}", model_path.display())))?;
        let test = read_rows(&test_path)?;
        let train = read_rows(&train_path)?;
        let seed = derive_seed(cfg.seed, SEED_EXPLAIN + 16 * t.index() as u64);
        let background = sample_background(&train, e.background, seed);
        let n = if e.n_cases == 0 { test.len() } else { e.n_cases.min(test.len()) };
        if n == 0 || background.is_empty() {
            continue;
        }
        let report = shapley_importance(
            &result.model,
            &test[..n],
            &background,
            &ShapleyConfig {
                method: e.method,
                n_samples: e.n_samples,
                seed,
            },
        )?;
        report.write_csv(&out.path(&format!("shapley_{stem}.csv")))?;
        importance.push(Importance {
            case_type: t,
            n_explained: n,
            base_value: report.base_value,
            max_efficiency_gap: report.max_efficiency_gap(),
            mean_abs: report.feature_names.iter().cloned().zip(report.mean_abs()).collect(),
        });
        for p in [model_path, test_path, train_path] {
            out.input(&p);
        }
    }
    if importance.is_empty() {
        return Err(CliError::Prerequisite("no trained case-type model found in stage `train`".into()));
    }
    let mut biographics: Option<Vec<AttributeFit>> = None;
    if ws.has("embed", "embedding.csv") {
        let (ds, inputs) = load_ingested(ws)?;
        let (emb, emb_path) = load_embedding(ws)?;
        let (rows, attrs) = case_level_attributes(&ds, &emb.judges, &emb.weights)?;
        let fits = explain_biographics(&emb.dim_names(), &rows, &attrs, e.biographic_l2)?;
        AttributeFit::write_csv(&fits, &out.path("biographics.csv"))?;
        inputs.iter().for_each(|p| out.input(p));
        out.input(&emb_path);
        biographics = Some(fits);
    }
    out.write_json(
        "summary.json",
        &json!({
            "importance": importance,
            "biographics": biographics.map(|f| f
                .iter()
                .map(|a| json!({ "attribute": a.attribute, "fit_type": a.fit_type, "r2": a.r2, "n_rows": a.n_rows }))
                .collect::<Vec<_>>()),
        }),
    )?;
    out.commit(ws, cfg, &cfg.explain)
}

pub fn power(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let mut grid = Vec::new();
    for p in &cfg.power.points {
        let (label, court) = cfg.power_court(p)?;
        grid.push(PowerPoint { label, court });
    }
    let pipeline = cfg.pipeline();
    let pc = PowerConfig {
        stage: cfg.power.stage,
        n_replicates: cfg.power.n_replicates,
        seed: cfg.seed,
        audit: cfg.audit.audit_config(),
        deviation: cfg.deviation.deviation_config(),
        pipeline,
        significance: cfg.judge_test.significance(derive_seed(cfg.seed, SEED_JUDGE_TEST)),
    };
    let rows = power_study(&grid, &pc)?;
    let out = ws.begin("power")?;
    PowerRow::write_csv(&rows, &out.path("power.csv"))?;
    out.write_json("summary.json", &rows)?;
    out.commit(ws, cfg, &json!({ "power": cfg.power, "grid": grid }))
}

/// Figure-style tables copied into the report bundle, keyed by source stage.
const REPORT_TABLES: [(&str, &str, &str); 9] = [
    ("audit-assignment", "qq_case_type.csv", "assignment_qq_case_type.csv"),
    ("audit-assignment", "qq_entity_label.csv", "assignment_qq_entity_label.csv"),
    ("audit-deviation", "histogram.csv", "deviation_histogram.csv"),
    ("audit-deviation", "judges.csv", "deviation_judges.csv"),
    ("evaluate", "bins.csv", "accuracy_bins.csv"),
    ("judge-test", "judges.csv", "judge_accuracy.csv"),
    ("judge-test", "bounds.csv", "judge_bounds.csv"),
    ("explain", "biographics.csv", "biographics.csv"),
    ("power", "power.csv", "power.csv"),
];

const REPORT_SUMMARIES: [&str; 9] = [
    "ingest",
    "audit-assignment",
    "audit-deviation",
    "embed",
    "train",
    "evaluate",
    "judge-test",
    "explain",
    "power",
];

pub fn report(ws: &Workspace, cfg: &RunConfig) -> CliResult<()> {
    let mut out = ws.begin("report")?;
    let mut stages = BTreeMap::new();
    for stage in REPORT_SUMMARIES {
        if let Ok(p) = ws.require(stage, "summary.json") {
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io(e.to_string()))?;
            stages.insert(stage, v);
            out.input(&p);
        }
    }
    if stages.is_empty() {
        return Err(CliError::Prerequisite(format!(
            "no completed stage with a summary in {}",
            ws.root().display()
        )));
    }
    let mut tables = Vec::new();
    for (stage, file, name) in REPORT_TABLES {
        if let Ok(p) = ws.require(stage, file) {
            let dest = out.path(name);
            std::fs::copy(&p, &dest).map_err(|e| io_err(&dest, e))?;
            tables.push(name);
        }
    }
    for t in CaseType::ALL {
        let file = format!("shapley_{}.csv", t.as_str());
        if let Ok(p) = ws.require("explain", &file) {
            let dest = out.path(&format!("explain_{file}"));
            std::fs::copy(&p, &dest).map_err(|e| io_err(&dest, e))?;
        }
    }
    out.write_json("report.json", &json!({ "stages": stages, "tables": tables }))?;
    out.commit(ws, cfg, &json!({ "stages": stages.keys().collect::<Vec<_>>() }))
}
