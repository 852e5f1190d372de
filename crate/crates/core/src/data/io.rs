//! CSV and JSON-lines ingestion with row-level validation.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::model::{CaseRecord, CaseType, Circuit, Dataset, EntityLabel, JudgeProfile, Outcome};
use crate::error::{Error, Result};

pub const CASE_COLUMNS: [&str; 8] = [
    "case_id",
    "judge_id",
    "decision_date",
    "circuit",
    "case_type",
    "outcome",
    "entity_label",
    "citations",
];

pub const JUDGE_COLUMNS: [&str; 5] = [
    "judge_id",
    "gender_male",
    "party_republican",
    "appointment_date",
    "promotion_date",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    JsonLines,
}

impl FileFormat {
    /// Guess from the file extension; anything other than `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => FileFormat::JsonLines,
            _ => FileFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub file: String,
    /// 1-based data row (the CSV header is not counted).
    pub row: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub case_rows: usize,
    pub judge_rows: usize,
    pub errors: Vec<RowError>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

const EARLIEST: (i32, u32, u32) = (1880, 1, 1);

/// Untyped row shared by both formats before validation.
#[derive(Default)]
struct RawRow {
    fields: BTreeMap<&'static str, String>,
    list: Vec<String>,
}

struct RowCtx<'a> {
    file: &'a str,
    row: usize,
    errors: &'a mut Vec<RowError>,
}

impl RowCtx<'_> {
    fn err(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(RowError {
            file: self.file.to_string(),
            row: self.row,
            field: field.to_string(),
            message: message.into(),
        });
    }
}

fn parse_date(raw: &str, field: &str, ctx: &mut RowCtx<'_>) -> Option<NaiveDate> {
    match NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d") {
        Ok(d) => {
            let earliest = NaiveDate::from_ymd_opt(EARLIEST.0, EARLIEST.1, EARLIEST.2).unwrap();
            if d < earliest || d > Utc::now().date_naive() {
                ctx.err(field, format!("date {d} outside [1880-01-01, today]"));
                None
            } else {
                Some(d)
            }
        }
        Err(e) => {
            ctx.err(field, format!("cannot parse `{raw}` as YYYY-MM-DD: {e}"));
            None
        }
    }
}

fn parse_flag(raw: &str, field: &str, ctx: &mut RowCtx<'_>) -> Option<bool> {
    match raw.trim() {
        "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        other => {
            ctx.err(field, format!("expected 0 or 1, got `{other}`"));
            None
        }
    }
}

fn validate_case(raw: RawRow, ctx: &mut RowCtx<'_>) -> Option<CaseRecord> {
    let get = |k: &str| raw.fields.get(k).map(String::as_str).unwrap_or("");
    let before = ctx.errors.len();
    let case_id = get("case_id").trim().to_string();
    if case_id.is_empty() {
        ctx.err("case_id", "empty case_id");
    }
    let judge_id = get("judge_id").trim().to_string();
    if judge_id.is_empty() {
        ctx.err("judge_id", "empty judge_id");
    }
    let decision_date = parse_date(get("decision_date"), "decision_date", ctx);
    let circuit = get("circuit")
        .parse::<Circuit>()
        .map_err(|e| ctx.err("circuit", e))
        .ok();
    let case_type = get("case_type")
        .parse::<CaseType>()
        .map_err(|e| ctx.err("case_type", e))
        .ok();
    let outcome = match get("outcome").trim().parse::<u8>() {
        Ok(v) => Outcome::try_from(v).map_err(|e| ctx.err("outcome", e)).ok(),
        Err(_) => {
            ctx.err("outcome", format!("expected 0 or 1, got `{}`", get("outcome")));
            None
        }
    };
    let entity_raw = get("entity_label").trim();
    let entity_label = if entity_raw.is_empty() || entity_raw == "unknown" {
        None
    } else {
        match entity_raw.parse::<EntityLabel>() {
            Ok(e) => Some(e),
            Err(e) => {
                ctx.err("entity_label", e);
                None
            }
        }
    };
    if ctx.errors.len() > before {
        return None;
    }
    Some(CaseRecord {
        case_id,
        judge_id,
        decision_date: decision_date?,
        circuit: circuit?,
        case_type: case_type?,
        outcome: outcome?,
        entity_label,
        citations: raw.list,
    })
}

fn validate_judge(raw: RawRow, ctx: &mut RowCtx<'_>) -> Option<JudgeProfile> {
    let get = |k: &str| raw.fields.get(k).map(String::as_str).unwrap_or("");
    let before = ctx.errors.len();
    let judge_id = get("judge_id").trim().to_string();
    if judge_id.is_empty() {
        ctx.err("judge_id", "empty judge_id");
    }
    let gender_male = parse_flag(get("gender_male"), "gender_male", ctx);
    let party_republican = parse_flag(get("party_republican"), "party_republican", ctx);
    let appointment_date = parse_date(get("appointment_date"), "appointment_date", ctx);
    let promo = get("promotion_date").trim();
    let promotion_date = if promo.is_empty() {
        None
    } else {
        parse_date(promo, "promotion_date", ctx)
    };
    if ctx.errors.len() > before {
        return None;
    }
    Some(JudgeProfile {
        judge_id,
        gender_male: gender_male?,
        party_republican: party_republican?,
        appointment_date: appointment_date?,
        promotion_date,
    })
}

fn check_header(found: &[String], expected: &[&'static str], file: &str) -> Result<()> {
    let found_set: HashSet<&str> = found.iter().map(String::as_str).collect();
    let missing: Vec<&str> = expected
        .iter()
        .copied()
        .filter(|c| !found_set.contains(c))
        .collect();
    let unknown: Vec<&str> = found
        .iter()
        .map(String::as_str)
        .filter(|c| !expected.contains(c))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(Error::Schema(format!(
            "{file}: missing columns {missing:?}, unknown columns {unknown:?}"
        )));
    }
    Ok(())
}

fn read_csv_rows(
    path: &Path,
    columns: &[&'static str],
    list_column: Option<&str>,
) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Serde(format!("{other:?}")),
        })?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    check_header(&header, columns, &path.display().to_string())?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut raw = RawRow::default();
        for (name, value) in header.iter().zip(rec.iter()) {
            let key = columns.iter().copied().find(|c| c == name).unwrap();
            if Some(key) == list_column {
                raw.list = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
            } else {
                raw.fields.insert(key, value.to_string());
            }
        }
        rows.push(raw);
    }
    Ok(rows)
}

fn json_scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Bool(b) => (*b as u8).to_string(),
        other => other.to_string(),
    }
}

fn read_jsonl_rows(
    path: &Path,
    columns: &[&'static str],
    list_column: Option<&str>,
) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        let keys: Vec<String> = obj.keys().cloned().collect();
        check_header(&keys, columns, &format!("{} line {}", path.display(), i + 1))?;
        let mut raw = RawRow::default();
        for key in columns.iter().copied() {
            let v = &obj[key];
            if Some(key) == list_column {
                match v {
                    serde_json::Value::Array(items) => {
                        raw.list = items.iter().map(json_scalar).collect();
                    }
                    serde_json::Value::Null => {}
                    other => {
                        return Err(Error::Schema(format!(
                            "{}: line {}: `{key}` must be an array, got {other}",
                            path.display(),
                            i + 1
                        )))
                    }
                }
            } else {
                raw.fields.insert(key, json_scalar(v));
            }
        }
        rows.push(raw);
    }
    Ok(rows)
}

fn read_rows(
    path: &Path,
    format: FileFormat,
    columns: &[&'static str],
    list_column: Option<&str>,
) -> Result<Vec<RawRow>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    match format {
        FileFormat::Csv => read_csv_rows(path, columns, list_column),
        FileFormat::JsonLines => read_jsonl_rows(path, columns, list_column),
    }
}

/// Read and type-check a case file without cross-record checks.
pub fn read_cases(
    path: &Path,
    format: FileFormat,
    report: &mut ValidationReport,
) -> Result<Vec<CaseRecord>> {
    let rows = read_rows(path, format, &CASE_COLUMNS, Some("citations"))?;
    report.case_rows = rows.len();
    let file = path.display().to_string();
    let mut out = Vec::with_capacity(rows.len());
    for (i, raw) in rows.into_iter().enumerate() {
        let mut ctx = RowCtx {
            file: &file,
            row: i + 1,
            errors: &mut report.errors,
        };
        if let Some(c) = validate_case(raw, &mut ctx) {
            out.push(c);
        }
    }
    Ok(out)
}

pub fn read_judges(
    path: &Path,
    format: FileFormat,
    report: &mut ValidationReport,
) -> Result<Vec<JudgeProfile>> {
    let rows = read_rows(path, format, &JUDGE_COLUMNS, None)?;
    report.judge_rows = rows.len();
    let file = path.display().to_string();
    let mut out = Vec::with_capacity(rows.len());
    for (i, raw) in rows.into_iter().enumerate() {
        let mut ctx = RowCtx {
            file: &file,
            row: i + 1,
            errors: &mut report.errors,
        };
        if let Some(j) = validate_judge(raw, &mut ctx) {
            out.push(j);
        }
    }
    Ok(out)
}

/// Load and validate a dataset from a case file and a judge file.
///
/// Every malformed row is collected; if any exist the whole load fails with
/// [`Error::Validation`] carrying the full report.
pub fn load_dataset(cases_path: &Path, judges_path: &Path, format: FileFormat) -> Result<Dataset> {
    let mut report = ValidationReport::default();
    let judges = read_judges(judges_path, format, &mut report)?;
    let cases = read_cases(cases_path, format, &mut report)?;

    let mut seen_judges = HashSet::new();
    for (i, j) in judges.iter().enumerate() {
        if !seen_judges.insert(j.judge_id.as_str()) {
            report.errors.push(RowError {
                file: judges_path.display().to_string(),
                row: i + 1,
                field: "judge_id".into(),
                message: format!("duplicate judge_id `{}`", j.judge_id),
            });
        }
    }
    let appointments: BTreeMap<&str, NaiveDate> = judges
        .iter()
        .map(|j| (j.judge_id.as_str(), j.appointment_date))
        .collect();
    let mut seen_cases = HashSet::new();
    for (i, c) in cases.iter().enumerate() {
        let mut push = |field: &str, message: String| {
            report.errors.push(RowError {
                file: cases_path.display().to_string(),
                row: i + 1,
                field: field.into(),
                message,
            })
        };
        if !seen_cases.insert(c.case_id.as_str()) {
            push("case_id", format!("duplicate case_id `{}`", c.case_id));
        }
        match appointments.get(c.judge_id.as_str()) {
            None => push(
                "judge_id",
                format!("judge_id `{}` has no judge profile", c.judge_id),
            ),
            Some(&appt) if c.decision_date < appt => push(
                "decision_date",
                format!("decided {} before appointment {appt}", c.decision_date),
            ),
            _ => {}
        }
    }
    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("cases".into(), cases_path.display().to_string());
    provenance.insert("judges".into(), judges_path.display().to_string());
    Dataset::new(cases, judges, provenance)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_cases(path: &Path, cases: &[CaseRecord], format: FileFormat) -> Result<()> {
    let mut w = create(path)?;
    match format {
        FileFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(CASE_COLUMNS)?;
            for c in cases {
                let date = c.decision_date.to_string();
                let outcome = c.outcome.as_u8().to_string();
                let cites = c.citations.join(";");
                wtr.write_record([
                    c.case_id.as_str(),
                    c.judge_id.as_str(),
                    date.as_str(),
                    c.circuit.as_str(),
                    c.case_type.as_str(),
                    outcome.as_str(),
                    c.entity_label.map(EntityLabel::as_str).unwrap_or(""),
                    cites.as_str(),
                ])?;
            }
            wtr.flush().map_err(|e| Error::io(path, e))?;
        }
        FileFormat::JsonLines => {
            for c in cases {
                serde_json::to_writer(&mut w, c)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn write_judges(path: &Path, judges: &[JudgeProfile], format: FileFormat) -> Result<()> {
    let mut w = create(path)?;
    match format {
        FileFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(JUDGE_COLUMNS)?;
            for j in judges {
                let promo = j.promotion_date.map(|d| d.to_string()).unwrap_or_default();
                wtr.write_record([
                    j.judge_id.as_str(),
                    if j.gender_male { "1" } else { "0" },
                    if j.party_republican { "1" } else { "0" },
                    j.appointment_date.to_string().as_str(),
                    promo.as_str(),
                ])?;
            }
            wtr.flush().map_err(|e| Error::io(path, e))?;
        }
        FileFormat::JsonLines => {
            for j in judges {
                let v = serde_json::json!({
                    "judge_id": j.judge_id,
                    "gender_male": j.gender_male as u8,
                    "party_republican": j.party_republican as u8,
                    "appointment_date": j.appointment_date.to_string(),
                    "promotion_date": j.promotion_date.map(|d| d.to_string()),
                });
                serde_json::to_writer(&mut w, &v)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const JUDGES: &str = "judge_id,gender_male,party_republican,appointment_date,promotion_date\n\
                          j1,1,0,1970-01-01,\nj2,0,1,1975-06-01,1990-01-01\n";

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_valid_rows_load() {
        let dir = tempfile::tempdir().unwrap();
        let j = write(dir.path(), "judges.csv", JUDGES);
        let c = write(
            dir.path(),
            "cases.csv",
            "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
             c1,j1,1980-03-01,9,civil_rights,1,government,p1;p2\n\
             c2,j1,1981-03-01,9,torts,0,,\n\
             c3,j2,1982-03-01,dc,labor,0,mixed,p1\n",
        );
        let ds = load_dataset(&c, &j, FileFormat::Csv).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.case("c1").unwrap().citations, vec!["p1", "p2"]);
        assert_eq!(ds.case("c2").unwrap().entity_label, None);
    }

    #[test]
    fn outcome_two_names_row_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let j = write(dir.path(), "judges.csv", JUDGES);
        let c = write(
            dir.path(),
            "cases.csv",
            "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
             c1,j1,1980-03-01,9,civil_rights,1,,\nc2,j1,1981-03-01,9,torts,2,,\n",
        );
        match load_dataset(&c, &j, FileFormat::Csv) {
            Err(Error::Validation(report)) => {
                assert_eq!(report.errors.len(), 1);
                assert_eq!(report.errors[0].row, 2);
                assert_eq!(report.errors[0].field, "outcome");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_judge_is_referential_error() {
        let dir = tempfile::tempdir().unwrap();
        let j = write(dir.path(), "judges.csv", JUDGES);
        let c = write(
            dir.path(),
            "cases.csv",
            "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
             c1,j9,1980-03-01,9,civil_rights,1,,\n",
        );
        let Err(Error::Validation(report)) = load_dataset(&c, &j, FileFormat::Csv) else {
            panic!("expected validation error");
        };
        assert_eq!(report.errors[0].field, "judge_id");
    }

    #[test]
    fn duplicate_case_id_and_missing_file_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let j = write(dir.path(), "judges.csv", JUDGES);
        let c = write(
            dir.path(),
            "cases.csv",
            "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
             c1,j1,1980-03-01,9,civil_rights,1,,\nc1,j1,1981-03-01,9,torts,0,,\n",
        );
        let Err(Error::Validation(report)) = load_dataset(&c, &j, FileFormat::Csv) else {
            panic!("expected validation error");
        };
        assert!(report.errors[0].message.contains("duplicate"));

        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_dataset(&missing, &j, FileFormat::Csv),
            Err(Error::Io { .. })
        ));

        let bad = write(dir.path(), "bad.csv", "case_id,judge\nc1,j1\n");
        assert!(matches!(
            load_dataset(&bad, &j, FileFormat::Csv),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn jsonl_matches_csv() {
        let dir = tempfile::tempdir().unwrap();
        let j = write(dir.path(), "judges.csv", JUDGES);
        let c = write(
            dir.path(),
            "cases.csv",
            "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
             c1,j1,1980-03-01,9,civil_rights,1,government,p1;p2\n\
             c2,j2,1981-03-01,1,torts,0,,\n",
        );
        let ds = load_dataset(&c, &j, FileFormat::Csv).unwrap();
        let cj = dir.path().join("cases.jsonl");
        let jj = dir.path().join("judges.jsonl");
        write_cases(&cj, ds.cases(), FileFormat::JsonLines).unwrap();
        write_judges(&jj, ds.judges(), FileFormat::JsonLines).unwrap();
        let back = load_dataset(&cj, &jj, FileFormat::JsonLines).unwrap();
        assert_eq!(back.cases(), ds.cases());
        assert_eq!(back.judges(), ds.judges());
    }
}
