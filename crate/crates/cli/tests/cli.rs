use std::path::Path;
use std::process::{Command, Output};

fn courtaudit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_courtaudit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn courtaudit")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn digest_of(manifest: &serde_json::Value, list: &str, path: &str) -> String {
    manifest[list]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["path"] == path)
        .unwrap_or_else(|| panic!("{path} not in {list}"))["sha256"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn null_chain_is_calibrated_and_linked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let sets = ["--set", "simulate.n_judges=300", "--set", "simulate.n_cases=60000", "--seed", "5"];
    for stage in ["simulate", "ingest", "audit-assignment"] {
        let mut args = vec![stage];
        args.extend(sets);
        let o = courtaudit(&args, &out);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = json(&out.join("audit-assignment/summary.json"));
    let r = summary["case_type"]["qq_pearson_r"].as_f64().unwrap();
    let n = summary["case_type"]["summary"]["n_tests"].as_u64().unwrap();
    assert!(n >= 3000, "{n} tests");
    assert!(r >= 0.99, "QQ r = {r}");

    let sim = json(&out.join("simulate/manifest.json"));
    let ing = json(&out.join("ingest/manifest.json"));
    let audit = json(&out.join("audit-assignment/manifest.json"));
    assert_eq!(sim["schema_version"], 1);
    assert_eq!(sim["seed"], 5);
    assert_eq!(digest_of(&sim, "outputs", "cases.csv"), digest_of(&ing, "inputs", "simulate/cases.csv"));
    assert_eq!(digest_of(&ing, "outputs", "cases.csv"), digest_of(&audit, "inputs", "ingest/cases.csv"));
    assert!(out.join("audit-assignment/run_config.toml").is_file());
    assert!(!out.join(".lock").exists());
}

#[test]
fn missing_prerequisite_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = courtaudit(&["judge-test"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "missing_prerequisite");
    assert_eq!(rec["stage"], "judge-test");
    assert!(!dir.path().join("judge-test").exists());
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".lock"), "").unwrap();
    let o = courtaudit(&["simulate", "--set", "simulate.n_judges=5", "--set", "simulate.n_cases=100"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"], "locked");
    assert!(!dir.path().join("simulate").exists());
}

#[test]
fn failed_ingest_leaves_nothing_visible() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.csv");
    let judges = dir.path().join("judges.csv");
    std::fs::write(
        &cases,
        "case_id,judge_id,decision_date,circuit,case_type,outcome,entity_label,citations\n\
         c1,j1,1990-01-01,2,torts,1,,\n\
         c2,j1,not-a-date,2,torts,0,,\n",
    )
    .unwrap();
    std::fs::write(
        &judges,
        "judge_id,gender_male,party_republican,appointment_date,promotion_date\nj1,1,0,1980-01-01,\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = courtaudit(
        &["ingest", "--cases", cases.to_str().unwrap(), "--judges", judges.to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "validation");
    assert!(rec["details"]["errors"].as_array().unwrap().iter().any(|e| e["row"] == 2));
    let visible: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(visible.is_empty(), "left behind: {visible:?}");
}

#[test]
fn invalid_override_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = courtaudit(&["simulate", "--set", "simulate.base_win_rate=1.5"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    let rec = error_record(&o);
    assert!(rec["error"] == "stage_failure" || rec["error"] == "invalid_config", "{rec}");
    let o = courtaudit(&["embed", "--set", "nonsense"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_command_prints_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = courtaudit(&["config", "--seed", "9", "--set", "embed.k=12"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let table: toml::Table = text.parse().unwrap();
    assert_eq!(table["seed"].as_integer(), Some(9));
    assert_eq!(table["embed"]["k"].as_integer(), Some(12));
    assert_eq!(table["embed"]["n_top"].as_integer(), Some(500));
    assert_eq!(table["judge_test"]["kappa"].as_float(), Some(0.025));
    assert_eq!(table["judge_test"]["n_repetitions"].as_integer(), Some(30));
}

#[test]
fn external_jsonl_input_is_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.jsonl");
    let judges = dir.path().join("judges.jsonl");
    let mut lines = String::new();
    for i in 0..30 {
        lines.push_str(&format!(
            "{{\"case_id\":\"c{i}\",\"judge_id\":\"j1\",\"decision_date\":\"1991-0{}-01\",\"circuit\":\"3\",\
             \"case_type\":\"contract\",\"outcome\":{},\"entity_label\":null,\"citations\":[\"x\"]}}\n",
            i % 9 + 1,
            i % 2
        ));
    }
    std::fs::write(&cases, lines).unwrap();
    std::fs::write(
        &judges,
        "{\"judge_id\":\"j1\",\"gender_male\":0,\"party_republican\":1,\"appointment_date\":\"1985-01-01\",\"promotion_date\":null}\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = courtaudit(
        &["ingest", "--cases", cases.to_str().unwrap(), "--judges", judges.to_str().unwrap()],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("ingest/summary.json"));
    assert_eq!(summary["n_cases"], 30);
    let o = courtaudit(&["audit-deviation"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("audit-deviation/judges.csv").is_file());
}
