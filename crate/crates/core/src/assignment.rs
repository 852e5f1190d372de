//! Random-assignment audit.
//!
//! For every (circuit, decade) context the label base rates are estimated from
//! all cases in that context. Each judge with enough cases in the context then
//! gets one exact binomial test per label: does the judge's label count look
//! like a draw from Binomial(n, base_rate)?

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CaseRecord, CaseType, Circuit, Dataset, EntityLabel};
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{binomial_two_sided, correct_pvalues, qq_uniformity, Corrected, Correction, QqResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    CaseType,
    EntityLabel,
}

impl LabelKind {
    pub fn labels(self) -> Vec<&'static str> {
        match self {
            LabelKind::CaseType => CaseType::ALL.iter().map(|c| c.as_str()).collect(),
            LabelKind::EntityLabel => EntityLabel::ALL.iter().map(|c| c.as_str()).collect(),
        }
    }

    pub fn label_of(self, case: &CaseRecord) -> Option<&'static str> {
        match self {
            LabelKind::CaseType => Some(case.case_type.as_str()),
            LabelKind::EntityLabel => case.entity_label.map(EntityLabel::as_str),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRateEntry {
    pub circuit: Circuit,
    pub decade: i32,
    pub total: usize,
    /// Label fractions; they sum to 1 over all labels of the kind.
    pub rates: BTreeMap<String, f64>,
    pub totals: BTreeMap<String, usize>,
    /// Whether the context has enough cases to serve as a null reference.
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRateTable {
    pub label_kind: LabelKind,
    pub min_context_cases: usize,
    pub entries: Vec<BaseRateEntry>,
}

impl BaseRateTable {
    pub fn get(&self, circuit: Circuit, decade: i32) -> Option<&BaseRateEntry> {
        self.entries
            .binary_search_by(|e| (e.circuit, e.decade).cmp(&(circuit, decade)))
            .ok()
            .map(|i| &self.entries[i])
    }
}

pub const DEFAULT_MIN_CONTEXT_CASES: usize = 100;

/// Per (circuit, decade) label fractions over all cases, including each
/// judge's own. Contexts below `min_context_cases` are kept but marked
/// `retained = false`.
pub fn compute_base_rates(
    dataset: &Dataset,
    label_kind: LabelKind,
    min_context_cases: usize,
) -> BaseRateTable {
    let labels = label_kind.labels();
    let mut counts: BTreeMap<(Circuit, i32), BTreeMap<String, usize>> = BTreeMap::new();
    for c in dataset.cases() {
        let Some(label) = label_kind.label_of(c) else {
            continue;
        };
        let slot = counts.entry((c.circuit, c.decade())).or_insert_with(|| {
            labels.iter().map(|l| (l.to_string(), 0)).collect()
        });
        *slot.get_mut(label).unwrap() += 1;
    }
    let entries = counts
        .into_iter()
        .map(|((circuit, decade), totals)| {
            let total: usize = totals.values().sum();
            let rates = totals
                .iter()
                .map(|(l, &n)| (l.clone(), n as f64 / total as f64))
                .collect();
            BaseRateEntry {
                circuit,
                decade,
                total,
                rates,
                totals,
                retained: total >= min_context_cases,
            }
        })
        .collect();
    BaseRateTable {
        label_kind,
        min_context_cases,
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub min_judgments: usize,
    pub min_context_cases: usize,
    pub alpha: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            min_judgments: 10,
            min_context_cases: DEFAULT_MIN_CONTEXT_CASES,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub judge_id: String,
    pub circuit: Circuit,
    pub decade: i32,
    pub label: String,
    pub n: u64,
    pub k: u64,
    pub base_rate: f64,
    pub p_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub n_tests: usize,
    /// Number of (judge, circuit, decade) groups tested.
    pub n_groups: usize,
    pub cases_without_label: usize,
    pub raw_rejected_fraction: f64,
    pub corrected_rejected_fraction: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub label_kind: LabelKind,
    pub alpha: f64,
    pub config: AuditConfig,
    pub entries: Vec<AuditEntry>,
    pub corrected: BTreeMap<Correction, Corrected>,
    pub qq: Option<QqResult>,
    pub summary: AuditSummary,
}

impl AuditReport {
    pub fn p_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.p_raw).collect()
    }

    /// One row per test with raw, adjusted and rejection columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "judge_id", "circuit", "decade", "label", "n", "k", "base_rate", "p_raw",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        for m in self.corrected.keys() {
            header.push(format!("p_{}", m.short_name()));
            header.push(format!("reject_{}", m.short_name()));
        }
        w.write_record(&header)?;
        for (i, e) in self.entries.iter().enumerate() {
            let mut row = vec![
                e.judge_id.clone(),
                e.circuit.to_string(),
                e.decade.to_string(),
                e.label.clone(),
                e.n.to_string(),
                e.k.to_string(),
                e.base_rate.to_string(),
                e.p_raw.to_string(),
            ];
            for c in self.corrected.values() {
                row.push(c.adjusted[i].to_string());
                row.push((c.rejected[i] as u8).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Two-column (theoretical, empirical) QQ table.
    pub fn write_qq_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theoretical", "empirical"])?;
        if let Some(qq) = &self.qq {
            for (t, e) in &qq.pairs {
                w.write_record([t.to_string(), e.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn audit_assignment(
    dataset: &Dataset,
    label_kind: LabelKind,
    config: AuditConfig,
) -> Result<AuditReport> {
    let rates = compute_base_rates(dataset, label_kind, config.min_context_cases);
    let labels = label_kind.labels();

    let mut groups: BTreeMap<(&str, Circuit, i32), BTreeMap<&'static str, u64>> = BTreeMap::new();
    let mut unlabeled = 0;
    for c in dataset.cases() {
        let Some(label) = label_kind.label_of(c) else {
            unlabeled += 1;
            continue;
        };
        *groups
            .entry((c.judge_id.as_str(), c.circuit, c.decade()))
            .or_default()
            .entry(label)
            .or_default() += 1;
    }
    let groups: Vec<_> = groups
        .into_iter()
        .filter(|(_, counts)| counts.values().sum::<u64>() as usize >= config.min_judgments)
        .filter(|((_, circuit, decade), _)| {
            rates.get(*circuit, *decade).is_some_and(|e| e.retained)
        })
        .collect();

    let per_group: Vec<Result<Vec<AuditEntry>>> = par::map(&groups, |((judge, circuit, decade), counts)| {
        let ctx = rates.get(*circuit, *decade).expect("filtered above");
        let n: u64 = counts.values().sum();
        let mut out = Vec::new();
        for label in &labels {
            let base_rate = ctx.rates[*label];
            // A label absent from (or exhausting) the context has no binomial null.
            if base_rate <= 0.0 || base_rate >= 1.0 {
                continue;
            }
            let k = counts.get(label).copied().unwrap_or(0);
            out.push(AuditEntry {
                judge_id: judge.to_string(),
                circuit: *circuit,
                decade: *decade,
                label: label.to_string(),
                n,
                k,
                base_rate,
                p_raw: binomial_two_sided(k, n, base_rate)?,
            });
        }
        Ok(out)
    });
    let mut entries = Vec::new();
    for g in per_group {
        entries.extend(g?);
    }

    let ps: Vec<f64> = entries.iter().map(|e| e.p_raw).collect();
    let mut corrected = BTreeMap::new();
    if !ps.is_empty() {
        for m in Correction::ALL {
            corrected.insert(m, correct_pvalues(&ps, m, config.alpha)?);
        }
    }
    let qq = if ps.len() >= 2 { Some(qq_uniformity(&ps)?) } else { None };
    let raw_rejected_fraction = if ps.is_empty() {
        0.0
    } else {
        ps.iter().filter(|p| **p < config.alpha).count() as f64 / ps.len() as f64
    };
    let summary = AuditSummary {
        n_tests: entries.len(),
        n_groups: groups.len(),
        cases_without_label: unlabeled,
        raw_rejected_fraction,
        corrected_rejected_fraction: corrected
            .iter()
            .map(|(m, c)| (m.short_name().to_string(), c.rejected_fraction()))
            .collect(),
    };
    Ok(AuditReport {
        label_kind,
        alpha: config.alpha,
        config,
        entries,
        corrected,
        qq,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{JudgeProfile, Outcome};
    use chrono::NaiveDate;

    fn court(spec: &[(&str, Circuit, i32, CaseType, usize)]) -> Dataset {
        let mut cases = Vec::new();
        let mut judges = BTreeMap::new();
        for &(judge, circuit, year, ct, count) in spec {
            judges.entry(judge).or_insert_with(|| JudgeProfile {
                judge_id: judge.into(),
                gender_male: true,
                party_republican: true,
                appointment_date: NaiveDate::from_ymd_opt(1950, 1, 1).unwrap(),
                promotion_date: None,
            });
            for _ in 0..count {
                let i = cases.len();
                cases.push(CaseRecord {
                    case_id: format!("c{i}"),
                    judge_id: judge.into(),
                    decision_date: NaiveDate::from_ymd_opt(year, 1 + (i % 12) as u32, 1).unwrap(),
                    circuit,
                    case_type: ct,
                    outcome: Outcome::LOST,
                    entity_label: None,
                    citations: vec![],
                });
            }
        }
        Dataset::new(cases, judges.into_values().collect(), BTreeMap::new()).unwrap()
    }

    #[test]
    fn base_rate_is_label_share() {
        let ds = court(&[
            ("a", Circuit::First, 1985, CaseType::CivilRights, 40),
            ("a", Circuit::First, 1985, CaseType::Torts, 60),
        ]);
        let t = compute_base_rates(&ds, LabelKind::CaseType, 100);
        let e = t.get(Circuit::First, 1980).unwrap();
        assert!(e.retained);
        assert_eq!(e.rates["civil_rights"], 0.4);
        assert!((e.rates.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_context_is_not_retained() {
        let ds = court(&[("a", Circuit::First, 1985, CaseType::Torts, 99)]);
        let t = compute_base_rates(&ds, LabelKind::CaseType, 100);
        assert!(!t.entries[0].retained);
        let r = audit_assignment(&ds, LabelKind::CaseType, AuditConfig::default()).unwrap();
        assert!(r.entries.is_empty());
    }

    #[test]
    fn circuits_have_independent_tables() {
        let ds = court(&[
            ("a", Circuit::First, 1985, CaseType::Torts, 100),
            ("b", Circuit::Second, 1985, CaseType::Labor, 100),
        ]);
        let t = compute_base_rates(&ds, LabelKind::CaseType, 100);
        assert_eq!(t.get(Circuit::First, 1980).unwrap().rates["torts"], 1.0);
        assert_eq!(t.get(Circuit::Second, 1980).unwrap().rates["torts"], 0.0);
    }

    #[test]
    fn worked_example_single_judge() {
        // Judge "a" has 70 civil-rights cases out of 100; context base rate 0.4.
        let ds = court(&[
            ("a", Circuit::First, 1985, CaseType::CivilRights, 70),
            ("a", Circuit::First, 1985, CaseType::Torts, 30),
            ("b", Circuit::First, 1985, CaseType::CivilRights, 90),
            ("b", Circuit::First, 1985, CaseType::Torts, 310),
        ]);
        let r = audit_assignment(&ds, LabelKind::CaseType, AuditConfig::default()).unwrap();
        let e = r
            .entries
            .iter()
            .find(|e| e.judge_id == "a" && e.label == "civil_rights")
            .unwrap();
        assert_eq!((e.n, e.k), (100, 70));
        assert!((e.base_rate - 0.32).abs() < 1e-12);
        let with_04 = binomial_two_sided(70, 100, 0.4).unwrap();
        assert!(with_04 < 1e-7);
        assert!(e.p_raw < with_04);
    }

    #[test]
    fn too_few_judgments_skipped() {
        let ds = court(&[
            ("a", Circuit::First, 1985, CaseType::CivilRights, 9),
            ("b", Circuit::First, 1985, CaseType::Torts, 100),
            ("b", Circuit::First, 1986, CaseType::CivilRights, 20),
        ]);
        let r = audit_assignment(&ds, LabelKind::CaseType, AuditConfig::default()).unwrap();
        assert!(r.entries.iter().all(|e| e.judge_id == "b"));
        assert_eq!(r.summary.n_groups, 1);
    }
}
