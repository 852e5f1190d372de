use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CaseRecord, Dataset};
use crate::error::{Error, Result};
use crate::par;

/// The first cases of a judge's career, chronologically.
#[derive(Debug, Clone)]
pub struct EarlyWindow<'a> {
    pub cases: Vec<&'a CaseRecord>,
    pub end_year: i32,
}

/// Window size is `ceil(fraction * total)`, at least one case.
pub fn window_size(total: usize, fraction: f64) -> usize {
    // Guard against 0.1 * 70 = 7.000000000000001 rounding up to 8.
    let raw = fraction * total as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1, total.max(1))
}

pub fn early_career_window<'a>(
    dataset: &'a Dataset,
    judge_id: &str,
    fraction: f64,
) -> Result<EarlyWindow<'a>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("window fraction {fraction} not in (0, 1)")));
    }
    if dataset.judge(judge_id).is_none() {
        return Err(Error::UnknownJudge(judge_id.to_string()));
    }
    let all: Vec<&CaseRecord> = dataset.cases_of(judge_id).collect();
    if all.is_empty() {
        return Err(Error::Empty(format!("judge `{judge_id}` has no cases")));
    }
    let cases: Vec<&CaseRecord> = all[..window_size(all.len(), fraction)].to_vec();
    let end_year = cases.last().unwrap().year();
    Ok(EarlyWindow { cases, end_year })
}

/// Case ids ranked by citations received from opinions decided in or before
/// `as_of_year`; ties broken by case id.
pub fn top_cited(dataset: &Dataset, as_of_year: i32, n_top: usize) -> Result<Vec<(String, u64)>> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for c in dataset.cases().iter().filter(|c| c.year() <= as_of_year) {
        for cited in &c.citations {
            *counts.entry(cited.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty(format!("no citations on or before {as_of_year}")));
    }
    Ok(rank(counts.into_iter(), n_top))
}

fn rank<'a>(counts: impl Iterator<Item = (&'a str, u64)>, n_top: usize) -> Vec<(String, u64)> {
    let mut v: Vec<(&str, u64)> = counts.collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v.truncate(n_top);
    v.into_iter().map(|(id, n)| (id.to_string(), n)).collect()
}

/// How reference sets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Each judge's own top-cited set as of the year before their window ends.
    PerJudge,
    /// One top-cited set as of the last decision year in the dataset.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CitationConfig {
    pub fraction: f64,
    pub n_top: usize,
    pub exclude_self_citations: bool,
    pub reference: ReferenceMode,
}

impl Default for CitationConfig {
    fn default() -> Self {
        CitationConfig {
            fraction: 0.10,
            n_top: 500,
            exclude_self_citations: false,
            reference: ReferenceMode::PerJudge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub judge_id: String,
    pub window_cases: usize,
    pub window_end_year: i32,
    pub reference_year: i32,
    pub reference_size: usize,
    pub in_set_citations: u64,
    /// The judge cited nothing from their reference set.
    pub zero_row: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitationMatrix {
    pub judges: Vec<String>,
    pub reference_cases: Vec<String>,
    /// `judges.len() x reference_cases.len()`, rows sum to one or are zero.
    pub values: DMatrix<f64>,
    pub window_meta: Vec<WindowMeta>,
}

/// Cumulative citation counts queried by year.
struct CitationIndex<'a> {
    by_year: BTreeMap<i32, Vec<&'a str>>,
}

impl<'a> CitationIndex<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let mut by_year: BTreeMap<i32, Vec<&'a str>> = BTreeMap::new();
        for c in dataset.cases() {
            by_year
                .entry(c.year())
                .or_default()
                .extend(c.citations.iter().map(String::as_str));
        }
        CitationIndex { by_year }
    }

    /// Top sets for each requested year, computed in one ascending sweep.
    fn top_sets(&self, years: &BTreeSet<i32>, n_top: usize) -> BTreeMap<i32, Vec<String>> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut out = BTreeMap::new();
        let mut pending = self.by_year.iter().peekable();
        for &year in years {
            while let Some((_, ids)) = pending.next_if(|(y, _)| **y <= year) {
                for id in ids {
                    *counts.entry(id).or_default() += 1;
                }
            }
            let set = rank(counts.iter().map(|(k, v)| (*k, *v)), n_top)
                .into_iter()
                .map(|(id, _)| id)
                .collect();
            out.insert(year, set);
        }
        out
    }
}

/// Ids of every case inside some judge's early-career window.
pub fn window_case_ids(dataset: &Dataset, fraction: f64) -> Result<HashSet<String>> {
    let mut out = HashSet::new();
    for judge in dataset.active_judges() {
        let w = early_career_window(dataset, judge, fraction)?;
        out.extend(w.cases.iter().map(|c| c.case_id.clone()));
    }
    Ok(out)
}

pub fn build_citation_matrix(dataset: &Dataset, config: &CitationConfig) -> Result<CitationMatrix> {
    let judges: Vec<String> = dataset.active_judges().map(String::from).collect();
    let windows = judges
        .iter()
        .map(|j| early_career_window(dataset, j, config.fraction))
        .collect::<Result<Vec<_>>>()?;

    let global_year = dataset.cases().iter().map(|c| c.year()).max().unwrap_or(0);
    let reference_year = |w: &EarlyWindow<'_>| match config.reference {
        ReferenceMode::PerJudge => w.end_year - 1,
        ReferenceMode::Global => global_year,
    };
    let years: BTreeSet<i32> = windows.iter().map(reference_year).collect();
    let top = CitationIndex::new(dataset).top_sets(&years, config.n_top);

    let rows: Vec<(BTreeMap<String, u64>, WindowMeta)> = par::map_range(judges.len(), |i| {
        let judge = &judges[i];
        let w = &windows[i];
        let ref_year = reference_year(w);
        let reference: HashSet<&str> = top[&ref_year].iter().map(String::as_str).collect();
        let own: HashSet<&str> = if config.exclude_self_citations {
            dataset.case_ids_of(judge)
        } else {
            HashSet::new()
        };
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for case in &w.cases {
            for cited in &case.citations {
                if reference.contains(cited.as_str()) && !own.contains(cited.as_str()) {
                    *counts.entry(cited.clone()).or_default() += 1;
                }
            }
        }
        let total: u64 = counts.values().sum();
        let meta = WindowMeta {
            judge_id: judge.clone(),
            window_cases: w.cases.len(),
            window_end_year: w.end_year,
            reference_year: ref_year,
            reference_size: reference.len(),
            in_set_citations: total,
            zero_row: total == 0,
        };
        (counts, meta)
    });

    // Columns: union over judges of their reference sets.
    let columns: BTreeSet<&str> = windows
        .iter()
        .flat_map(|w| top[&reference_year(w)].iter().map(String::as_str))
        .collect();
    let reference_cases: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
    let col_index: HashMap<&str, usize> = reference_cases
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut values = DMatrix::zeros(judges.len(), reference_cases.len());
    let mut window_meta = Vec::with_capacity(judges.len());
    for (r, (counts, meta)) in rows.into_iter().enumerate() {
        let total = meta.in_set_citations as f64;
        for (id, n) in counts {
            values[(r, col_index[id.as_str()])] = n as f64 / total;
        }
        window_meta.push(meta);
    }
    Ok(CitationMatrix {
        judges,
        reference_cases,
        values,
        window_meta,
    })
}

impl CitationMatrix {
    pub fn zero_rows(&self) -> Vec<&str> {
        self.window_meta
            .iter()
            .filter(|m| m.zero_row)
            .map(|m| m.judge_id.as_str())
            .collect()
    }

    /// Sparse triplets plus row and column index files.
    pub fn write(&self, triplets: &Path, rows: &Path, cols: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(triplets)?;
        w.write_record(["judge_id", "case_id", "value"])?;
        for (r, judge) in self.judges.iter().enumerate() {
            for (c, case) in self.reference_cases.iter().enumerate() {
                let v = self.values[(r, c)];
                if v != 0.0 {
                    w.write_record([judge.as_str(), case.as_str(), &v.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(triplets, e))?;

        let mut w = csv::Writer::from_path(rows)?;
        w.write_record([
            "row",
            "judge_id",
            "window_cases",
            "window_end_year",
            "reference_year",
            "reference_size",
            "in_set_citations",
            "zero_row",
        ])?;
        for (i, m) in self.window_meta.iter().enumerate() {
            w.write_record([
                i.to_string(),
                m.judge_id.clone(),
                m.window_cases.to_string(),
                m.window_end_year.to_string(),
                m.reference_year.to_string(),
                m.reference_size.to_string(),
                m.in_set_citations.to_string(),
                (m.zero_row as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(rows, e))?;

        let mut f = BufWriter::new(File::create(cols).map_err(|e| Error::io(cols, e))?);
        writeln!(f, "col,case_id").map_err(|e| Error::io(cols, e))?;
        for (i, c) in self.reference_cases.iter().enumerate() {
            writeln!(f, "{i},{c}").map_err(|e| Error::io(cols, e))?;
        }
        f.flush().map_err(|e| Error::io(cols, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CaseType, Circuit, JudgeProfile, Outcome};
    use chrono::NaiveDate;

    fn judge(id: &str) -> JudgeProfile {
        JudgeProfile {
            judge_id: id.into(),
            gender_male: true,
            party_republican: false,
            appointment_date: NaiveDate::from_ymd_opt(1960, 1, 1).unwrap(),
            promotion_date: None,
        }
    }

    fn case(id: &str, judge: &str, year: i32, day: u32, cites: &[&str]) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            judge_id: judge.into(),
            decision_date: NaiveDate::from_ymd_opt(year, 1, day).unwrap(),
            circuit: Circuit::First,
            case_type: CaseType::Other,
            outcome: Outcome::LOST,
            entity_label: None,
            citations: cites.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn window_sizes() {
        assert_eq!(window_size(100, 0.10), 10);
        assert_eq!(window_size(7, 0.10), 1);
        assert_eq!(window_size(70, 0.10), 7);
        assert_eq!(window_size(100, 0.20), 20);
        assert_eq!(window_size(1, 0.10), 1);
    }

    #[test]
    fn window_takes_earliest_cases() {
        let cases: Vec<_> = (0..100)
            .map(|i| case(&format!("c{i:03}"), "j", 1970 + i / 10, 1 + (i % 10) as u32, &[]))
            .collect();
        let ds = Dataset::new(cases, vec![judge("j")], Default::default()).unwrap();
        let w = early_career_window(&ds, "j", 0.10).unwrap();
        assert_eq!(w.cases.len(), 10);
        assert_eq!(w.end_year, 1970);
        assert!(early_career_window(&ds, "nobody", 0.1).is_err());
    }

    #[test]
    fn top_cited_ranks_and_breaks_ties() {
        let ds = Dataset::new(
            vec![
                case("x1", "j", 1975, 1, &["A", "A", "B", "C", "B"]),
                case("x2", "j", 1979, 1, &["A", "A", "A", "B"]),
                case("x3", "j", 1985, 1, &["C", "C", "C", "C", "C"]),
            ],
            vec![judge("j")],
            Default::default(),
        )
        .unwrap();
        let top = top_cited(&ds, 1979, 2).unwrap();
        assert_eq!(top, vec![("A".into(), 5), ("B".into(), 3)]);
        assert!(top_cited(&ds, 1970, 2).is_err());
    }

    #[test]
    fn rows_are_normalized_counts() {
        // Judge "a": window is the first case (ceil(0.1 * 2) = 1) decided 1981,
        // so the reference year is 1980.
        let ds = Dataset::new(
            vec![
                case("p0", "b", 1980, 1, &["A", "B", "C"]),
                case("a1", "a", 1981, 1, &["A", "A", "B", "Z"]),
                case("a2", "a", 1990, 1, &["C"]),
                case("b2", "b", 1985, 1, &[]),
            ],
            vec![judge("a"), judge("b")],
            Default::default(),
        )
        .unwrap();
        let m = build_citation_matrix(&ds, &CitationConfig::default()).unwrap();
        let a = m.judges.iter().position(|j| j == "a").unwrap();
        let col = |id: &str| m.reference_cases.iter().position(|c| c == id).unwrap();
        assert!((m.values[(a, col("A"))] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.values[(a, col("B"))] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.values[(a, col("C"))], 0.0);
        // Judge "b" cites before any citation history exists for 1979.
        let b = m.judges.iter().position(|j| j == "b").unwrap();
        assert!(m.window_meta[b].zero_row);
        assert_eq!(m.zero_rows(), vec!["b"]);
        assert!(m.values.row(b).iter().all(|v| *v == 0.0));
    }
}
