use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day count of one "year" in every duration computed by the crate.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Fractional years from `from` to `to` (negative if `to` precedes `from`).
pub fn years_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

/// Calendar decade, e.g. 1987 -> 1980.
pub fn decade_of(date: NaiveDate) -> i32 {
    date.year().div_euclid(10) * 10
}

/// The thirteen federal circuits. The ninth is the held-out one-hot reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Circuit {
    First,
    Second,
    Third,
    Fourth,
    Fifth,
    Sixth,
    Seventh,
    Eighth,
    Ninth,
    Tenth,
    Eleventh,
    DistrictOfColumbia,
    Federal,
}

impl Circuit {
    pub const ALL: [Circuit; 13] = [
        Circuit::First,
        Circuit::Second,
        Circuit::Third,
        Circuit::Fourth,
        Circuit::Fifth,
        Circuit::Sixth,
        Circuit::Seventh,
        Circuit::Eighth,
        Circuit::Ninth,
        Circuit::Tenth,
        Circuit::Eleventh,
        Circuit::DistrictOfColumbia,
        Circuit::Federal,
    ];

    pub const REFERENCE: Circuit = Circuit::Ninth;

    pub fn as_str(self) -> &'static str {
        match self {
            Circuit::First => "1",
            Circuit::Second => "2",
            Circuit::Third => "3",
            Circuit::Fourth => "4",
            Circuit::Fifth => "5",
            Circuit::Sixth => "6",
            Circuit::Seventh => "7",
            Circuit::Eighth => "8",
            Circuit::Ninth => "9",
            Circuit::Tenth => "10",
            Circuit::Eleventh => "11",
            Circuit::DistrictOfColumbia => "dc",
            Circuit::Federal => "federal",
        }
    }

    pub fn index(self) -> usize {
        Circuit::ALL.iter().position(|c| *c == self).unwrap()
    }

    /// Circuits that receive a one-hot column (all but the reference).
    pub fn indicator_circuits() -> impl Iterator<Item = Circuit> {
        Circuit::ALL.into_iter().filter(|c| *c != Circuit::REFERENCE)
    }
}

impl From<Circuit> for String {
    fn from(c: Circuit) -> String {
        c.as_str().to_string()
    }
}

impl TryFrom<String> for Circuit {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Circuit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let s = s.strip_prefix("circuit_").unwrap_or(&s);
        Circuit::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .or(match s {
                "d.c." | "district_of_columbia" => Some(Circuit::DistrictOfColumbia),
                "fed" => Some(Circuit::Federal),
                _ => None,
            })
            .ok_or_else(|| format!("unknown circuit `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseType {
    CivilRights,
    Contract,
    PrisonerPetitions,
    Torts,
    Labor,
    Other,
}

impl CaseType {
    pub const ALL: [CaseType; 6] = [
        CaseType::CivilRights,
        CaseType::Contract,
        CaseType::PrisonerPetitions,
        CaseType::Torts,
        CaseType::Labor,
        CaseType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseType::CivilRights => "civil_rights",
            CaseType::Contract => "contract",
            CaseType::PrisonerPetitions => "prisoner_petitions",
            CaseType::Torts => "torts",
            CaseType::Labor => "labor",
            CaseType::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        CaseType::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for CaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        CaseType::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown case type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLabel {
    Government,
    Company,
    Individual,
    Mixed,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 4] = [
        EntityLabel::Government,
        EntityLabel::Company,
        EntityLabel::Individual,
        EntityLabel::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Government => "government",
            EntityLabel::Company => "company",
            EntityLabel::Individual => "individual",
            EntityLabel::Mixed => "mixed",
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        EntityLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown entity label `{s}`"))
    }
}

/// Plaintiff outcome: `1` won, `0` lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Outcome(bool);

impl Outcome {
    pub const WON: Outcome = Outcome(true);
    pub const LOST: Outcome = Outcome(false);

    pub fn plaintiff_won(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }
}

impl TryFrom<u8> for Outcome {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Outcome::LOST),
            1 => Ok(Outcome::WON),
            other => Err(format!("outcome must be 0 or 1, got {other}")),
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        o.as_u8()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub judge_id: String,
    pub decision_date: NaiveDate,
    pub circuit: Circuit,
    pub case_type: CaseType,
    pub outcome: Outcome,
    #[serde(default)]
    pub entity_label: Option<EntityLabel>,
    #[serde(default)]
    pub citations: Vec<String>,
}

impl CaseRecord {
    pub fn decade(&self) -> i32 {
        decade_of(self.decision_date)
    }

    pub fn year(&self) -> i32 {
        self.decision_date.year()
    }

    pub fn won(&self) -> bool {
        self.outcome.plaintiff_won()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeProfile {
    pub judge_id: String,
    pub gender_male: bool,
    pub party_republican: bool,
    pub appointment_date: NaiveDate,
    #[serde(default)]
    pub promotion_date: Option<NaiveDate>,
}

impl JudgeProfile {
    pub fn promoted_at(&self, date: NaiveDate) -> bool {
        self.promotion_date.is_some_and(|p| p <= date)
    }
}

/// Validated, immutable collection of cases and judges.
///
/// Cases keep their input order; `cases_of` returns a judge's cases sorted by
/// (decision date, case id).
#[derive(Debug, Clone)]
pub struct Dataset {
    cases: Vec<CaseRecord>,
    judges: Vec<JudgeProfile>,
    pub provenance: BTreeMap<String, String>,
    judge_index: HashMap<String, usize>,
    case_index: HashMap<String, usize>,
    by_judge: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(
        cases: Vec<CaseRecord>,
        judges: Vec<JudgeProfile>,
        provenance: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut judge_index = HashMap::with_capacity(judges.len());
        for (i, j) in judges.iter().enumerate() {
            if judge_index.insert(j.judge_id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate judge_id `{}`", j.judge_id)));
            }
        }
        let mut case_index = HashMap::with_capacity(cases.len());
        let mut by_judge: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in cases.iter().enumerate() {
            if case_index.insert(c.case_id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate case_id `{}`", c.case_id)));
            }
            if !judge_index.contains_key(&c.judge_id) {
                return Err(Error::UnknownJudge(c.judge_id.clone()));
            }
            by_judge.entry(c.judge_id.clone()).or_default().push(i);
        }
        for idx in by_judge.values_mut() {
            idx.sort_by(|&a, &b| {
                (cases[a].decision_date, &cases[a].case_id)
                    .cmp(&(cases[b].decision_date, &cases[b].case_id))
            });
        }
        Ok(Dataset {
            cases,
            judges,
            provenance,
            judge_index,
            case_index,
            by_judge,
        })
    }

    pub fn cases(&self) -> &[CaseRecord] {
        &self.cases
    }

    pub fn judges(&self) -> &[JudgeProfile] {
        &self.judges
    }

    pub fn judge(&self, judge_id: &str) -> Option<&JudgeProfile> {
        self.judge_index.get(judge_id).map(|&i| &self.judges[i])
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseRecord> {
        self.case_index.get(case_id).map(|&i| &self.cases[i])
    }

    /// Indices into [`Dataset::cases`] for one judge, chronological.
    pub fn case_indices_of(&self, judge_id: &str) -> &[usize] {
        self.by_judge.get(judge_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn cases_of<'a>(&'a self, judge_id: &str) -> impl Iterator<Item = &'a CaseRecord> + 'a {
        self.case_indices_of(judge_id)
            .iter()
            .map(move |&i| &self.cases[i])
    }

    /// Judge ids with at least one case, sorted.
    pub fn active_judges(&self) -> impl Iterator<Item = &str> {
        self.by_judge.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Pooled plaintiff win rate over all cases.
    pub fn pooled_win_rate(&self) -> Option<f64> {
        if self.cases.is_empty() {
            return None;
        }
        let wins = self.cases.iter().filter(|c| c.won()).count();
        Some(wins as f64 / self.cases.len() as f64)
    }

    /// Set of case ids decided by `judge_id`.
    pub fn case_ids_of(&self, judge_id: &str) -> HashSet<&str> {
        self.cases_of(judge_id).map(|c| c.case_id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circuit_parsing_round_trips() {
        for c in Circuit::ALL {
            assert_eq!(c.as_str().parse::<Circuit>().unwrap(), c);
        }
        assert_eq!("circuit_9".parse::<Circuit>().unwrap(), Circuit::Ninth);
        assert!("13".parse::<Circuit>().is_err());
        assert_eq!(Circuit::indicator_circuits().count(), 12);
    }

    #[test]
    fn decade_floor() {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        assert_eq!(decade_of(d(1983, 5, 1)), 1980);
        assert_eq!(decade_of(d(1989, 12, 31)), 1980);
        assert_eq!(decade_of(d(1990, 1, 1)), 1990);
    }

    #[test]
    fn outcome_rejects_two() {
        assert!(Outcome::try_from(2).is_err());
        assert!(Outcome::try_from(1).unwrap().plaintiff_won());
    }
}
