//! Causal per-case features. Every history-derived quantity only sees cases
//! decided strictly more than [`HISTORY_GUARD_DAYS`] before the target.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::model::{years_between, CaseRecord, CaseType, Circuit, Dataset};
use crate::error::{Error, Result};

pub const HISTORY_GUARD_DAYS: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Decision date as a fractional calendar year.
    pub decision_date: f64,
    pub experience: f64,
    /// `None` when the judge has no cases before the cutoff.
    pub win_rate: Option<f64>,
    pub workload: Option<f64>,
    pub gender_male: f64,
    pub party_republican: f64,
    pub promoted: f64,
    /// One column per circuit except the ninth, in [`Circuit::indicator_circuits`] order.
    pub circuit_onehot: [f64; 12],
    pub case_type: CaseType,
}

impl FeatureVector {
    pub const BIOGRAPHIC_NAMES: [&'static str; 7] = [
        "decision_date",
        "experience",
        "win_rate",
        "workload",
        "gender_male",
        "party_republican",
        "promoted",
    ];

    pub fn circuit_names() -> Vec<String> {
        Circuit::indicator_circuits()
            .map(|c| format!("circuit_{}", c.as_str()))
            .collect()
    }

    /// Biographic features followed by circuit indicators, or `None` if any is missing.
    pub fn biographic_row(&self) -> Option<Vec<f64>> {
        let mut row = vec![
            self.decision_date,
            self.experience,
            self.win_rate?,
            self.workload?,
            self.gender_male,
            self.party_republican,
            self.promoted,
        ];
        row.extend_from_slice(&self.circuit_onehot);
        Some(row)
    }

    pub fn has_history(&self) -> bool {
        self.win_rate.is_some() && self.workload.is_some()
    }
}

pub fn fractional_year(date: NaiveDate) -> f64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    1970.0 + years_between(epoch, date)
}

pub fn circuit_onehot(circuit: Circuit) -> [f64; 12] {
    let mut out = [0.0; 12];
    if let Some(pos) = Circuit::indicator_circuits().position(|c| c == circuit) {
        out[pos] = 1.0;
    }
    out
}

/// The last date whose cases may inform a decision on `decision_date`.
/// History cases must satisfy `date < cutoff`.
pub fn history_cutoff(decision_date: NaiveDate) -> NaiveDate {
    decision_date - Duration::days(HISTORY_GUARD_DAYS)
}

/// Feature vector for `case` using only information older than the guard.
pub fn compute_features(dataset: &Dataset, case: &CaseRecord) -> Result<FeatureVector> {
    let profile = dataset
        .judge(&case.judge_id)
        .ok_or_else(|| Error::UnknownJudge(case.judge_id.clone()))?;
    if dataset.case(&case.case_id).is_none() {
        return Err(Error::invalid(format!(
            "case `{}` is not part of the dataset",
            case.case_id
        )));
    }
    let cutoff = history_cutoff(case.decision_date);
    let (mut n, mut wins) = (0usize, 0usize);
    for prior in dataset.cases_of(&case.judge_id) {
        if prior.decision_date >= cutoff {
            break;
        }
        n += 1;
        wins += prior.won() as usize;
    }
    let experience = years_between(profile.appointment_date, cutoff);
    let (win_rate, workload) = if n == 0 {
        (None, None)
    } else {
        let rate = wins as f64 / n as f64;
        let load = (experience > 0.0).then(|| n as f64 / experience);
        (Some(rate), load)
    };
    Ok(FeatureVector {
        decision_date: fractional_year(case.decision_date),
        experience,
        win_rate,
        workload,
        gender_male: profile.gender_male as u8 as f64,
        party_republican: profile.party_republican as u8 as f64,
        promoted: profile.promoted_at(cutoff) as u8 as f64,
        circuit_onehot: circuit_onehot(case.circuit),
        case_type: case.case_type,
    })
}

/// Features for every case, in [`Dataset::cases`] order.
///
/// Equivalent to calling [`compute_features`] per case but linear in each
/// judge's case count after sorting.
pub fn compute_all_features(dataset: &Dataset) -> Vec<FeatureVector> {
    let cases = dataset.cases();
    let mut out: Vec<Option<FeatureVector>> = vec![None; cases.len()];
    for judge_id in dataset.active_judges() {
        let profile = dataset.judge(judge_id).expect("validated dataset");
        let idx = dataset.case_indices_of(judge_id);
        let dates: Vec<NaiveDate> = idx.iter().map(|&i| cases[i].decision_date).collect();
        let mut prefix_wins = Vec::with_capacity(idx.len() + 1);
        prefix_wins.push(0usize);
        for &i in idx {
            prefix_wins.push(prefix_wins.last().unwrap() + cases[i].won() as usize);
        }
        for &i in idx {
            let case = &cases[i];
            let cutoff = history_cutoff(case.decision_date);
            let n = dates.partition_point(|d| *d < cutoff);
            let experience = years_between(profile.appointment_date, cutoff);
            let (win_rate, workload) = if n == 0 {
                (None, None)
            } else {
                let rate = prefix_wins[n] as f64 / n as f64;
                (Some(rate), (experience > 0.0).then(|| n as f64 / experience))
            };
            out[i] = Some(FeatureVector {
                decision_date: fractional_year(case.decision_date),
                experience,
                win_rate,
                workload,
                gender_male: profile.gender_male as u8 as f64,
                party_republican: profile.party_republican as u8 as f64,
                promoted: profile.promoted_at(cutoff) as u8 as f64,
                circuit_onehot: circuit_onehot(case.circuit),
                case_type: case.case_type,
            });
        }
    }
    out.into_iter().map(|f| f.expect("every case has a judge")).collect()
}
