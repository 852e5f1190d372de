//! Canonical data model, ingestion and time-guarded feature computation.

mod features;
mod group;
mod io;
mod model;

pub use features::{
    circuit_onehot, compute_all_features, compute_features, fractional_year, history_cutoff,
    FeatureVector, HISTORY_GUARD_DAYS,
};
pub use group::{group_cases, GroupKey, GroupKeys, Grouping};
pub use io::{
    CASE_COLUMNS, JUDGE_COLUMNS,
    load_dataset, read_cases, read_judges, write_cases, write_judges, FileFormat, RowError,
    ValidationReport,
};
pub use model::{
    decade_of, years_between, CaseRecord, CaseType, Circuit, Dataset, EntityLabel, JudgeProfile,
    Outcome, DAYS_PER_YEAR,
};
