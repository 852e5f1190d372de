//! Prediction quality: confidence bins, per-judge predictability, attributions.

mod biographics;
mod bins;
mod shapley;
mod significance;

pub use biographics::{
    case_level_attributes, explain_biographics, Attribute, AttributeFit, AttributeKind, FitType,
};
pub use bins::{bin_accuracy, confidence_bin, BinStat, CasePrediction, PredictionEval, BIN_EDGES};
pub use shapley::{sample_background, shapley_importance, ShapleyConfig, ShapleyMethod, ShapleyReport};
pub use significance::{
    ci_bounds, judge_significance, CiBound, JudgeFlag, JudgeSignificance, JudgeSummary, JudgeTestRow,
    Repetition, SignificanceConfig, SignificanceSummary,
};
