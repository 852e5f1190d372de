//! Auditing adjudication records for systematic idiosyncrasies.
//!
//! The crate covers the full analysis chain:
//!
//! * [`data`]: case and judge records, ingestion, grouping and causal features.
//! * [`stats`]: exact binomial tests, multiple-testing corrections, QQ diagnostics.
//! * [`assignment`]: the random-assignment audit over (judge, circuit, decade, label).
//! * [`deviation`]: per-judge career win-rate tests against a binomial null.
//! * [`embedding`]: early-career citation matrices and a regularized NMF solver.
//! * [`predict`]: ridge logistic regression and gradient-boosted trees.
//! * [`evaluation`]: confidence-bin accuracy, per-judge predictability, Shapley values.
//! * [`synth`]: synthetic courts with known ground truth and power studies.
//! * [`pipeline`]: the per-case-type training chain shared by the CLI and tests.
//!
//! Parallel execution goes through [`par`]; disabling the `parallel` feature
//! runs every loop sequentially with identical results.

pub mod assignment;
pub mod data;
pub mod deviation;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod par;
pub mod pipeline;
pub mod predict;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
