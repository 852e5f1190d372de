//! Synthetic courts with known latent parameters, and power studies over them.

mod court;
mod power;

pub use court::{simulate_court, AssignmentMode, BiasPlan, CourtConfig, GroundTruth, Simulation};
pub use power::{power_study, PowerConfig, PowerPoint, PowerRow, PowerStage};
