//! Early-career citation records and their non-negative factorization.

mod citation;
mod nmf;

pub use citation::{
    build_citation_matrix, early_career_window, top_cited, window_case_ids, window_size, CitationConfig, CitationMatrix,
    EarlyWindow, ReferenceMode, WindowMeta,
};
pub use nmf::{
    dimension_sweep, nmf_fit, nmf_objective, reconstruction_error, NmfConfig, NmfModel, NmfSolver,
    SweepPoint,
};
