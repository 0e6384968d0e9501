//! Config-driven experiments: one JSON file in, one JSON report out, plus
//! optional CSV plot data with a config sidecar that reproduces the run.

mod config;
mod plot;
mod runner;

pub use config::{
    EstimatorSettings, ExperimentConfig, FitSettings, Mode, RadiusGrid, RadiusUnit, Theorem, SCHEMA_VERSION,
};
pub use plot::{emit_plot_data, sidecar_path, CSV_HEADER};
pub use runner::{
    run, run_analyze, run_bound, run_estimate, run_exact, run_fit, run_verify, AnalyzeReport, BoundRow,
    BoundRunReport, BoundSet, EstimateReport, EstimateRow, ExactReport, FitReport, Provenance, RadiusPair, Report,
    TailRow, VerifyReport, VerifyRow, VerifySummary,
};
