//! Config-driven studies: presets, dataset preparation, runs that write
//! per-round telemetry, and a report that aggregates repeats.
//!
//! A run directory `<out>/<point>/run_<k>/` holds `manifest.json`,
//! `rounds.csv`, `sol.csv`, `divergence.csv`, `scatter.csv`,
//! `layerwise.csv` and `skipped.csv`.

mod build;
mod config;
mod report;
mod run;

pub use build::{prepare, PreparedRun};
pub use config::{read_document, DatasetSource, Mode, ResolvedPoint, StudyConfig, StudyPreset, SweepPoint};
pub use report::{cmd_report, mean_std, verdict, ReportSummary, Verdict};
pub use run::{
    cmd_run, cmd_run_manifest, execute, repeat_config, run_dir, write_run, RunInput, RunManifest, RunSummary, RunTelemetry,
    MANIFEST_FORMAT, MANIFEST_VERSION,
};
