//! Configured, seeded and reproducible experiment runs.

pub mod catalog;
pub mod config;
pub mod plotdata;
pub mod run;

pub use catalog::{build_candidate, catalog_list, CandidateSpec, CatalogEntry};
pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
pub use plotdata::{emit_plotdata, PLOT_KINDS};
pub use run::{as_printed_truncated_cdf, run, run_to_disk, RunReport, RunStatus, EXIT_ERROR};
