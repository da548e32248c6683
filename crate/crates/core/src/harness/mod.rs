//! Experiment runner: configs, seeded multi-run execution, CSV output, summaries and
//! plot scripts.

pub mod calibrate;
pub mod config;
pub mod plots;
pub mod record;
pub mod run;
pub mod summary;

pub use config::{Algorithm, ExperimentConfig, RiskEval};
pub use record::{Row, RunMeta, RunRecord, RunTable, SessionMeta};
pub use run::{run_experiment, run_seed, write_runs};
