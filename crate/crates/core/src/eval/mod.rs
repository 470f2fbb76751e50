//! Datasets, answer metrics, reports and experiment drivers.

pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use crate::config::{Ablation, DatasetFormat, RunConfig, RunMode};
pub use dataset::{load_dataset, sample, Dataset, QAInstance};
pub use experiment::{run_experiment, run_questions, SweepParam, Workspace};
pub use metrics::{exact_match, normalize_answer, token_f1, TokenScores};
pub use report::{evaluate_run, render_table, MetricsReport};
