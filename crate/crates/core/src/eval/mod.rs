//! Exact frame-level ROC-AUC, per-category and per-view breakdowns, seed
//! aggregation and the dataset-setting experiment matrix.

mod auc;
mod experiment;
mod report;

pub use auc::{auc_counts, roc_auc, AucCounts};
pub use experiment::{
    experiment_matrix, run_experiment, ExperimentConfig, ExperimentInputs, ExperimentReport, ExperimentRow,
    Setting,
};
pub use report::{
    evaluate, evaluate_videos, multi_seed_average, AucReport, AucSummary, EvalOptions, Fusion, ViewSelect,
};
