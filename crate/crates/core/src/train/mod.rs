//! Training loop, checkpoint selection, cross-validation and evaluation.

mod config;
mod evaluate;
mod kfold;
mod run;

pub use config::{DataConfig, Datasets, ExperimentConfig, SelectionStrategy, SynthSource};
pub use evaluate::{evaluate, evaluate_model, EpitopeAuc, EvaluationReport};
pub use kfold::{
    fold_values, format_mean_std, mean_std, run_kfold, run_kfold_on, FoldResult, KfoldReport,
    KfoldRun,
};
pub use run::{
    initial_model, select_checkpoint, train, train_on, EpochRow, RunLedger, Selection, TrainedRun,
};
