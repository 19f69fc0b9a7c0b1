//! Two-fold cross-validation of a small EGM-1 on synthetic data.

use tcrlab::blocks::BlockConfig;
use tcrlab::data::SynthConfig;
use tcrlab::train::{run_kfold, DataConfig, ExperimentConfig, SynthSource};
use tcrlab::zoo::{ArchitectureSpec, EpitopeQueries};

fn main() -> tcrlab::Result<()> {
    let cfg = ExperimentConfig {
        arch: ArchitectureSpec::egm1(EpitopeQueries::Enriched).with_block(BlockConfig {
            layers: 1,
            hidden: 16,
            ffn_mult: 2,
            ..Default::default()
        }),
        data: DataConfig {
            synth: Some(SynthSource {
                config: SynthConfig {
                    n: 200,
                    ..Default::default()
                },
                explain_n: 20,
                ..Default::default()
            }),
            ..Default::default()
        },
        epochs: 6,
        lr: 3e-3,
        batch_size: 32,
        selection_start_epoch: 3,
        eval_every: 1,
        folds: 2,
        output_dir: std::env::temp_dir().join("tcrlab_cv"),
        ..Default::default()
    };
    let run = run_kfold(&cfg)?;
    for f in &run.report.folds {
        println!(
            "fold {}: epoch {} val auc {:?}",
            f.fold, f.epoch, f.roc_auc_val
        );
    }
    println!("ROC-AUC {}", run.report.summary.as_deref().unwrap_or("n/a"));
    Ok(())
}
