//! Loss-based versus explanation-based checkpoint selection on a ledger.

use std::path::PathBuf;

use tcrlab::train::{select_checkpoint, EpochRow, RunLedger, SelectionStrategy};

fn row(epoch: usize, loss: f64, quality: f64) -> EpochRow {
    EpochRow {
        epoch,
        fold: None,
        loss: [("total".to_string(), loss)].into_iter().collect(),
        roc_auc_train: None,
        roc_auc_val: None,
        roc_auc_train_eval: None,
        explanation_quality: Some(quality),
        checkpoint: Some(PathBuf::from(format!("checkpoints/epoch_{epoch:04}.ckpt"))),
    }
}

fn main() -> tcrlab::Result<()> {
    let ledger = RunLedger {
        selection_start_epoch: 300,
        rows: vec![
            row(300, 0.42, 0.31),
            row(310, 0.37, 0.44),
            row(320, 0.35, 0.39),
            row(330, 0.36, 0.44),
        ],
        ..Default::default()
    };
    for strategy in [
        SelectionStrategy::LossBased,
        SelectionStrategy::ExplanationBased,
    ] {
        let s = select_checkpoint(&ledger, strategy)?;
        println!(
            "{strategy:?}: epoch {} ({}) score {}",
            s.epoch,
            s.checkpoint.display(),
            s.score
        );
    }
    Ok(())
}
