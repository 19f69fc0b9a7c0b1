//! Train EGM-2 on planted-motif data and watch the validation AUC and
//! explanation quality move.
//!
//! cargo run --release --example train_egm2_synthetic -- [n] [epochs] [hidden] [lr] [eval_every] [mlm_dec 0|1]

use std::time::Instant;

use tcrlab::blocks::BlockConfig;
use tcrlab::data::SynthConfig;
use tcrlab::train::{train_on, DataConfig, Datasets, ExperimentConfig, SynthSource};
use tcrlab::xai::{explanation_quality, ExplainConfig};
use tcrlab::zoo::{ArchitectureSpec, EpitopeQueries, LossHead};

fn main() -> tcrlab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|a| a.parse().ok()).unwrap_or(default);
    let n = arg(0, 1000.0) as usize;
    let epochs = arg(1, 20.0) as usize;
    let hidden = arg(2, 16.0) as usize;
    let lr = arg(3, 3e-3);
    let eval_every = arg(4, (epochs / 4).max(1) as f64) as usize;
    let mut heads = vec![LossHead::Binder, LossHead::MlmEnc];
    if arg(5, 0.0) != 0.0 {
        heads.push(LossHead::MlmDec);
    }
    let synth = SynthSource {
        config: SynthConfig {
            n,
            ..Default::default()
        },
        seed: 7,
        validation_fraction: 0.2,
        explain_n: 100,
    };
    let arch = ArchitectureSpec::egm2(EpitopeQueries::Enriched)
        .with_block(BlockConfig {
            layers: 1,
            hidden,
            heads: 1,
            ffn_mult: 2,
            dropout: 0.0,
        })
        .with_loss_heads(&heads);
    let cfg = ExperimentConfig {
        arch,
        data: DataConfig {
            synth: Some(synth.clone()),
            ..Default::default()
        },
        epochs,
        lr,
        batch_size: 32,
        selection_start_epoch: epochs / 2,
        eval_every,
        output_dir: std::env::temp_dir().join("tcrlab_egm2_synthetic"),
        ..Default::default()
    };
    let data = Datasets::synthetic(&synth)?;
    let start = Instant::now();
    let run = train_on(&cfg, &data, None, &cfg.output_dir)?;
    for r in &run.ledger.rows {
        println!(
            "epoch {:3}  loss {:.4}  auc_train {:.3}  auc_val {:.3}  quality {}",
            r.epoch,
            r.training_loss(),
            r.roc_auc_train.unwrap_or(f64::NAN),
            r.roc_auc_val.unwrap_or(f64::NAN),
            r.explanation_quality
                .map_or("-".to_string(), |q| format!("{q:.3}")),
        );
    }
    let toks = run.model.tokenize(&data.explain)?;
    let q = explanation_quality(
        &run.model,
        &toks,
        &data.ground_truth,
        &ExplainConfig::default(),
    )?;
    for ((query, key), v) in &q.cells {
        println!(
            "{query}->{key}: {}",
            v.map_or("-".to_string(), |v| format!("{v:.3}"))
        );
    }
    println!(
        "{:.1}s for {epochs} epochs ({:.2}s/epoch)",
        start.elapsed().as_secs_f64(),
        start.elapsed().as_secs_f64() / epochs as f64
    );
    Ok(())
}
