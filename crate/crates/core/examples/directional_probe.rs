//! Does cross-attention a->b keep information from b only? Train the probe
//! on data whose label depends on one side and compare validation AUC. On
//! planted motifs the query still leaks through its choice of attention
//! weights, so the epitope-only case also separates.
//!
//! cargo run --release --example directional_probe -- [epochs] [n]

use tcrlab::blocks::BlockConfig;
use tcrlab::data::{BindingRule, Modality, SynthConfig};
use tcrlab::train::{train_on, DataConfig, Datasets, ExperimentConfig, SynthSource};
use tcrlab::zoo::{ArchitectureSpec, Direction, ExtraFeatures};

fn main() -> tcrlab::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let epochs = args.first().copied().unwrap_or(30);
    let n = args.get(1).copied().unwrap_or(2000);
    let (a, b) = (Modality::Epitope, Modality::Cdr3b);
    let cases = [
        (BindingRule::Cdr3bOnly, ExtraFeatures::None),
        (BindingRule::EpitopeOnly, ExtraFeatures::None),
        (BindingRule::EpitopeOnly, ExtraFeatures::Query),
    ];
    for (rule, extra) in cases {
        let synth = SynthSource {
            config: SynthConfig {
                n,
                rule,
                ..Default::default()
            },
            seed: 11,
            validation_fraction: 0.2,
            explain_n: 0,
        };
        let arch =
            ArchitectureSpec::xprobe(a, b, Direction::AToB, extra)?.with_block(BlockConfig {
                layers: 1,
                hidden: 16,
                heads: 1,
                ffn_mult: 2,
                dropout: 0.0,
            });
        let cfg = ExperimentConfig {
            arch,
            data: DataConfig {
                synth: Some(synth.clone()),
                ..Default::default()
            },
            epochs,
            lr: 3e-3,
            batch_size: 32,
            selection_start_epoch: epochs - 1,
            eval_every: 1,
            output_dir: std::env::temp_dir().join("tcrlab_probe"),
            ..Default::default()
        };
        let data = Datasets::synthetic(&synth)?;
        let start = std::time::Instant::now();
        let run = train_on(&cfg, &data, None, &cfg.output_dir)?;
        let best = run
            .ledger
            .rows
            .iter()
            .filter_map(|r| r.roc_auc_val)
            .fold(f64::NAN, f64::max);
        let last = run
            .ledger
            .rows
            .last()
            .and_then(|r| r.roc_auc_val)
            .unwrap_or(f64::NAN);
        println!(
            "{rule:<13} {a}->{b} extra={extra:?}: val auc last {last:.3}, best {best:.3} ({:.0}s)",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
