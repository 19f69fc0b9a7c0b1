//! Importance vectors, smoothing and binding-region hit rates, first on a
//! hand-made example, then over a dataset with an untrained model.

use tcrlab::blocks::BlockConfig;
use tcrlab::data::{generate_synthetic, SynthConfig};
use tcrlab::losses::LabelSpaces;
use tcrlab::xai::{dataset_brhr, hit_rate, smooth, ExplainConfig};
use tcrlab::zoo::{ArchitectureSpec, EpitopeQueries, ModelGraph};

fn main() -> tcrlab::Result<()> {
    let importance = [0.1, 0.9, 0.8, 0.1, 0.0, 0.2, 0.1, 0.0];
    let distances = [
        Some(9.0),
        Some(3.1),
        Some(3.5),
        Some(8.0),
        None,
        Some(12.0),
        Some(7.0),
        Some(9.5),
    ];
    let smoothed = smooth(&importance);
    println!("smoothed {smoothed:.3?}");
    let (rate, m) = hit_rate(&smoothed, &distances, 0.25)?;
    println!("top-{m} hit rate {rate}");

    let ds = generate_synthetic(
        &SynthConfig {
            n: 40,
            ..Default::default()
        },
        2,
    )?;
    let spec = ArchitectureSpec::egm2(EpitopeQueries::Enriched)
        .with_block(BlockConfig {
            layers: 1,
            hidden: 16,
            ..Default::default()
        })
        .fitted_to(&ds.records);
    let model = ModelGraph::build(spec, LabelSpaces::from_records(&ds.records), 0)?;
    let toks = model.tokenize(&ds.records)?;
    let gt = ds
        .ground_truth
        .into_iter()
        .map(|g| (g.record_id.clone(), g))
        .collect();
    // an untrained model rarely clears p_bind > 0.5, so score every record
    let cfg = ExplainConfig {
        t_dec: 0.0,
        ..Default::default()
    };
    let table = dataset_brhr(&model, &toks, &gt, None, &cfg)?;
    println!("\nmodality    partner     mean_brhr  n");
    for c in &table.cells {
        println!(
            "{:<11} {:<11} {:.3}      {}",
            c.modality.name(),
            c.partner.name(),
            c.mean_brhr,
            c.n_records
        );
    }
    for r in table
        .regions
        .iter()
        .filter(|r| r.key == tcrlab::data::Modality::TcrB)
        .take(4)
    {
        println!(
            "{}->{} {:?}: pre {:.4} post {:.4}",
            r.query, r.key, r.region, r.pre_smoothing, r.post_smoothing
        );
    }
    Ok(())
}
