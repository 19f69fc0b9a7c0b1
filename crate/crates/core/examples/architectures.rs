//! Build every architecture family and print its decoder wiring and
//! parameter count.

use tcrlab::blocks::BlockConfig;
use tcrlab::data::Modality;
use tcrlab::losses::LabelSpaces;
use tcrlab::zoo::{ArchitectureSpec, Direction, EpitopeQueries, ExtraFeatures, ModelGraph};

fn main() -> tcrlab::Result<()> {
    let block = BlockConfig::default();
    let specs = vec![
        ArchitectureSpec::enc_concat(&[Modality::Cdr3b, Modality::Epitope])?,
        ArchitectureSpec::xprobe(
            Modality::Epitope,
            Modality::Cdr3b,
            Direction::AToB,
            ExtraFeatures::Query,
        )?,
        ArchitectureSpec::egm0(),
        ArchitectureSpec::egm1(EpitopeQueries::Enriched),
        ArchitectureSpec::egm2(EpitopeQueries::Enriched),
    ];
    for spec in specs {
        let spec = spec
            .with_block(block)
            .with_max_len(Modality::TcrA, 120)
            .with_max_len(Modality::TcrB, 120)
            .with_max_len(Modality::Epitope, 16)
            .with_max_len(Modality::Cdr3b, 24);
        let model = ModelGraph::build(spec, LabelSpaces::default(), 0)?;
        println!(
            "{:?}: {} parameters",
            model.spec.arch_id,
            model.num_parameters()
        );
        for w in &model.spec.wiring {
            println!(
                "  {}: {} attends to [{}] -> {}",
                w.name,
                w.query,
                w.keys.join(", "),
                w.output
            );
        }
        println!(
            "  classifier reads [{}]",
            model.spec.classifier_inputs.join(", ")
        );
    }
    Ok(())
}
