//! Run inference with attention capture and export one record's trace.

use tcrlab::blocks::BlockConfig;
use tcrlab::data::{generate_synthetic, SynthConfig};
use tcrlab::losses::LabelSpaces;
use tcrlab::zoo::{ArchitectureSpec, EpitopeQueries, ModelGraph};

fn main() -> tcrlab::Result<()> {
    let ds = generate_synthetic(
        &SynthConfig {
            n: 8,
            ..Default::default()
        },
        3,
    )?;
    let spec = ArchitectureSpec::egm2(EpitopeQueries::Enriched)
        .with_block(BlockConfig {
            hidden: 16,
            ..Default::default()
        })
        .fitted_to(&ds.records);
    let model = ModelGraph::build(spec, LabelSpaces::from_records(&ds.records), 0)?;
    let toks = model.tokenize(&ds.records)?;
    let preds = model.infer(&toks, 4, true)?;
    let p = &preds[0];
    let trace = p.trace.as_ref().expect("traces requested");
    println!("{} p_bind={:.3}", p.record_id, p.p_bind);
    for (q, k) in trace.pairs() {
        let blocks = trace.matching(q, k).count();
        println!("  {q} -> {k}: {blocks} block(s)");
    }
    let path = std::env::temp_dir().join("tcrlab_trace.json");
    std::fs::write(&path, serde_json::to_string_pretty(&trace.to_json())?)?;
    println!("trace written to {}", path.display());
    Ok(())
}
