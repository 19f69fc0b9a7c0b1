//! Save a model, reload it from the stamped spec and compare outputs.

use tcrlab::blocks::BlockConfig;
use tcrlab::data::{generate_synthetic, SynthConfig};
use tcrlab::losses::LabelSpaces;
use tcrlab::zoo::{ArchitectureSpec, ModelGraph};

fn main() -> tcrlab::Result<()> {
    let ds = generate_synthetic(
        &SynthConfig {
            n: 16,
            ..Default::default()
        },
        4,
    )?;
    let spec = ArchitectureSpec::egm0()
        .with_block(BlockConfig {
            hidden: 16,
            ..Default::default()
        })
        .fitted_to(&ds.records);
    let model = ModelGraph::build(spec, LabelSpaces::from_records(&ds.records), 9)?;
    let path = std::env::temp_dir().join("tcrlab_roundtrip.ckpt");
    model.save(&path, Some(0), serde_json::json!({ "note": "untrained" }))?;
    let (loaded, manifest) = ModelGraph::load(&path)?;
    println!(
        "manifest: arch {} with {} parameters",
        manifest["arch_id"], manifest["num_parameters"]
    );
    let toks = model.tokenize(&ds.records)?;
    let a = model.infer(&toks, 8, false)?;
    let b = loaded.infer(&toks, 8, false)?;
    let same = a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.p_bind.to_bits() == y.p_bind.to_bits());
    println!("bitwise identical predictions: {same}");
    Ok(())
}
