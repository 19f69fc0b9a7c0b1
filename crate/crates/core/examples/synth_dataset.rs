//! Generate planted-motif data for each binding rule and show what a
//! record and its distance ground truth look like.

use tcrlab::data::{generate_synthetic, BindingRule, Modality, SynthConfig};

fn main() -> tcrlab::Result<()> {
    for rule in [
        BindingRule::EpitopeOnly,
        BindingRule::Cdr3bOnly,
        BindingRule::Joint,
    ] {
        let ds = generate_synthetic(
            &SynthConfig {
                n: 400,
                rule,
                ..Default::default()
            },
            1,
        )?;
        let binders = ds.records.iter().filter(|r| r.label.is_binder()).count();
        println!("{rule}: {} records, {binders} binders", ds.records.len());
    }
    let ds = generate_synthetic(&SynthConfig::default(), 1)?;
    let r = &ds.records[0];
    println!("\n{} label={:?}", r.record_id, r.label);
    println!("  epitope {}", r.epitope);
    println!("  cdr3b   {}", r.cdr3b.as_deref().unwrap_or("-"));
    println!("  tcr_b   {}", r.tcr_b.as_deref().unwrap_or("-"));
    let gt = &ds.ground_truth[0];
    if let Some(d) = gt.get(Modality::Epitope, Modality::TcrB) {
        let shown: Vec<String> = d
            .iter()
            .map(|x| x.map_or("NA".into(), |x| format!("{x:.1}")))
            .collect();
        println!("  epitope distances to TCR_B: {}", shown.join(" "));
    }
    Ok(())
}
