//! Ingest a positive-only TSV export, generate shuffled negatives and cut
//! stratified folds.
//!
//! cargo run --example ingest_and_split -- path/to/export.tsv

use std::collections::BTreeMap;
use std::path::PathBuf;

use tcrlab::data::{ingest_tsv, kfold_split, sample_negatives, Label, SchemaConfig};

const DEMO: &str = "\
record_id\tcdr3b\tepitope\tmhc_class
r1\tCASSIRSSYEQYF\tGILGFVFTL\tI
r2\tCASSLAPGATNEKLFF\tGILGFVFTL\tI
r3\tCASSQDRDTQYF\tNLVPMVATV\tI
r4\tCASRPGLAGGRPEQYF\tNLVPMVATV\tI
r5\tCASSPTSGGQETQYF\tELAGIGILTV\tI
r6\tCASSLGQAYEQYF\tELAGIGILTV\tI
";

fn main() -> tcrlab::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("tcrlab_demo.tsv");
            std::fs::write(&p, DEMO)?;
            p
        }
    };
    let schema = SchemaConfig {
        default_label: Some(Label::Binder),
        ..Default::default()
    };
    let (positives, report) = ingest_tsv(&path, &schema)?;
    println!(
        "read {} rows, kept {}, dropped {}",
        report.rows_read,
        report.records,
        report.dropped.len()
    );
    let negatives = sample_negatives(&positives, 7)?;
    for w in &negatives.warnings {
        println!("warning: {w}");
    }
    let mut all = positives.clone();
    all.extend(negatives.records.iter().cloned());
    println!(
        "{} positives + {} negatives",
        positives.len(),
        negatives.records.len()
    );
    for p in negatives.provenance.iter().take(3) {
        println!(
            "  {} = pMHC of {} with TCR of {}",
            p.record_id, p.pmhc_source, p.tcr_donor
        );
    }
    for fold in kfold_split(&all, 2, 0)? {
        let mut labels: BTreeMap<bool, usize> = BTreeMap::new();
        for &i in &fold.validation {
            *labels.entry(all[i].label.is_binder()).or_default() += 1;
        }
        println!(
            "fold {}: {} train / {} validation {labels:?}",
            fold.index,
            fold.train.len(),
            fold.validation.len()
        );
    }
    Ok(())
}
