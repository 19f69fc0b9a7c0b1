//! Sequence data: vocabulary, records, ingestion, negatives, folds, region
//! annotation and the planted-motif generator.

pub mod ingest;
pub mod kfold;
pub mod negatives;
pub mod record;
pub mod regions;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use ingest::{ingest_tsv, IngestReport, SchemaConfig};
pub use kfold::{kfold_split, Fold};
pub use negatives::{sample_negatives, NegativeProvenance, NegativeSet};
pub use record::{read_jsonl, write_jsonl, BindingRecord, Label, MhcClass};
pub use regions::{annotate_regions, Region, RegionAnnotation, RegionSpan};
pub use synth::{
    generate_synthetic, BindingRule, DistanceGroundTruth, SynthConfig, SyntheticDataset,
};
pub use tokenize::{TokenizedModality, Tokenizer};
pub use vocab::{Modality, Vocabulary};
