use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{BindingRecord, DistanceGroundTruth};
use crate::error::{Error, Result};
use crate::losses::roc_auc;
use crate::xai::{dataset_brhr, BrhrTable, ExplainConfig};
use crate::zoo::ModelGraph;

/// Per-epitope AUC; `None` where the epitope's records hold one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpitopeAuc {
    pub epitope: String,
    pub n_records: usize,
    pub roc_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub n_records: usize,
    pub roc_auc: f64,
    pub per_epitope: Vec<EpitopeAuc>,
    pub predictions: Vec<(String, f64)>,
    pub brhr: Option<BrhrTable>,
}

/// Scores `records` with a loaded model; adds the full BRHR table when
/// ground truth is supplied.
pub fn evaluate_model(
    model: &ModelGraph,
    records: &[BindingRecord],
    ground_truth: Option<&BTreeMap<String, DistanceGroundTruth>>,
    cfg: &ExplainConfig,
) -> Result<EvaluationReport> {
    let toks = model.tokenize(records).map_err(|e| match e {
        Error::Inference(msg) | Error::Ingest(msg) => Error::Inference(format!(
            "data does not match the checkpoint's modalities [{}]: {msg}",
            model
                .spec
                .modalities
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", ")
        )),
        other => other,
    })?;
    let preds = model.infer(&toks, cfg.chunk.max(1), false)?;
    let scores: Vec<(f64, bool)> = preds
        .iter()
        .map(|p| (p.p_bind, p.label.is_binder()))
        .collect();
    let roc_auc_all = roc_auc(&scores)?;
    let mut groups: BTreeMap<&str, Vec<(f64, bool)>> = BTreeMap::new();
    for (r, s) in records.iter().zip(&scores) {
        groups.entry(r.epitope.as_str()).or_default().push(*s);
    }
    let per_epitope = groups
        .into_iter()
        .map(|(e, s)| EpitopeAuc {
            epitope: e.to_string(),
            n_records: s.len(),
            roc_auc: roc_auc(&s).ok(),
        })
        .collect();
    let brhr = ground_truth
        .map(|gt| dataset_brhr(model, &toks, gt, None, cfg))
        .transpose()?;
    Ok(EvaluationReport {
        n_records: records.len(),
        roc_auc: roc_auc_all,
        per_epitope,
        predictions: preds.into_iter().map(|p| (p.record_id, p.p_bind)).collect(),
        brhr,
    })
}

pub fn evaluate(
    checkpoint: &Path,
    records: &[BindingRecord],
    ground_truth: Option<&BTreeMap<String, DistanceGroundTruth>>,
    cfg: &ExplainConfig,
) -> Result<EvaluationReport> {
    let (model, _) = ModelGraph::load(checkpoint)?;
    evaluate_model(&model, records, ground_truth, cfg)
}
