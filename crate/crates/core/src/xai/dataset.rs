use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    brhr, smooth, BrhrResult, ImportanceBackend, ImportanceSide, ImportanceVector, RawAttention,
};
use crate::data::regions::{Region, RegionSpan};
use crate::data::{read_jsonl, DistanceGroundTruth, Modality};
use crate::error::{Error, Result};
use crate::zoo::{ModelGraph, Prediction, TokenizedRecord};

/// The four TCR/epitope attention directions scored for model selection.
pub const QUALITY_DIRECTIONS: [(Modality, Modality); 4] = [
    (Modality::TcrA, Modality::Epitope),
    (Modality::TcrB, Modality::Epitope),
    (Modality::Epitope, Modality::TcrA),
    (Modality::Epitope, Modality::TcrB),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub t: f64,
    /// Records with `p_bind <= t_dec` are excluded from hit rates.
    pub t_dec: f64,
    pub smooth: bool,
    pub side: ImportanceSide,
    pub chunk: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            t: 0.25,
            t_dec: 0.5,
            smooth: true,
            side: ImportanceSide::Attended,
            chunk: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrhrCell {
    pub modality: Modality,
    pub partner: Modality,
    pub t: f64,
    pub mean_brhr: f64,
    pub n_records: usize,
}

/// Mean region importance for one attention direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub query: Modality,
    pub key: Modality,
    pub region: Region,
    pub pre_smoothing: f64,
    pub post_smoothing: f64,
    pub n_records: usize,
}

/// Everything one explanation pass produces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BrhrTable {
    pub cells: Vec<BrhrCell>,
    pub records: Vec<BrhrResult>,
    /// Raw (unsmoothed) importance of every evaluated record and direction.
    pub importances: Vec<ImportanceVector>,
    pub regions: Vec<RegionCell>,
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<String>,
}

impl BrhrTable {
    pub fn cell(&self, modality: Modality, partner: Modality) -> Option<&BrhrCell> {
        self.cells
            .iter()
            .find(|c| c.modality == modality && c.partner == partner)
    }
}

/// Mean score inside each region; spans sharing a region are pooled and
/// clipped to the vector length.
pub fn region_intensity(scores: &[f64], spans: &[RegionSpan]) -> BTreeMap<Region, f64> {
    let mut acc: BTreeMap<Region, (f64, usize)> = BTreeMap::new();
    for s in spans {
        let end = s.end.min(scores.len());
        if s.start >= end {
            continue;
        }
        let e = acc.entry(s.region).or_default();
        e.0 += scores[s.start..end].iter().sum::<f64>();
        e.1 += end - s.start;
    }
    acc.into_iter()
        .map(|(r, (sum, n))| (r, sum / n as f64))
        .collect()
}

/// Sample-wise region means, averaged over records, for each direction in
/// `importances`. Pre- and post-smoothing values are reported side by side.
pub fn dataset_region_intensity(
    importances: &[ImportanceVector],
    records: &[TokenizedRecord],
) -> Vec<RegionCell> {
    let by_id: BTreeMap<&str, &TokenizedRecord> =
        records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut acc: BTreeMap<(Modality, Modality, Region), (f64, f64, usize)> = BTreeMap::new();
    for v in importances {
        let Some(spans) = by_id
            .get(v.record_id.as_str())
            .and_then(|r| r.tokens.get(&v.modality()))
        else {
            continue;
        };
        let pre = region_intensity(&v.scores, &spans.region_spans);
        let post = region_intensity(&smooth(&v.scores), &spans.region_spans);
        for (region, x) in pre {
            let e = acc.entry((v.query, v.key, region)).or_default();
            e.0 += x;
            e.1 += post[&region];
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|((query, key, region), (pre, post, n))| RegionCell {
            query,
            key,
            region,
            pre_smoothing: pre / n as f64,
            post_smoothing: post / n as f64,
            n_records: n,
        })
        .collect()
}

/// Run the model with traces and compute hit rates for `directions`
/// (`(query, key)` pairs; all decoder pairs when `None`).
pub fn dataset_brhr(
    model: &ModelGraph,
    records: &[TokenizedRecord],
    ground_truth: &BTreeMap<String, DistanceGroundTruth>,
    directions: Option<&[(Modality, Modality)]>,
    cfg: &ExplainConfig,
) -> Result<BrhrTable> {
    dataset_brhr_with(
        model,
        records,
        ground_truth,
        directions,
        cfg,
        &RawAttention { side: cfg.side },
    )
}

pub fn dataset_brhr_with(
    model: &ModelGraph,
    records: &[TokenizedRecord],
    ground_truth: &BTreeMap<String, DistanceGroundTruth>,
    directions: Option<&[(Modality, Modality)]>,
    cfg: &ExplainConfig,
    backend: &dyn ImportanceBackend,
) -> Result<BrhrTable> {
    let available = model.attention_pairs()?;
    let directions: Vec<(Modality, Modality)> = match directions {
        Some(d) => d.to_vec(),
        None => available.iter().copied().filter(|(q, k)| q != k).collect(),
    };
    for d in &directions {
        if !available.contains(d) {
            return Err(unavailable(*d, &available));
        }
    }
    let mut table = BrhrTable::default();
    let mut sums: BTreeMap<(Modality, Modality), (f64, usize)> = BTreeMap::new();
    for part in records.chunks(cfg.chunk.max(1)) {
        for mut p in model.infer(part, part.len(), true)? {
            let trace = p.trace.take().unwrap_or_default();
            let gt = ground_truth.get(&p.record_id).ok_or_else(|| {
                Error::Explanation(format!("no ground truth for record {}", p.record_id))
            })?;
            let binder = p.p_bind > cfg.t_dec;
            for (q, k) in &directions {
                let v = backend.importance(&trace, &p.record_id, *q, *k)?;
                if binder && !v.scores.is_empty() {
                    if let Some(d) = gt.get(v.modality(), v.partner()) {
                        let mut ranked = v.clone();
                        ranked.scores = if cfg.smooth {
                            smooth(&v.scores)
                        } else {
                            v.scores.clone()
                        };
                        let r = brhr(&ranked, d, cfg.t)?;
                        let e = sums.entry((r.modality, r.partner)).or_default();
                        e.0 += r.hit_rate;
                        e.1 += 1;
                        table.records.push(r);
                    }
                }
                table.importances.push(v);
            }
            table.predictions.push(p);
        }
    }
    table.cells = sums
        .into_iter()
        .map(|((modality, partner), (sum, n))| BrhrCell {
            modality,
            partner,
            t: cfg.t,
            mean_brhr: sum / n as f64,
            n_records: n,
        })
        .collect();
    if table.cells.is_empty() {
        table.warnings.push(format!(
            "no record predicted as binder (p_bind > {}); BRHR table is empty",
            cfg.t_dec
        ));
    }
    table.regions = dataset_region_intensity(&table.importances, records);
    Ok(table)
}

fn unavailable(
    d: (Modality, Modality),
    available: &std::collections::BTreeSet<(Modality, Modality)>,
) -> Error {
    let list: Vec<String> = available.iter().map(|(q, k)| format!("{q}->{k}")).collect();
    Error::Explanation(format!(
        "direction {}->{} is not available for this architecture; available: [{}]",
        d.0,
        d.1,
        list.join(", ")
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationQuality {
    /// Mean of the four direction cells; `None` when some cell has no
    /// binder-predicted record.
    pub value: Option<f64>,
    pub cells: Vec<((Modality, Modality), Option<f64>)>,
    pub table: BrhrTable,
}

/// Unweighted mean hit rate over [`QUALITY_DIRECTIONS`].
pub fn explanation_quality(
    model: &ModelGraph,
    records: &[TokenizedRecord],
    ground_truth: &BTreeMap<String, DistanceGroundTruth>,
    cfg: &ExplainConfig,
) -> Result<ExplanationQuality> {
    let table = dataset_brhr(model, records, ground_truth, Some(&QUALITY_DIRECTIONS), cfg)?;
    let cells: Vec<((Modality, Modality), Option<f64>)> = QUALITY_DIRECTIONS
        .iter()
        .map(|&(q, k)| {
            let (m, p) = match cfg.side {
                ImportanceSide::Attended => (k, q),
                ImportanceSide::Query => (q, k),
            };
            ((q, k), table.cell(m, p).map(|c| c.mean_brhr))
        })
        .collect();
    let value = cells
        .iter()
        .map(|c| c.1)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    Ok(ExplanationQuality {
        value,
        cells,
        table,
    })
}

pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<String, DistanceGroundTruth>> {
    let rows: Vec<DistanceGroundTruth> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for g in rows {
        let id = g.record_id.clone();
        if out.insert(id.clone(), g).is_some() {
            return Err(Error::Schema(format!(
                "duplicate ground truth for record {id}"
            )));
        }
    }
    Ok(out)
}

pub fn write_brhr_csv(path: &Path, cells: &[BrhrCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON line per record and direction, with raw and smoothed scores.
pub fn write_importance_jsonl(path: &Path, importances: &[ImportanceVector]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in importances {
        let row = json!({
            "record_id": v.record_id,
            "query": v.query,
            "key": v.key,
            "modality": v.modality(),
            "partner": v.partner(),
            "side": v.side,
            "scores": v.scores,
            "smoothed": smooth(&v.scores),
        });
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
