//! Attention-derived residue importance, smoothing, binding-region hit
//! rates and the explanation-quality score.

mod dataset;

use serde::{Deserialize, Serialize};

use crate::blocks::AttentionTrace;
use crate::data::vocab::Modality;
use crate::error::{Error, Result};

pub use dataset::{
    dataset_brhr, dataset_brhr_with, dataset_region_intensity, explanation_quality,
    read_ground_truth, region_intensity, write_brhr_csv, write_importance_jsonl, BrhrCell,
    BrhrTable, ExplainConfig, ExplanationQuality, RegionCell, QUALITY_DIRECTIONS,
};

/// Which side of a `q -> k` attention block receives the scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceSide {
    /// Key residues: column means over query residue rows.
    #[default]
    Attended,
    /// Query residues: attention mass each row places on the key span.
    Query,
}

/// Per-residue scores of `modality`, derived from `query -> key` attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub record_id: String,
    pub query: Modality,
    pub key: Modality,
    pub side: ImportanceSide,
    pub scores: Vec<f64>,
}

impl ImportanceVector {
    /// The modality whose residues are scored.
    pub fn modality(&self) -> Modality {
        match self.side {
            ImportanceSide::Attended => self.key,
            ImportanceSide::Query => self.query,
        }
    }

    /// The interaction partner of [`Self::modality`].
    pub fn partner(&self) -> Modality {
        match self.side {
            ImportanceSide::Attended => self.query,
            ImportanceSide::Query => self.key,
        }
    }
}

/// Hit rate of one record, modality and partner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrhrResult {
    pub record_id: String,
    pub modality: Modality,
    pub partner: Modality,
    pub t: f64,
    pub hit_rate: f64,
    pub top_set_size: usize,
}

/// Source of importance vectors; raw attention is the built-in backend.
pub trait ImportanceBackend {
    fn importance(
        &self,
        trace: &AttentionTrace,
        record_id: &str,
        q: Modality,
        k: Modality,
    ) -> Result<ImportanceVector>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAttention {
    pub side: ImportanceSide,
}

impl ImportanceBackend for RawAttention {
    fn importance(
        &self,
        trace: &AttentionTrace,
        record_id: &str,
        q: Modality,
        k: Modality,
    ) -> Result<ImportanceVector> {
        attention_importance(trace, record_id, q, k, self.side)
    }
}

fn na_to_zero(x: f32) -> f64 {
    if x.is_finite() {
        x as f64
    } else {
        0.0
    }
}

/// Mean over layers and heads of the `q -> k` sub-blocks, restricted to
/// residue rows and columns (`[CLS]` and padding excluded).
pub fn attention_importance(
    trace: &AttentionTrace,
    record_id: &str,
    q: Modality,
    k: Modality,
    side: ImportanceSide,
) -> Result<ImportanceVector> {
    let mut sum: Option<Vec<f64>> = None;
    let mut blocks = 0usize;
    for (e, s) in trace.matching(q, k) {
        let (rq, rk) = (e.query_residues, s.residues);
        let col0 = s.span.offset + 1;
        let v: Vec<f64> = match side {
            ImportanceSide::Attended => (0..rk)
                .map(|j| {
                    if rq == 0 {
                        return 0.0;
                    }
                    (1..=rq).map(|r| na_to_zero(e.at(r, col0 + j))).sum::<f64>() / rq as f64
                })
                .collect(),
            ImportanceSide::Query => (1..=rq)
                .map(|r| (0..rk).map(|j| na_to_zero(e.at(r, col0 + j))).sum())
                .collect(),
        };
        match &mut sum {
            None => sum = Some(v),
            Some(acc) if acc.len() == v.len() => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
            Some(acc) => {
                return Err(Error::Explanation(format!(
                    "record {record_id}: inconsistent residue counts for {q}->{k} ({} vs {})",
                    acc.len(),
                    v.len()
                )))
            }
        }
        blocks += 1;
    }
    let Some(mut scores) = sum else {
        let available: Vec<String> = trace
            .pairs()
            .iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        return Err(Error::Explanation(format!(
            "record {record_id}: no attention for {q}->{k}; available: {}",
            available.join(", ")
        )));
    };
    scores.iter_mut().for_each(|x| *x /= blocks as f64);
    Ok(ImportanceVector {
        record_id: record_id.to_string(),
        query: q,
        key: k,
        side,
        scores,
    })
}

/// Convolution with `[1/3, 1/3, 1/3]`, zero-padded, same length.
pub fn smooth(v: &[f64]) -> Vec<f64> {
    let at = |i: isize| {
        if i < 0 || i as usize >= v.len() {
            0.0
        } else {
            v[i as usize]
        }
    };
    (0..v.len() as isize)
        .map(|i| (at(i - 1) + at(i) + at(i + 1)) / 3.0)
        .collect()
}

/// Top-set size `max(1, ceil(t * len))`.
pub fn top_set_size(len: usize, t: f64) -> usize {
    ((t * len as f64).ceil() as usize).clamp(1, len.max(1))
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold t={t} outside (0, 1]")))
    }
}

/// Fraction of the `m` most important residues that are also among the
/// `m` closest. Ties go to the lower index; missing distances rank last.
pub fn hit_rate(importance: &[f64], distances: &[Option<f64>], t: f64) -> Result<(f64, usize)> {
    check_t(t)?;
    if importance.len() != distances.len() || importance.is_empty() {
        return Err(Error::Alignment {
            importance: importance.len(),
            distance: distances.len(),
        });
    }
    let l = importance.len();
    let m = top_set_size(l, t);
    let mut by_score: Vec<usize> = (0..l).collect();
    by_score.sort_by(|&a, &b| {
        let (x, y) = (nan_low(importance[a]), nan_low(importance[b]));
        y.total_cmp(&x).then(a.cmp(&b))
    });
    let mut by_dist: Vec<usize> = (0..l).collect();
    by_dist.sort_by(|&a, &b| {
        let key = |i: usize| {
            distances[i]
                .filter(|d| !d.is_nan())
                .unwrap_or(f64::INFINITY)
        };
        match (distances[a].is_some(), distances[b].is_some()) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            _ => key(a).total_cmp(&key(b)),
        }
        .then(a.cmp(&b))
    });
    let mut top = vec![false; l];
    by_score[..m].iter().for_each(|i| top[*i] = true);
    let hits = by_dist[..m].iter().filter(|i| top[**i]).count();
    Ok((hits as f64 / m as f64, m))
}

fn nan_low(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x
    }
}

pub fn brhr(v: &ImportanceVector, distances: &[Option<f64>], t: f64) -> Result<BrhrResult> {
    let (hit_rate, top_set_size) = hit_rate(&v.scores, distances, t)?;
    Ok(BrhrResult {
        record_id: v.record_id.clone(),
        modality: v.modality(),
        partner: v.partner(),
        t,
        hit_rate,
        top_set_size,
    })
}
