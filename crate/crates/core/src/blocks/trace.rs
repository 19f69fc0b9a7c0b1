use std::collections::BTreeSet;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::vocab::Modality;
use crate::tensor::{Float, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    #[serde(rename = "self")]
    SelfAttention,
    Cross,
}

/// A contiguous block of key columns belonging to one source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySpan {
    pub modality: Modality,
    pub offset: usize,
    pub len: usize,
}

/// An attention node recorded during a batched forward pass.
#[derive(Clone, Debug)]
pub struct CapturePoint {
    pub source: String,
    pub kind: AttentionKind,
    pub layer: usize,
    pub heads: usize,
    pub query: Modality,
    pub batch: usize,
    pub lq: usize,
    pub lk: usize,
    pub spans: Vec<KeySpan>,
    pub query_mask: Rc<Vec<bool>>,
    /// Token validity of the (concatenated) keys, before any sentinel rule.
    pub key_tokens: Rc<Vec<bool>>,
    pub var: Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanResidues {
    pub span: KeySpan,
    pub residues: usize,
}

/// One attention matrix of one record, `[rows x cols]` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub source: String,
    pub kind: AttentionKind,
    pub query: Modality,
    pub layer: usize,
    pub head: usize,
    pub rows: usize,
    pub cols: usize,
    pub query_residues: usize,
    pub spans: Vec<SpanResidues>,
    pub weights: Vec<f32>,
}

impl TraceEntry {
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.weights[r * self.cols + c]
    }

    /// The `[rows x span.len]` sub-block for key columns of `span`.
    pub fn block(&self, span: &KeySpan) -> Vec<f32> {
        (0..self.rows)
            .flat_map(|r| (span.offset..span.offset + span.len).map(move |c| (r, c)))
            .map(|(r, c)| self.at(r, c))
            .collect()
    }
}

/// Captured attention maps of one record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub entries: Vec<TraceEntry>,
}

impl AttentionTrace {
    /// `(entry, span)` pairs whose query is `q` and that carry key span `k`.
    pub fn matching(
        &self,
        q: Modality,
        k: Modality,
    ) -> impl Iterator<Item = (&TraceEntry, &SpanResidues)> {
        self.entries
            .iter()
            .filter(move |e| e.query == q)
            .flat_map(move |e| {
                e.spans
                    .iter()
                    .filter(move |s| s.span.modality == k)
                    .map(move |s| (e, s))
            })
    }

    /// Every `(query, key)` pair present in the trace.
    pub fn pairs(&self) -> BTreeSet<(Modality, Modality)> {
        self.entries
            .iter()
            .flat_map(|e| e.spans.iter().map(move |s| (e.query, s.span.modality)))
            .collect()
    }

    /// Export keyed `q=<m>|k=<m>|layer=<i>|head=<j>`. Several decoders may
    /// share a key, so each value is a list of blocks tagged by source.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for e in &self.entries {
            for s in &e.spans {
                let key = format!(
                    "q={}|k={}|layer={}|head={}",
                    e.query, s.span.modality, e.layer, e.head
                );
                let block = json!({
                    "source": e.source,
                    "kind": e.kind,
                    "rows": e.rows,
                    "cols": s.span.len,
                    "data": e.block(&s.span),
                });
                match map.entry(key).or_insert_with(|| Value::Array(Vec::new())) {
                    Value::Array(v) => v.push(block),
                    _ => unreachable!(),
                }
            }
        }
        Value::Object(map)
    }
}

fn count_residues(mask: &[bool]) -> usize {
    mask.iter().skip(1).filter(|m| **m).count()
}

/// Splits the batched capture points of a pass into per-record traces.
pub fn collect_traces<T: Float>(tape: &Tape<T>, captures: &[CapturePoint]) -> Vec<AttentionTrace> {
    let batch = captures.first().map_or(0, |c| c.batch);
    let mut traces = vec![AttentionTrace::default(); batch];
    for c in captures {
        let Some(w) = tape.attention_weights(c.var) else {
            continue;
        };
        for (b, trace) in traces.iter_mut().enumerate() {
            let qmask = &c.query_mask[b * c.lq..(b + 1) * c.lq];
            let kmask = &c.key_tokens[b * c.lk..(b + 1) * c.lk];
            let spans: Vec<SpanResidues> = c
                .spans
                .iter()
                .map(|s| SpanResidues {
                    span: s.clone(),
                    residues: count_residues(&kmask[s.offset..s.offset + s.len]),
                })
                .collect();
            for h in 0..c.heads {
                let off = (b * c.heads + h) * c.lq * c.lk;
                trace.entries.push(TraceEntry {
                    source: c.source.clone(),
                    kind: c.kind,
                    query: c.query,
                    layer: c.layer,
                    head: h,
                    rows: c.lq,
                    cols: c.lk,
                    query_residues: count_residues(qmask),
                    spans: spans.clone(),
                    weights: w[off..off + c.lq * c.lk]
                        .iter()
                        .map(|x| x.as_f32())
                        .collect(),
                });
            }
        }
    }
    traces
}
