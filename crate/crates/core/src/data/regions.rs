use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::BindingRecord;
use super::vocab::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Cdr1a,
    Cdr2a,
    Cdr3a,
    Cdr1b,
    Cdr2b,
    Cdr3b,
    NonCdrA,
    NonCdrB,
    Epitope,
}

impl Region {
    /// The region a standalone modality represents as a whole.
    pub fn of_modality(m: Modality) -> Option<Region> {
        Some(match m {
            Modality::Cdr1a => Region::Cdr1a,
            Modality::Cdr2a => Region::Cdr2a,
            Modality::Cdr3a => Region::Cdr3a,
            Modality::Cdr1b => Region::Cdr1b,
            Modality::Cdr2b => Region::Cdr2b,
            Modality::Cdr3b => Region::Cdr3b,
            Modality::Epitope => Region::Epitope,
            Modality::TcrA | Modality::TcrB => return None,
        })
    }
}

/// Half-open residue range `[start, end)` carrying a region label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpan {
    pub region: Region,
    pub start: usize,
    pub end: usize,
}

impl RegionSpan {
    pub fn new(region: Region, start: usize, end: usize) -> Self {
        RegionSpan { region, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFlag {
    pub kind: String,
    pub region: Region,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub spans: BTreeMap<Modality, Vec<RegionSpan>>,
    pub flags: Vec<RegionFlag>,
}

fn locate(chain: &str, cdr: &str) -> (Option<usize>, bool) {
    let first = chain.find(cdr);
    let repeated = first.is_some_and(|i| chain[i + 1..].contains(cdr));
    (first, repeated)
}

/// Marks each CDR inside its full chain by leftmost substring match; the
/// rest of the chain is non-CDR and the epitope is one region.
pub fn annotate_regions(record: &BindingRecord) -> RegionAnnotation {
    let mut ann = RegionAnnotation::default();
    let chains = [
        (
            Modality::TcrA,
            Region::NonCdrA,
            [
                (Modality::Cdr1a, Region::Cdr1a),
                (Modality::Cdr2a, Region::Cdr2a),
                (Modality::Cdr3a, Region::Cdr3a),
            ],
        ),
        (
            Modality::TcrB,
            Region::NonCdrB,
            [
                (Modality::Cdr1b, Region::Cdr1b),
                (Modality::Cdr2b, Region::Cdr2b),
                (Modality::Cdr3b, Region::Cdr3b),
            ],
        ),
    ];
    for (chain_mod, non_cdr, cdrs) in chains {
        let Some(chain) = record.sequence(chain_mod) else {
            continue;
        };
        let mut found: Vec<RegionSpan> = Vec::new();
        for (cdr_mod, region) in cdrs {
            let Some(cdr) = record.sequence(cdr_mod) else {
                continue;
            };
            let flag = |kind: &str| RegionFlag {
                kind: kind.to_string(),
                region,
            };
            match locate(chain, cdr) {
                (None, _) => ann.flags.push(flag("cdr_not_found")),
                (Some(start), repeated) => {
                    let span = RegionSpan::new(region, start, start + cdr.len());
                    if found
                        .iter()
                        .any(|s| s.start < span.end && span.start < s.end)
                    {
                        ann.flags.push(flag("overlapping_cdr_span"));
                        continue;
                    }
                    if repeated {
                        ann.flags.push(flag("ambiguous_cdr_span"));
                    }
                    found.push(span);
                }
            }
        }
        found.sort_by_key(|s| s.start);
        let mut spans = Vec::new();
        let mut cursor = 0;
        for s in found {
            if s.start > cursor {
                spans.push(RegionSpan::new(non_cdr, cursor, s.start));
            }
            cursor = s.end;
            spans.push(s);
        }
        if cursor < chain.len() {
            spans.push(RegionSpan::new(non_cdr, cursor, chain.len()));
        }
        ann.spans.insert(chain_mod, spans);
    }
    ann.spans.insert(
        Modality::Epitope,
        vec![RegionSpan::new(Region::Epitope, 0, record.epitope.len())],
    );
    ann
}
