use serde::{Deserialize, Serialize};

use super::regions::RegionSpan;
use super::vocab::{Modality, Vocabulary, CLS, PAD, UNK};
use crate::error::{Error, Result};

/// One modality rendered as fixed-length token ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedModality {
    pub modality: Modality,
    pub ids: Vec<usize>,
    pub attn_mask: Vec<u8>,
    pub region_spans: Vec<RegionSpan>,
}

impl TokenizedModality {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of residue tokens (excludes `[CLS]` and padding).
    pub fn residue_count(&self) -> usize {
        self.attn_mask
            .iter()
            .filter(|m| **m == 1)
            .count()
            .saturating_sub(1)
    }

    pub fn is_absent(&self) -> bool {
        self.attn_mask.iter().all(|m| *m == 0)
    }

    /// Attaches spans, clipped to the residues that survived truncation.
    pub fn with_regions(mut self, spans: &[RegionSpan]) -> Self {
        let n = self.residue_count();
        self.region_spans = spans
            .iter()
            .filter(|s| s.start < n)
            .map(|s| RegionSpan::new(s.region, s.start, s.end.min(n)))
            .filter(|s| !s.is_empty())
            .collect();
        self
    }
}

/// Tokenizer that counts non-canonical residues it had to map to `[UNK]`.
#[derive(Clone, Debug, Default)]
pub struct Tokenizer {
    pub vocab: Vocabulary,
    pub unknown_residues: usize,
}

impl Tokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// `[CLS]` + residues (truncated to `max_len - 1`) + `[PAD]` fill.
    ///
    /// An absent optional sequence becomes all-`[PAD]` with an all-zero
    /// mask; an absent required one is an ingestion error.
    pub fn tokenize(
        &mut self,
        seq: Option<&str>,
        modality: Modality,
        max_len: usize,
        required: bool,
    ) -> Result<TokenizedModality> {
        if max_len < 2 {
            return Err(Error::Config(format!(
                "max_len {max_len} < 2 for {modality}"
            )));
        }
        let mut ids = vec![PAD; max_len];
        let mut mask = vec![0u8; max_len];
        match seq.filter(|s| !s.is_empty()) {
            None if required => {
                return Err(Error::Ingest(format!(
                    "required modality {modality} is empty"
                )));
            }
            None => {}
            Some(s) => {
                ids[0] = CLS;
                mask[0] = 1;
                for (i, c) in s.chars().take(max_len - 1).enumerate() {
                    ids[i + 1] = match self.vocab.residue_id(c) {
                        Some(id) => id,
                        None => {
                            self.unknown_residues += 1;
                            UNK
                        }
                    };
                    mask[i + 1] = 1;
                }
            }
        }
        Ok(TokenizedModality {
            modality,
            ids,
            attn_mask: mask,
            region_spans: Vec::new(),
        })
    }
}
