use std::rc::Rc;

use super::layers::{Attention, FeedForward, LayerNorm};
use super::trace::{AttentionKind, CapturePoint, KeySpan};
use super::{BlockConfig, Graph, ParamInit, Stream};
use crate::data::tokenize::TokenizedModality;
use crate::data::vocab::{Modality, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::tensor::{Float, ParamId};

/// Token ids of one modality for a batch of records, `batch * len` each.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityBatch {
    pub modality: Modality,
    pub batch: usize,
    pub len: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl ModalityBatch {
    pub fn from_tokens(modality: Modality, toks: &[&TokenizedModality]) -> Result<Self> {
        let len = toks
            .first()
            .map(|t| t.max_len())
            .ok_or_else(|| Error::Config(format!("empty batch for {modality}")))?;
        let mut ids = Vec::with_capacity(toks.len() * len);
        let mut mask = Vec::with_capacity(toks.len() * len);
        for t in toks {
            if t.max_len() != len || t.attn_mask.len() != len {
                return Err(Error::shape(
                    "ModalityBatch",
                    &[t.ids.len(), t.attn_mask.len()],
                    &[len],
                ));
            }
            ids.extend_from_slice(&t.ids);
            mask.extend(t.attn_mask.iter().map(|m| *m == 1));
        }
        Ok(ModalityBatch {
            modality,
            batch: toks.len(),
            len,
            ids,
            mask,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub attn: Attention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        cfg: &BlockConfig,
    ) -> Result<Self> {
        let d = cfg.hidden;
        Ok(EncoderLayer {
            ln_attn: LayerNorm::new(init, &format!("{name}.ln_attn"), d)?,
            attn: Attention::new(init, &format!("{name}.attn"), d, cfg.heads)?,
            ln_ffn: LayerNorm::new(init, &format!("{name}.ln_ffn"), d)?,
            ffn: FeedForward::new(init, &format!("{name}.ffn"), d, cfg.ffn_width())?,
        })
    }
}

/// Token + learned positional embeddings followed by pre-norm
/// self-attention layers and a final LayerNorm.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub name: String,
    pub modality: Modality,
    pub max_len: usize,
    pub tokens: ParamId,
    pub positions: ParamId,
    pub layers: Vec<EncoderLayer>,
    pub ln_out: LayerNorm,
}

impl Encoder {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        modality: Modality,
        max_len: usize,
        cfg: &BlockConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden;
        let tokens = init.uniform(&format!("{name}.tok_emb"), vec![VOCAB_SIZE, d], 0.1)?;
        let positions = init.uniform(&format!("{name}.pos_emb"), vec![max_len, d], 0.1)?;
        let layers = (0..cfg.layers)
            .map(|i| EncoderLayer::new(init, &format!("{name}.layer{i}"), cfg))
            .collect::<Result<_>>()?;
        Ok(Encoder {
            name: name.to_string(),
            modality,
            max_len,
            tokens,
            positions,
            layers,
            ln_out: LayerNorm::new(init, &format!("{name}.ln_out"), d)?,
        })
    }

    /// Encodes a batch. Padding keys are never attended to and padding
    /// rows (all rows, for an absent modality) are zero in the output.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, input: &ModalityBatch) -> Result<Stream> {
        if input.len != self.max_len {
            return Err(Error::shape("encode", &[input.len], &[self.max_len]));
        }
        if input.ids.len() != input.batch * input.len || input.mask.len() != input.ids.len() {
            return Err(Error::shape(
                "encode",
                &[input.ids.len()],
                &[input.mask.len()],
            ));
        }
        let tok = g.param(self.tokens);
        let pos = g.param(self.positions);
        let positions: Vec<usize> = (0..input.batch).flat_map(|_| 0..input.len).collect();
        let e = g.tape.embedding(tok, &input.ids)?;
        let p = g.tape.embedding(pos, &positions)?;
        let mut x = g.tape.add(e, p)?;
        x = g.dropout(x);
        let mask = Rc::new(input.mask.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.ln_attn.forward(g, x)?;
            let (a, node) = layer.attn.forward(g, h, h, mask.clone(), input.batch)?;
            g.captures.push(CapturePoint {
                source: self.name.clone(),
                kind: AttentionKind::SelfAttention,
                layer: i,
                heads: layer.attn.heads,
                query: self.modality,
                batch: input.batch,
                lq: input.len,
                lk: input.len,
                spans: vec![KeySpan {
                    modality: self.modality,
                    offset: 0,
                    len: input.len,
                }],
                query_mask: mask.clone(),
                key_tokens: mask.clone(),
                var: node,
            });
            let a = g.dropout(a);
            x = g.tape.add(x, a)?;
            let h = layer.ln_ffn.forward(g, x)?;
            let f = layer.ffn.forward(g, h)?;
            let f = g.dropout(f);
            x = g.tape.add(x, f)?;
        }
        let x = self.ln_out.forward(g, x)?;
        let x = g.zero_rows(x, &mask)?;
        Ok(Stream {
            var: x,
            base: self.modality,
            batch: input.batch,
            len: input.len,
            mask,
        })
    }
}
