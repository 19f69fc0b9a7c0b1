use std::rc::Rc;

use super::layers::{Attention, FeedForward, LayerNorm};
use super::trace::{AttentionKind, CapturePoint, KeySpan};
use super::{BlockConfig, Graph, ParamInit, Stream};
use crate::error::{Error, Result};
use crate::tensor::Float;

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_cross: LayerNorm,
    pub cross_attn: Attention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        cfg: &BlockConfig,
    ) -> Result<Self> {
        let d = cfg.hidden;
        Ok(DecoderLayer {
            ln_self: LayerNorm::new(init, &format!("{name}.ln_self"), d)?,
            self_attn: Attention::new(init, &format!("{name}.self_attn"), d, cfg.heads)?,
            ln_cross: LayerNorm::new(init, &format!("{name}.ln_cross"), d)?,
            cross_attn: Attention::new(init, &format!("{name}.cross_attn"), d, cfg.heads)?,
            ln_ffn: LayerNorm::new(init, &format!("{name}.ln_ffn"), d)?,
            ffn: FeedForward::new(init, &format!("{name}.ffn"), d, cfg.ffn_width())?,
        })
    }
}

/// Query-side stack: self-attention, cross-attention into the key/value
/// sources, feed-forward.
///
/// With `cross_residual` off the cross-attention output replaces the query
/// stream instead of being added to it, so everything downstream of a
/// layer is built from attended-side values.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub name: String,
    pub layers: Vec<DecoderLayer>,
    pub ln_out: LayerNorm,
    pub cross_residual: bool,
}

/// Keys for cross-attention: residue positions of every source. A sample
/// with no residue keys at all falls back to the sources' `[CLS]` slots.
fn cross_key_mask(keys: &[&Stream]) -> Result<(Vec<bool>, Vec<bool>)> {
    let batch = keys[0].batch;
    let total: usize = keys.iter().map(|k| k.len).sum();
    let mut tokens = Vec::with_capacity(batch * total);
    let mut attend = Vec::with_capacity(batch * total);
    for b in 0..batch {
        let start = attend.len();
        for k in keys {
            let m = &k.mask[b * k.len..(b + 1) * k.len];
            tokens.extend_from_slice(m);
            attend.extend(m.iter().enumerate().map(|(i, v)| *v && i > 0));
        }
        if !attend[start..].iter().any(|v| *v) {
            let mut off = start;
            let mut any = false;
            for k in keys {
                if k.present(b) {
                    attend[off] = true;
                    any = true;
                }
                off += k.len;
            }
            if !any {
                return Err(Error::Inference(format!(
                    "sample {b}: every key source is empty and no [CLS] sentinel is available"
                )));
            }
        }
    }
    Ok((tokens, attend))
}

impl Decoder {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        cfg: &BlockConfig,
        cross_residual: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|i| DecoderLayer::new(init, &format!("{name}.layer{i}"), cfg))
            .collect::<Result<_>>()?;
        Ok(Decoder {
            name: name.to_string(),
            layers,
            ln_out: LayerNorm::new(init, &format!("{name}.ln_out"), cfg.hidden)?,
            cross_residual,
        })
    }

    pub fn forward<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        query: &Stream,
        keys: &[&Stream],
    ) -> Result<Stream> {
        if keys.is_empty() {
            return Err(Error::Wiring(format!(
                "decoder {} has no key sources",
                self.name
            )));
        }
        let d = g.tape.value(query.var).last_dim();
        for k in keys {
            if k.batch != query.batch || g.tape.value(k.var).last_dim() != d {
                return Err(Error::shape(
                    "decode",
                    &[query.batch, d],
                    &[k.batch, g.tape.value(k.var).last_dim()],
                ));
            }
        }
        let batch = query.batch;
        let kv = if keys.len() == 1 {
            keys[0].var
        } else {
            let parts: Vec<_> = keys.iter().map(|k| (k.var, k.len)).collect();
            g.tape.concat_seq(&parts, batch)?
        };
        let lk: usize = keys.iter().map(|k| k.len).sum();
        let mut spans = Vec::with_capacity(keys.len());
        let mut off = 0;
        for k in keys {
            spans.push(KeySpan {
                modality: k.base,
                offset: off,
                len: k.len,
            });
            off += k.len;
        }
        let (tokens, attend) = cross_key_mask(keys)?;
        let key_tokens = Rc::new(tokens);
        let attend = Rc::new(attend);
        let qmask = query.mask.clone();
        let mut x = query.var;
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.ln_self.forward(g, x)?;
            let (a, node) = layer.self_attn.forward(g, h, h, qmask.clone(), batch)?;
            g.captures.push(CapturePoint {
                source: self.name.clone(),
                kind: AttentionKind::SelfAttention,
                layer: i,
                heads: layer.self_attn.heads,
                query: query.base,
                batch,
                lq: query.len,
                lk: query.len,
                spans: vec![KeySpan {
                    modality: query.base,
                    offset: 0,
                    len: query.len,
                }],
                query_mask: qmask.clone(),
                key_tokens: qmask.clone(),
                var: node,
            });
            let a = g.dropout(a);
            x = g.tape.add(x, a)?;
            let h = layer.ln_cross.forward(g, x)?;
            let (c, node) = layer.cross_attn.forward(g, h, kv, attend.clone(), batch)?;
            g.captures.push(CapturePoint {
                source: self.name.clone(),
                kind: AttentionKind::Cross,
                layer: i,
                heads: layer.cross_attn.heads,
                query: query.base,
                batch,
                lq: query.len,
                lk,
                spans: spans.clone(),
                query_mask: qmask.clone(),
                key_tokens: key_tokens.clone(),
                var: node,
            });
            let c = g.dropout(c);
            x = if self.cross_residual {
                g.tape.add(x, c)?
            } else {
                c
            };
            let h = layer.ln_ffn.forward(g, x)?;
            let f = layer.ffn.forward(g, h)?;
            let f = g.dropout(f);
            x = g.tape.add(x, f)?;
        }
        let x = self.ln_out.forward(g, x)?;
        let x = g.zero_rows(x, &qmask)?;
        Ok(Stream {
            var: x,
            base: query.base,
            batch,
            len: query.len,
            mask: qmask,
        })
    }
}
