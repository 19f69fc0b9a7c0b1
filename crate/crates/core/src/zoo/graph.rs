use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::spec::{ArchitectureSpec, LossHead};
use crate::blocks::{
    collect_traces, mask_for_mlm_with, AttentionTrace, ClassifierHead, Decoder, Encoder, Graph,
    Linear, MlmHead, ModalityBatch, ParamInit, Stream, IGNORE_INDEX,
};
use crate::data::regions::{annotate_regions, Region, RegionSpan};
use crate::data::{BindingRecord, Label, Modality, TokenizedModality, Tokenizer};
use crate::error::{Error, Result};
use crate::losses::{Gene, LabelSpaces, BINDER_CLASS};
use crate::tensor::{load_checkpoint, save_checkpoint, Float, ParamStore, Var};

/// A record rendered for one architecture: tokens for every declared
/// modality, with region spans attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedRecord {
    pub record_id: String,
    pub label: Label,
    pub tokens: BTreeMap<Modality, TokenizedModality>,
}

/// Stacked token ids per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBatch {
    pub size: usize,
    pub inputs: BTreeMap<Modality, ModalityBatch>,
}

impl InputBatch {
    pub fn new(records: &[&TokenizedRecord], modalities: &[Modality]) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        for m in modalities {
            let toks = records
                .iter()
                .map(|r| {
                    r.tokens.get(m).ok_or_else(|| {
                        Error::Inference(format!("record {} lacks tokens for {m}", r.record_id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            inputs.insert(*m, ModalityBatch::from_tokens(*m, &toks)?);
        }
        Ok(InputBatch {
            size: records.len(),
            inputs,
        })
    }

    /// MLM-corrupted copy plus per-modality targets.
    pub fn corrupt(
        &self,
        mask_prob: f64,
        rng: &mut impl Rng,
    ) -> (InputBatch, BTreeMap<Modality, Vec<i64>>) {
        let mut out = self.clone();
        let mut targets = BTreeMap::new();
        for (m, b) in out.inputs.iter_mut() {
            let (ids, t) = mask_for_mlm_with(&b.ids, mask_prob, rng);
            b.ids = ids;
            targets.insert(*m, t);
        }
        (out, targets)
    }
}

/// Linear head over the `[CLS]` row of a named source.
#[derive(Clone, Debug)]
pub struct AuxHead {
    pub source: String,
    pub linear: Linear,
}

impl AuxHead {
    fn forward<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        sources: &BTreeMap<String, Stream>,
    ) -> Result<Var> {
        let x = cls(g, source(sources, &self.source)?)?;
        self.linear.forward(g, x)
    }
}

pub struct ForwardOutput {
    pub binder_logits: Var,
    pub sources: BTreeMap<String, Stream>,
    pub mhc_class: Option<Var>,
    pub mhc_allele: Option<Var>,
    pub trvj: BTreeMap<Gene, Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub record_id: String,
    pub label: Label,
    pub p_bind: f64,
    pub trace: Option<AttentionTrace>,
}

/// Encoders, decoders and heads instantiated from an [`ArchitectureSpec`],
/// with their parameters.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    pub spec: ArchitectureSpec,
    pub label_spaces: LabelSpaces,
    pub seed: u64,
    pub params: ParamStore<f32>,
    pub encoders: Vec<Encoder>,
    /// Parallel to `spec.wiring`.
    pub decoders: Vec<Decoder>,
    pub classifier: ClassifierHead,
    pub mlm_enc: Vec<(Modality, MlmHead)>,
    /// Keyed by decoder name.
    pub mlm_dec: Vec<(String, MlmHead)>,
    pub mhc_class: Option<AuxHead>,
    pub mhc_allele: Option<AuxHead>,
    pub trvj: BTreeMap<Gene, AuxHead>,
}

fn source<'a>(sources: &'a BTreeMap<String, Stream>, name: &str) -> Result<&'a Stream> {
    sources
        .get(name)
        .ok_or_else(|| Error::Wiring(format!("source {name} was not computed")))
}

fn cls<T: Float>(g: &mut Graph<'_, T>, s: &Stream) -> Result<Var> {
    g.tape.gather_rows(s.var, &s.cls_rows())
}

fn mean_of<T: Float>(g: &mut Graph<'_, T>, vars: &[Var]) -> Result<Option<Var>> {
    if vars.is_empty() {
        return Ok(None);
    }
    let w = T::from_f64_lossy(1.0 / vars.len() as f64);
    let terms: Vec<(Var, T)> = vars.iter().map(|v| (*v, w)).collect();
    g.tape.weighted_sum(&terms).map(Some)
}

impl ModelGraph {
    pub fn build(spec: ArchitectureSpec, label_spaces: LabelSpaces, seed: u64) -> Result<Self> {
        spec.validate()?;
        let bases = spec.source_bases()?;
        let cfg = spec.block;
        let d = cfg.hidden;
        let mut params = ParamStore::new();
        let mut init = ParamInit::new(&mut params, seed);
        let encoders = spec
            .modalities
            .iter()
            .map(|m| {
                Encoder::new(
                    &mut init,
                    &format!("enc.{m}"),
                    *m,
                    spec.max_len_of(*m),
                    &cfg,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decoders = spec
            .wiring
            .iter()
            .map(|w| {
                Decoder::new(
                    &mut init,
                    &format!("dec.{}", w.name),
                    &cfg,
                    spec.cross_residual,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let classifier = ClassifierHead::new(
            &mut init,
            "head.binder",
            spec.classifier_inputs.clone(),
            d,
            2,
        )?;
        let table_of = |m: Modality| encoders.iter().find(|e| e.modality == m).map(|e| e.tokens);
        let mlm_head = |init: &mut ParamInit<'_, f32>, name: &str, base: Modality| match (
            spec.mlm_tied,
            table_of(base),
        ) {
            (true, Some(t)) => MlmHead::tied(init, name, t),
            _ => MlmHead::untied(init, name, d),
        };
        let mut mlm_enc = Vec::new();
        if spec.loss_heads.contains(&LossHead::MlmEnc) {
            for m in &spec.modalities {
                mlm_enc.push((*m, mlm_head(&mut init, &format!("head.mlm.enc.{m}"), *m)?));
            }
        }
        let mut mlm_dec = Vec::new();
        if spec.loss_heads.contains(&LossHead::MlmDec) {
            for w in &spec.wiring {
                let base = bases[&w.output];
                mlm_dec.push((
                    w.name.clone(),
                    mlm_head(&mut init, &format!("head.mlm.dec.{}", w.name), base)?,
                ));
            }
        }
        let mhc_source = spec
            .classifier_inputs
            .iter()
            .rev()
            .find(|c| bases[*c] == Modality::Epitope)
            .cloned()
            .or_else(|| {
                spec.modalities
                    .contains(&Modality::Epitope)
                    .then(|| Modality::Epitope.name().to_string())
            })
            .unwrap_or_else(|| spec.classifier_inputs[0].clone());
        let aux = |init: &mut ParamInit<'_, f32>,
                   name: &str,
                   src: &str,
                   classes: usize|
         -> Result<AuxHead> {
            Ok(AuxHead {
                source: src.to_string(),
                linear: Linear::new(init, name, d, classes)?,
            })
        };
        let mhc_class = match spec.loss_heads.contains(&LossHead::MhcClass) {
            true => Some(aux(&mut init, "head.mhc_class", &mhc_source, 2)?),
            false => None,
        };
        let mhc_allele = match spec.loss_heads.contains(&LossHead::MhcAllele) {
            true => Some(aux(
                &mut init,
                "head.mhc_allele",
                &mhc_source,
                label_spaces.mhc_allele.classes(),
            )?),
            false => None,
        };
        let mut trvj = BTreeMap::new();
        if spec.loss_heads.contains(&LossHead::Trvj) {
            for gene in Gene::ALL {
                let chain = Some(gene.chain());
                let src = spec
                    .classifier_inputs
                    .iter()
                    .rev()
                    .find(|c| bases[*c].chain() == chain)
                    .cloned()
                    .or_else(|| {
                        spec.modalities
                            .iter()
                            .find(|m| m.chain() == chain)
                            .map(|m| m.name().to_string())
                    });
                if let Some(src) = src {
                    let classes = label_spaces.gene(gene).classes();
                    trvj.insert(
                        gene,
                        aux(&mut init, &format!("head.{}", gene.name()), &src, classes)?,
                    );
                }
            }
        }
        Ok(ModelGraph {
            spec,
            label_spaces,
            seed,
            params,
            encoders,
            decoders,
            classifier,
            mlm_enc,
            mlm_dec,
            mhc_class,
            mhc_allele,
            trvj,
        })
    }

    /// Every `(query, key)` base-modality pair some decoder attends over.
    pub fn attention_pairs(&self) -> Result<BTreeSet<(Modality, Modality)>> {
        let bases = self.spec.source_bases()?;
        Ok(self
            .spec
            .wiring
            .iter()
            .flat_map(|w| w.keys.iter().map(|k| (bases[&w.query], bases[k])))
            .collect())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Tokens for every declared modality. A missing modality that is not
    /// declared optional is an inference error naming it.
    pub fn tokenize(&self, records: &[BindingRecord]) -> Result<Vec<TokenizedRecord>> {
        let mut tok = Tokenizer::new();
        records
            .iter()
            .map(|r| self.tokenize_one(&mut tok, r))
            .collect()
    }

    fn tokenize_one(&self, tok: &mut Tokenizer, r: &BindingRecord) -> Result<TokenizedRecord> {
        let ann = annotate_regions(r);
        let mut tokens = BTreeMap::new();
        for m in &self.spec.modalities {
            let seq = r.sequence(*m);
            if seq.is_none() && !self.spec.optional.contains(m) {
                return Err(Error::Inference(format!(
                    "record {}: required modality {m} is absent",
                    r.record_id
                )));
            }
            let t = tok.tokenize(seq, *m, self.spec.max_len_of(*m), false)?;
            let spans: Vec<RegionSpan> = match (ann.spans.get(m), Region::of_modality(*m)) {
                (Some(s), _) => s.clone(),
                (None, Some(region)) => vec![RegionSpan::new(
                    region,
                    0,
                    seq.map_or(0, |s| s.chars().count()),
                )],
                (None, None) => Vec::new(),
            };
            tokens.insert(*m, t.with_regions(&spans));
        }
        Ok(TokenizedRecord {
            record_id: r.record_id.clone(),
            label: r.label,
            tokens,
        })
    }

    pub fn batch(&self, records: &[&TokenizedRecord]) -> Result<InputBatch> {
        InputBatch::new(records, &self.spec.modalities)
    }

    /// Encoder streams, then (optionally) every decoder output in wiring
    /// order, keyed by source name.
    pub fn run_sources<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &InputBatch,
        with_decoders: bool,
    ) -> Result<BTreeMap<String, Stream>> {
        let mut sources = BTreeMap::new();
        for enc in &self.encoders {
            let input = batch.inputs.get(&enc.modality).ok_or_else(|| {
                Error::Inference(format!("batch lacks modality {}", enc.modality))
            })?;
            sources.insert(enc.modality.name().to_string(), enc.forward(g, input)?);
        }
        if with_decoders {
            for (w, dec) in self.spec.wiring.iter().zip(&self.decoders) {
                let q = source(&sources, &w.query)?;
                let keys = w
                    .keys
                    .iter()
                    .map(|k| source(&sources, k))
                    .collect::<Result<Vec<_>>>()?;
                let out = dec.forward(g, q, &keys)?;
                sources.insert(w.output.clone(), out);
            }
        }
        Ok(sources)
    }

    pub fn forward<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &InputBatch,
    ) -> Result<ForwardOutput> {
        let sources = self.run_sources(g, batch, true)?;
        let mut features = Vec::with_capacity(self.classifier.inputs.len());
        for name in &self.classifier.inputs {
            features.push((name.as_str(), cls(g, source(&sources, name)?)?));
        }
        let binder_logits = self.classifier.forward(g, &features)?;
        let mhc_class = self
            .mhc_class
            .as_ref()
            .map(|h| h.forward(g, &sources))
            .transpose()?;
        let mhc_allele = self
            .mhc_allele
            .as_ref()
            .map(|h| h.forward(g, &sources))
            .transpose()?;
        let mut trvj = BTreeMap::new();
        for (gene, h) in &self.trvj {
            trvj.insert(*gene, h.forward(g, &sources)?);
        }
        Ok(ForwardOutput {
            binder_logits,
            sources,
            mhc_class,
            mhc_allele,
            trvj,
        })
    }

    /// Encoder and decoder MLM losses on a corrupted batch, each the mean
    /// over its heads. Decoders run only when their loss is requested.
    pub fn mlm_losses<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        corrupted: &InputBatch,
        targets: &BTreeMap<Modality, Vec<i64>>,
        encoders: bool,
        decoders: bool,
    ) -> Result<(Option<Var>, Option<Var>)> {
        let decoders = decoders && !self.mlm_dec.is_empty();
        let encoders = encoders && !self.mlm_enc.is_empty();
        if !encoders && !decoders {
            return Ok((None, None));
        }
        let sources = self.run_sources(g, corrupted, decoders)?;
        let bases = self.spec.source_bases()?;
        let target_of = |m: Modality| {
            targets
                .get(&m)
                .ok_or_else(|| Error::Inference(format!("no MLM targets for {m}")))
        };
        let mut enc_parts = Vec::new();
        if encoders {
            for (m, head) in &self.mlm_enc {
                let s = source(&sources, m.name())?;
                let logits = head.forward(g, s.var)?;
                enc_parts.push(g.tape.cross_entropy(logits, target_of(*m)?, IGNORE_INDEX)?);
            }
        }
        let mut dec_parts = Vec::new();
        if decoders {
            for (name, head) in &self.mlm_dec {
                let w = self
                    .spec
                    .wiring
                    .iter()
                    .find(|w| &w.name == name)
                    .ok_or_else(|| Error::Wiring(format!("MLM head for unknown decoder {name}")))?;
                let s = source(&sources, &w.output)?;
                let logits = head.forward(g, s.var)?;
                dec_parts.push(g.tape.cross_entropy(
                    logits,
                    target_of(bases[&w.output])?,
                    IGNORE_INDEX,
                )?);
            }
        }
        Ok((mean_of(g, &enc_parts)?, mean_of(g, &dec_parts)?))
    }

    /// Binder probabilities (dropout off), in chunks of `chunk` records,
    /// optionally with one attention trace per record.
    pub fn infer(
        &self,
        records: &[TokenizedRecord],
        chunk: usize,
        traces: bool,
    ) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(records.len());
        for part in records.chunks(chunk.max(1)) {
            let refs: Vec<&TokenizedRecord> = part.iter().collect();
            let batch = self.batch(&refs)?;
            let mut g = Graph::eval(&self.params);
            let fo = self.forward(&mut g, &batch)?;
            let logits = g.tape.value(fo.binder_logits).data().to_vec();
            let mut tr = if traces {
                collect_traces(&g.tape, &g.captures)
                    .into_iter()
                    .map(Some)
                    .collect()
            } else {
                vec![None; part.len()]
            };
            for (i, r) in part.iter().enumerate() {
                let row = &logits[i * 2..i * 2 + 2];
                let p = softmax2(row[0] as f64, row[1] as f64)[BINDER_CLASS];
                if !p.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "p_bind for record {}",
                        r.record_id
                    )));
                }
                out.push(Prediction {
                    record_id: r.record_id.clone(),
                    label: r.label,
                    p_bind: p,
                    trace: tr[i].take(),
                });
            }
        }
        Ok(out)
    }

    pub fn manifest(&self, epoch: Option<usize>, metrics: Value) -> Value {
        json!({
            "format": "tcrlab-checkpoint",
            "arch_id": self.spec.arch_id,
            "architecture": self.spec,
            "label_spaces": self.label_spaces,
            "seed": self.seed,
            "epoch": epoch,
            "num_parameters": self.num_parameters(),
            "metrics": metrics,
        })
    }

    pub fn save(&self, path: &Path, epoch: Option<usize>, metrics: Value) -> Result<()> {
        save_checkpoint(path, &self.manifest(epoch, metrics), &self.params)
    }

    /// Rebuilds the graph from the stamped spec and restores its weights.
    pub fn load(path: &Path) -> Result<(Self, Value)> {
        let ck = load_checkpoint(path)?;
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let field = |k: &str| {
            ck.manifest
                .get(k)
                .cloned()
                .ok_or_else(|| bad(format!("manifest lacks {k}")))
        };
        let spec: ArchitectureSpec = serde_json::from_value(field("architecture")?)
            .map_err(|e| bad(format!("architecture: {e}")))?;
        let spaces: LabelSpaces = serde_json::from_value(field("label_spaces")?)
            .map_err(|e| bad(format!("label_spaces: {e}")))?;
        let seed = field("seed")?
            .as_u64()
            .ok_or_else(|| bad("seed is not an integer".into()))?;
        let mut model = ModelGraph::build(spec, spaces, seed)?;
        ck.restore_into(&mut model.params).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => bad(reason),
            other => other,
        })?;
        Ok((model, ck.manifest))
    }
}

fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    [ea / (ea + eb), eb / (ea + eb)]
}
