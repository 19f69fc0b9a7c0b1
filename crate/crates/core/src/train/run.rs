use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Datasets, ExperimentConfig, SelectionStrategy};
use crate::blocks::Graph;
use crate::data::BindingRecord;
use crate::error::{Error, Result};
use crate::losses::{
    binder_loss, mhc_loss, roc_auc, total_loss, trvj_loss, AucAccumulator, LabelSpaces,
    LossAccumulator, BINDER_CLASS,
};
use crate::tensor::{AdamW, AdamWConfig, Tensor};
use crate::xai::{explanation_quality, ExplainConfig, QUALITY_DIRECTIONS};
use crate::zoo::{ArchitectureSpec, LossHead, ModelGraph, TokenizedRecord};

/// One epoch of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub fold: Option<usize>,
    /// Mean training loss per part (lowercase head names) plus `total`.
    pub loss: BTreeMap<String, f64>,
    /// Running AUC of the training batches as they were seen.
    pub roc_auc_train: Option<f64>,
    pub roc_auc_val: Option<f64>,
    /// Eval-mode AUC over the whole training split; eval points only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_auc_train_eval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_quality: Option<f64>,
    /// Relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl EpochRow {
    pub fn training_loss(&self) -> f64 {
        self.loss.get("total").copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: SelectionStrategy,
    pub epoch: usize,
    pub checkpoint: PathBuf,
    /// Training loss or explanation quality of the picked row.
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub fold: Option<usize>,
    pub selection_start_epoch: usize,
    pub rows: Vec<EpochRow>,
    /// Both strategies, whenever they have an eligible row.
    pub selections: Vec<Selection>,
}

impl RunLedger {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ledger: RunLedger = serde_json::from_str(&text)?;
        ledger.validate()?;
        Ok(ledger)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
            return Err(Error::Selection(
                "ledger epochs are not strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn selection(&self, strategy: SelectionStrategy) -> Option<&Selection> {
        self.selections.iter().find(|s| s.strategy == strategy)
    }

    pub fn row(&self, epoch: usize) -> Option<&EpochRow> {
        self.rows.iter().find(|r| r.epoch == epoch)
    }
}

/// Pick a checkpointed row at or after the selection start: lowest
/// training loss or highest explanation quality, earlier epoch on ties.
pub fn select_checkpoint(ledger: &RunLedger, strategy: SelectionStrategy) -> Result<Selection> {
    ledger.validate()?;
    let eligible = ledger
        .rows
        .iter()
        .filter(|r| r.epoch >= ledger.selection_start_epoch && r.checkpoint.is_some());
    let scored: Vec<(&EpochRow, f64)> = match strategy {
        SelectionStrategy::LossBased => eligible
            .map(|r| (r, r.training_loss()))
            .filter(|(_, s)| s.is_finite())
            .collect(),
        SelectionStrategy::ExplanationBased => eligible
            .filter_map(|r| r.explanation_quality.map(|q| (r, q)))
            .filter(|(_, s)| s.is_finite())
            .collect(),
    };
    let better = |a: f64, b: f64| match strategy {
        SelectionStrategy::LossBased => a < b,
        SelectionStrategy::ExplanationBased => a > b,
    };
    let mut best: Option<(&EpochRow, f64)> = None;
    for (r, s) in scored {
        if best.is_none_or(|(_, b)| better(s, b)) {
            best = Some((r, s));
        }
    }
    let (row, score) = best.ok_or_else(|| {
        Error::Selection(format!(
            "no eligible checkpoint for {strategy:?} at or after epoch {}",
            ledger.selection_start_epoch
        ))
    })?;
    Ok(Selection {
        strategy,
        epoch: row.epoch,
        checkpoint: row.checkpoint.clone().unwrap_or_default(),
        score,
    })
}

/// A finished run: its ledger and the final-epoch model.
pub struct TrainedRun {
    pub ledger: RunLedger,
    pub model: ModelGraph,
    pub output_dir: PathBuf,
}

/// Loads the configured data and trains into `cfg.output_dir`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainedRun> {
    cfg.validate()?;
    let data = Datasets::load(&cfg.data)?;
    train_on(cfg, &data, None, &cfg.output_dir)
}

fn fill_max_len(spec: &ArchitectureSpec, data: &Datasets) -> ArchitectureSpec {
    let mut all: Vec<BindingRecord> = data.all_records();
    all.extend(data.explain.iter().cloned());
    let fitted = spec.clone().fitted_to(&all);
    let mut out = spec.clone();
    for (m, len) in fitted.max_len {
        out.max_len.entry(m).or_insert(len);
    }
    out
}

fn lowercase(h: LossHead) -> String {
    h.name().to_ascii_lowercase()
}

struct StepOutcome {
    parts: BTreeMap<String, f64>,
    scores: Vec<(f64, bool)>,
}

struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    model: ModelGraph,
    optimizer: AdamW<f32>,
    enabled: BTreeSet<LossHead>,
    rng: ChaCha8Rng,
    out_dir: &'a Path,
}

impl Trainer<'_> {
    fn step(
        &mut self,
        epoch: usize,
        index: usize,
        refs: &[&TokenizedRecord],
        recs: &[&BindingRecord],
    ) -> Result<StepOutcome> {
        let batch = self.model.batch(refs)?;
        let labels: Vec<_> = refs.iter().map(|r| r.label).collect();
        let dropout_seed: u64 = self.rng.gen();
        let on = |h: LossHead| self.enabled.contains(&h);
        let (mlm_enc_on, mlm_dec_on) = (on(LossHead::MlmEnc), on(LossHead::MlmDec));
        let corrupted = (mlm_enc_on || mlm_dec_on)
            .then(|| batch.corrupt(self.cfg.loss.mlm_mask_prob, &mut self.rng));
        let model = &self.model;
        let mut g = Graph::train(&model.params, model.spec.block.dropout, dropout_seed);
        let fo = model.forward(&mut g, &batch)?;
        let mut parts: BTreeMap<LossHead, _> = BTreeMap::new();
        parts.insert(
            LossHead::Binder,
            binder_loss(&mut g.tape, fo.binder_logits, &labels)?,
        );
        if on(LossHead::MhcClass) {
            if let Some(v) = mhc_loss(&mut g.tape, fo.mhc_class, None, recs, &model.label_spaces)? {
                parts.insert(LossHead::MhcClass, v);
            }
        }
        if on(LossHead::MhcAllele) {
            if let Some(v) = mhc_loss(&mut g.tape, None, fo.mhc_allele, recs, &model.label_spaces)?
            {
                parts.insert(LossHead::MhcAllele, v);
            }
        }
        if on(LossHead::Trvj) {
            if let Some(v) = trvj_loss(&mut g.tape, &fo.trvj, recs, &model.label_spaces)? {
                parts.insert(LossHead::Trvj, v);
            }
        }
        if let Some((cb, targets)) = &corrupted {
            let (enc, dec) = model.mlm_losses(&mut g, cb, targets, mlm_enc_on, mlm_dec_on)?;
            if let Some(v) = enc {
                parts.insert(LossHead::MlmEnc, v);
            }
            if let Some(v) = dec {
                parts.insert(LossHead::MlmDec, v);
            }
        }
        let total = total_loss(&mut g.tape, &parts, &self.cfg.loss, &self.enabled)?;
        let mut values: BTreeMap<String, f64> = parts
            .iter()
            .map(|(h, v)| (lowercase(*h), g.tape.scalar(*v) as f64))
            .collect();
        values.insert("total".into(), g.tape.scalar(total) as f64);
        if values.values().any(|v| !v.is_finite()) {
            return Err(self.dump_non_finite(epoch, index, refs, &values));
        }
        let logits = g.tape.value(fo.binder_logits).data().to_vec();
        let scores = refs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let binder = logits[2 * i + BINDER_CLASS] as f64;
                let other = logits[2 * i + 1 - BINDER_CLASS] as f64;
                (1.0 / (1.0 + (other - binder).exp()), r.label.is_binder())
            })
            .collect();
        let grads = g.tape.backward(total)?;
        let Graph { tape, .. } = g;
        let params = &mut self.model.params;
        params.zero_grad();
        params.accumulate(&tape, &grads);
        drop(tape);
        // heads outside the enabled set are never bound; they get a zero
        // gradient so the optimizer covers every parameter
        for p in params.iter_mut() {
            if p.grad.is_none() {
                p.grad = Some(Tensor::zeros(p.value.shape().to_vec()));
            }
        }
        self.optimizer.step(params)?;
        Ok(StepOutcome {
            parts: values,
            scores,
        })
    }

    fn dump_non_finite(
        &self,
        epoch: usize,
        index: usize,
        refs: &[&TokenizedRecord],
        values: &BTreeMap<String, f64>,
    ) -> Error {
        let path = self
            .out_dir
            .join(format!("nonfinite_epoch{epoch:04}_batch{index:04}.json"));
        let dump = json!({
            "epoch": epoch,
            "batch": index,
            "record_ids": refs.iter().map(|r| &r.record_id).collect::<Vec<_>>(),
            "loss": values.iter().map(|(k, v)| (k.clone(), format!("{v}"))).collect::<BTreeMap<_, _>>(),
        });
        let written = serde_json::to_string_pretty(&dump)
            .map_err(Error::from)
            .and_then(|s| fs::write(&path, s).map_err(Error::from));
        let note = match written {
            Ok(()) => format!("batch dumped to {}", path.display()),
            Err(e) => format!("dump failed: {e}"),
        };
        Error::NonFinite(format!(
            "loss at epoch {epoch}, batch {index}: {values:?}; {note}"
        ))
    }
}

fn eval_auc(model: &ModelGraph, records: &[TokenizedRecord]) -> Result<Option<f64>> {
    if records.is_empty() {
        return Ok(None);
    }
    let preds = model.infer(records, 128, false)?;
    let scores: Vec<(f64, bool)> = preds
        .iter()
        .map(|p| (p.p_bind, p.label.is_binder()))
        .collect();
    match roc_auc(&scores) {
        Ok(a) => Ok(Some(a)),
        Err(Error::Metric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The model `train_on` starts from: seeded initialization, label spaces
/// from the training split.
pub fn initial_model(cfg: &ExperimentConfig, data: &Datasets) -> Result<ModelGraph> {
    let spec = if cfg.fit_max_len {
        fill_max_len(&cfg.arch, data)
    } else {
        cfg.arch.clone()
    };
    ModelGraph::build(spec, LabelSpaces::from_records(&data.train), cfg.seed)
}

/// Trains one model on `data.train`, validating on `data.validation` and
/// scoring explanation quality on `data.explain`, writing `metrics.jsonl`,
/// checkpoints and `ledger.json` under `out_dir`.
pub fn train_on(
    cfg: &ExperimentConfig,
    data: &Datasets,
    fold: Option<usize>,
    out_dir: &Path,
) -> Result<TrainedRun> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Ingest("training set is empty".into()));
    }
    let model = initial_model(cfg, data)?;
    let pairs = model.attention_pairs()?;
    let can_explain =
        !data.explain.is_empty() && QUALITY_DIRECTIONS.iter().all(|d| pairs.contains(d));
    if cfg.selection == SelectionStrategy::ExplanationBased && !can_explain {
        let need: Vec<String> = QUALITY_DIRECTIONS
            .iter()
            .map(|(q, k)| format!("{q}->{k}"))
            .collect();
        return Err(Error::Config(format!(
            "explanation-based selection needs a held-out explanation set and attention for [{}]",
            need.join(", ")
        )));
    }
    let train_tok = model.tokenize(&data.train)?;
    let val_tok = model.tokenize(&data.validation)?;
    let explain_tok = model.tokenize(&data.explain)?;
    let enabled: BTreeSet<LossHead> = cfg
        .loss
        .enabled
        .clone()
        .unwrap_or_else(|| model.spec.loss_heads.clone());
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    let mut metrics = BufWriter::new(File::create(out_dir.join("metrics.jsonl"))?);
    let explain_cfg = ExplainConfig {
        t: cfg.t,
        t_dec: cfg.t_dec,
        ..Default::default()
    };
    let mut trainer = Trainer {
        cfg,
        model,
        optimizer: AdamW::new(AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        }),
        enabled,
        rng: ChaCha8Rng::seed_from_u64(
            cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x7472_6169_6e,
        ),
        out_dir,
    };
    let mut ledger = RunLedger {
        fold,
        selection_start_epoch: cfg.selection_start_epoch,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..train_tok.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut trainer.rng);
        let mut losses = LossAccumulator::default();
        let mut auc = AucAccumulator::default();
        for (index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&TokenizedRecord> = chunk.iter().map(|&i| &train_tok[i]).collect();
            let recs: Vec<&BindingRecord> = chunk.iter().map(|&i| &data.train[i]).collect();
            let out = trainer.step(epoch, index, &refs, &recs)?;
            losses.add(&out.parts, chunk.len());
            auc.extend(out.scores);
        }
        let model = &trainer.model;
        let mut row = EpochRow {
            epoch,
            fold,
            loss: losses.means(),
            roc_auc_train: auc.auc().ok(),
            roc_auc_val: eval_auc(model, &val_tok)?,
            roc_auc_train_eval: None,
            explanation_quality: None,
            checkpoint: None,
        };
        if cfg.is_eval_point(epoch) {
            row.roc_auc_train_eval = eval_auc(model, &train_tok)?;
            if can_explain {
                row.explanation_quality =
                    explanation_quality(model, &explain_tok, &data.ground_truth, &explain_cfg)?
                        .value;
            }
            let rel = PathBuf::from("checkpoints").join(format!("epoch_{epoch:04}.ckpt"));
            model.save(
                &out_dir.join(&rel),
                Some(epoch),
                serde_json::to_value(&row)?,
            )?;
            row.checkpoint = Some(rel);
        }
        serde_json::to_writer(&mut metrics, &row)?;
        metrics.write_all(b"\n")?;
        metrics.flush()?;
        ledger.rows.push(row);
    }
    for strategy in [
        SelectionStrategy::LossBased,
        SelectionStrategy::ExplanationBased,
    ] {
        if let Ok(s) = select_checkpoint(&ledger, strategy) {
            ledger.selections.push(s);
        }
    }
    ledger.write(&out_dir.join("ledger.json"))?;
    Ok(TrainedRun {
        ledger,
        model: trainer.model,
        output_dir: out_dir.to_path_buf(),
    })
}
