use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, kfold_split, read_jsonl, BindingRecord, DistanceGroundTruth, SynthConfig,
};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::xai::read_ground_truth;
use crate::zoo::ArchitectureSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionStrategy {
    LossBased,
    ExplanationBased,
}

impl std::str::FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loss" | "loss_based" | "loss-based" => Ok(SelectionStrategy::LossBased),
            "explanation" | "explanation_based" | "explanation-based" => {
                Ok(SelectionStrategy::ExplanationBased)
            }
            _ => Err(Error::Config(format!(
                "unknown selection strategy {s:?} (expected loss or explanation)"
            ))),
        }
    }
}

/// Planted-motif data generated in-process and split into training and
/// held-out validation; the explanation subset is drawn from validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSource {
    pub config: SynthConfig,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Validation records (with ground truth) used for explanation quality.
    pub explain_n: usize,
}

impl Default for SynthSource {
    fn default() -> Self {
        SynthSource {
            config: SynthConfig::default(),
            seed: 0,
            validation_fraction: 0.2,
            explain_n: 200,
        }
    }
}

/// Record files (JSON lines of binding records) or a synthetic source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    /// Held-out records scored for explanation quality.
    pub explain: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub synth: Option<SynthSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub arch: ArchitectureSpec,
    pub loss: LossConfig,
    pub data: DataConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub selection: SelectionStrategy,
    pub selection_start_epoch: usize,
    pub eval_every: usize,
    pub t: f64,
    pub t_dec: f64,
    pub folds: usize,
    /// Fill modality lengths missing from `arch.max_len` from the data.
    pub fit_max_len: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arch: ArchitectureSpec::egm2(Default::default()),
            loss: LossConfig::default(),
            data: DataConfig::default(),
            seed: 0,
            epochs: 500,
            batch_size: 64,
            lr: 1e-4,
            weight_decay: 0.01,
            selection: SelectionStrategy::LossBased,
            selection_start_epoch: 300,
            eval_every: 10,
            t: 0.25,
            t_dec: 0.5,
            folds: 5,
            fit_max_len: true,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.selection_start_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "selection_start_epoch {} must be < epochs {}",
                self.selection_start_epoch, self.epochs
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(Error::Config(format!("t={} outside (0, 1]", self.t)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be >= 2, got {}",
                self.folds
            )));
        }
        if let Some(s) = &self.data.synth {
            s.config.validate()?;
            if !(s.validation_fraction > 0.0 && s.validation_fraction < 1.0) {
                return Err(Error::Config(
                    "validation_fraction must lie in (0, 1)".into(),
                ));
            }
        } else if self.data.train.is_none() {
            return Err(Error::Config(
                "data needs either a train path or a synth source".into(),
            ));
        }
        self.loss.validate()?;
        self.arch.validate()
    }

    /// Whether `epoch` (1-based) is an evaluation point of the selection
    /// window. The final epoch always is.
    pub fn is_eval_point(&self, epoch: usize) -> bool {
        epoch == self.epochs
            || (epoch >= self.selection_start_epoch
                && (epoch - self.selection_start_epoch).is_multiple_of(self.eval_every))
    }
}

/// Materialized records for one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Datasets {
    pub train: Vec<BindingRecord>,
    pub validation: Vec<BindingRecord>,
    pub explain: Vec<BindingRecord>,
    pub ground_truth: BTreeMap<String, DistanceGroundTruth>,
    /// Set when the records were generated in-process.
    pub synth: Option<SynthSource>,
}

impl Datasets {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        if let Some(s) = &cfg.synth {
            return Self::synthetic(s);
        }
        let train_path = cfg
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("data.train is required without a synth source".into()))?;
        let read = |p: &Option<PathBuf>| -> Result<Vec<BindingRecord>> {
            p.as_ref().map_or(Ok(Vec::new()), |p| read_jsonl(p))
        };
        let ground_truth = match &cfg.ground_truth {
            Some(p) => read_ground_truth(p)?,
            None => BTreeMap::new(),
        };
        let d = Datasets {
            train: read_jsonl(train_path)?,
            validation: read(&cfg.validation)?,
            explain: read(&cfg.explain)?,
            ground_truth,
            synth: None,
        };
        if let Some(r) = d
            .explain
            .iter()
            .find(|r| !d.ground_truth.contains_key(&r.record_id))
        {
            return Err(Error::Ingest(format!(
                "explanation record {} has no ground truth",
                r.record_id
            )));
        }
        Ok(d)
    }

    pub fn synthetic(s: &SynthSource) -> Result<Self> {
        let ds = generate_synthetic(&s.config, s.seed)?;
        let k = (1.0 / s.validation_fraction).round().max(2.0) as usize;
        let fold = kfold_split(&ds.records, k, s.seed)?.swap_remove(0);
        let pick = |idx: &[usize]| {
            idx.iter()
                .map(|&i| ds.records[i].clone())
                .collect::<Vec<_>>()
        };
        let validation = pick(&fold.validation);
        let explain = validation.iter().take(s.explain_n).cloned().collect();
        Ok(Datasets {
            train: pick(&fold.train),
            validation,
            explain,
            ground_truth: ds
                .ground_truth
                .into_iter()
                .map(|g| (g.record_id.clone(), g))
                .collect(),
            synth: Some(s.clone()),
        })
    }

    /// Every labeled record, for cross-validation.
    pub fn all_records(&self) -> Vec<BindingRecord> {
        let mut v = self.train.clone();
        v.extend(self.validation.iter().cloned());
        v
    }
}
