use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Datasets, ExperimentConfig, SelectionStrategy};
use super::run::{select_checkpoint, train_on, RunLedger};
use crate::data::{kfold_split, BindingRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    /// Epoch whose validation AUC is reported: the selected checkpoint, or
    /// the last epoch when nothing was selectable.
    pub epoch: usize,
    pub roc_auc_val: Option<f64>,
    pub ledger: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KfoldReport {
    pub strategy: SelectionStrategy,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean: Option<f64>,
    /// Sample (n-1) standard deviation.
    pub std: Option<f64>,
    /// `mean±std` with three decimals.
    pub summary: Option<String>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct KfoldRun {
    pub report: KfoldReport,
    pub ledgers: Vec<RunLedger>,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}±{std:.3}")
}

fn audit(fold: usize, train: &[BindingRecord], validation: &[BindingRecord]) -> Result<()> {
    let ids: HashSet<&str> = train.iter().map(|r| r.record_id.as_str()).collect();
    if let Some(r) = validation
        .iter()
        .find(|r| ids.contains(r.record_id.as_str()))
    {
        return Err(Error::Split(format!(
            "fold {fold}: validation record {} is also in training",
            r.record_id
        )));
    }
    Ok(())
}

impl KfoldReport {
    fn refresh(&mut self) {
        let vals: Vec<f64> = self.folds.iter().filter_map(|f| f.roc_auc_val).collect();
        let agg = if vals.len() == self.folds.len() {
            mean_std(&vals)
        } else {
            None
        };
        self.mean = agg.map(|a| a.0);
        self.std = agg.map(|a| a.1);
        self.summary = agg.map(|(m, s)| format_mean_std(m, s));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(
            dir.join("kfold_report.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}

/// k-fold cross-validation over every labeled record of the configured
/// data. Fold `i` trains with seed `seed + i` under `output_dir/fold_i`.
/// The report is rewritten after each fold, so a failure leaves the
/// finished folds on disk.
pub fn run_kfold(cfg: &ExperimentConfig) -> Result<KfoldRun> {
    cfg.validate()?;
    let data = Datasets::load(&cfg.data)?;
    run_kfold_on(cfg, &data)
}

pub fn run_kfold_on(cfg: &ExperimentConfig, data: &Datasets) -> Result<KfoldRun> {
    let all = data.all_records();
    let folds = kfold_split(&all, cfg.folds, cfg.seed)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut report = KfoldReport {
        strategy: cfg.selection,
        k: cfg.folds,
        folds: Vec::new(),
        mean: None,
        std: None,
        summary: None,
        complete: false,
        error: None,
    };
    let explain_n = data.synth.as_ref().map(|s| s.explain_n);
    let mut ledgers = Vec::new();
    for fold in &folds {
        let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
        let (train, validation) = (pick(&fold.train), pick(&fold.validation));
        // synthetic runs explain on the fold's own held-out records
        let explain = match explain_n {
            Some(n) => validation
                .iter()
                .filter(|r| data.ground_truth.contains_key(&r.record_id))
                .take(n)
                .cloned()
                .collect(),
            None => data.explain.clone(),
        };
        let fold_data = Datasets {
            train,
            validation,
            explain,
            ground_truth: data.ground_truth.clone(),
            synth: data.synth.clone(),
        };
        let dir = cfg.output_dir.join(format!("fold_{}", fold.index));
        let outcome = audit(fold.index, &fold_data.train, &fold_data.validation).and_then(|_| {
            let fold_cfg = ExperimentConfig {
                seed: cfg.seed + fold.index as u64,
                output_dir: dir.clone(),
                ..cfg.clone()
            };
            train_on(&fold_cfg, &fold_data, Some(fold.index), &dir)
        });
        let run = match outcome {
            Ok(run) => run,
            Err(e) => {
                report.error = Some(format!("fold {}: {e}", fold.index));
                report.write(&cfg.output_dir)?;
                return Err(e);
            }
        };
        let ledger = run.ledger;
        let epoch = match select_checkpoint(&ledger, cfg.selection) {
            Ok(s) => s.epoch,
            Err(_) => ledger.rows.last().map_or(0, |r| r.epoch),
        };
        report.folds.push(FoldResult {
            fold: fold.index,
            n_train: fold_data.train.len(),
            n_validation: fold_data.validation.len(),
            epoch,
            roc_auc_val: ledger.row(epoch).and_then(|r| r.roc_auc_val),
            ledger: dir.join("ledger.json"),
        });
        report.refresh();
        report.write(&cfg.output_dir)?;
        ledgers.push(ledger);
    }
    report.complete = true;
    report.write(&cfg.output_dir)?;
    Ok(KfoldRun { report, ledgers })
}

/// Fold values recomputed from the ledgers, keyed by fold.
pub fn fold_values(report: &KfoldReport, ledgers: &[RunLedger]) -> BTreeMap<usize, Option<f64>> {
    report
        .folds
        .iter()
        .zip(ledgers)
        .map(|(f, l)| (f.fold, l.row(f.epoch).and_then(|r| r.roc_auc_val)))
        .collect()
}
