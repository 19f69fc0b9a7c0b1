use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tcrlab::data::{
    generate_synthetic, read_jsonl, write_jsonl, BindingRecord, BindingRule, Modality, SynthConfig,
};
use tcrlab::train::{
    evaluate, run_kfold, select_checkpoint, train, ExperimentConfig, RunLedger, SelectionStrategy,
};
use tcrlab::xai::{
    dataset_brhr, read_ground_truth, write_brhr_csv, write_importance_jsonl, ExplainConfig,
    ImportanceSide,
};
use tcrlab::zoo::{ArchitectureSpec, Direction, EpitopeQueries, ExtraFeatures, ModelGraph};
use tcrlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tcrlab",
    version,
    about = "TCR-pMHC binding models with attention-based explanation metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a JSON experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// k-fold cross-validation from a JSON experiment config.
    Kfold {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// ROC-AUC (overall and per epitope) of a checkpoint, plus BRHR with ground truth.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        t: f64,
    },
    /// Importance vectors, BRHR table and region intensity of a checkpoint.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        t: f64,
        #[arg(long, default_value_t = 0.5)]
        t_dec: f64,
        /// Score the query residues instead of the attended ones.
        #[arg(long)]
        query_side: bool,
        #[arg(long)]
        no_smooth: bool,
        /// Directory for brhr.csv, importance.jsonl and regions.json.
        #[arg(long, default_value = "explain_out")]
        out: PathBuf,
    },
    /// Pick a checkpoint from a run ledger.
    Select {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        strategy: Strategy,
    },
    /// Write a planted-motif dataset and its distance ground truth.
    Synth {
        #[arg(long)]
        rule: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth_out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Loss,
    Explanation,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchName {
    EncConcat,
    Xprobe,
    Egm0,
    Egm1,
    Egm2,
}

/// Replaces the config's architecture when `--arch` is given.
#[derive(Args)]
struct ArchArgs {
    #[arg(long)]
    arch: Option<ArchName>,
    /// enc-concat modalities, comma separated.
    #[arg(long, value_delimiter = ',')]
    modalities: Vec<String>,
    /// xprobe query modality.
    #[arg(long)]
    a: Option<String>,
    /// xprobe attended modality.
    #[arg(long)]
    b: Option<String>,
    #[arg(long, default_value = "a-to-b")]
    direction: String,
    #[arg(long, default_value = "none")]
    extra: String,
    #[arg(long, default_value = "enriched")]
    epitope_queries: String,
}

impl ArchArgs {
    fn spec(&self, current: &ArchitectureSpec) -> Result<Option<ArchitectureSpec>> {
        let Some(name) = self.arch else {
            return Ok(None);
        };
        let queries = match self.epitope_queries.as_str() {
            "enriched" => EpitopeQueries::Enriched,
            "raw" => EpitopeQueries::Raw,
            q => {
                return Err(Error::Config(format!(
                    "unknown --epitope-queries {q} (enriched or raw)"
                )))
            }
        };
        let modality = |flag: &str, v: &Option<String>| -> Result<Modality> {
            v.as_deref()
                .ok_or_else(|| Error::Config(format!("xprobe needs --{flag}")))?
                .parse()
        };
        let mut spec = match name {
            ArchName::EncConcat => {
                let names: Vec<&str> = self.modalities.iter().map(String::as_str).collect();
                ArchitectureSpec::enc_concat_named(&names)?
            }
            ArchName::Xprobe => {
                let direction = match self.direction.as_str() {
                    "a-to-b" => Direction::AToB,
                    "b-to-a" => Direction::BToA,
                    "bidir" => Direction::Bidir,
                    d => {
                        return Err(Error::Config(format!(
                            "unknown --direction {d} (a-to-b, b-to-a or bidir)"
                        )))
                    }
                };
                let extra = match self.extra.as_str() {
                    "none" => ExtraFeatures::None,
                    "query" => ExtraFeatures::Query,
                    "attended" => ExtraFeatures::Attended,
                    e => {
                        return Err(Error::Config(format!(
                            "unknown --extra {e} (none, query or attended)"
                        )))
                    }
                };
                ArchitectureSpec::xprobe(
                    modality("a", &self.a)?,
                    modality("b", &self.b)?,
                    direction,
                    extra,
                )?
            }
            ArchName::Egm0 => ArchitectureSpec::egm0(),
            ArchName::Egm1 => ArchitectureSpec::egm1(queries),
            ArchName::Egm2 => ArchitectureSpec::egm2(queries),
        };
        spec.block = current.block;
        spec.loss_heads = current.loss_heads.clone();
        spec.max_len = current.max_len.clone();
        Ok(Some(spec))
    }
}

fn load_config(path: &Path, arch: &ArchArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(spec) = arch.spec(&cfg.arch)? {
        cfg.arch = spec;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, arch } => {
            let cfg = load_config(&config, &arch)?;
            let run = train(&cfg)?;
            let last = run.ledger.rows.last();
            print_json(&json!({
                "output_dir": run.output_dir,
                "epochs": run.ledger.rows.len(),
                "final": last,
                "selections": run.ledger.selections,
            }))
        }
        Command::Kfold { config, arch } => {
            let cfg = load_config(&config, &arch)?;
            let run = run_kfold(&cfg)?;
            print_json(&serde_json::to_value(&run.report)?)
        }
        Command::Evaluate {
            checkpoint,
            data,
            ground_truth,
            t,
        } => {
            let records: Vec<BindingRecord> = read_jsonl(&data)?;
            let gt = ground_truth.as_deref().map(read_ground_truth).transpose()?;
            let cfg = ExplainConfig {
                t,
                ..Default::default()
            };
            let report = evaluate(&checkpoint, &records, gt.as_ref(), &cfg)?;
            print_json(&json!({
                "n_records": report.n_records,
                "roc_auc": report.roc_auc,
                "per_epitope": report.per_epitope,
                "brhr": report.brhr.as_ref().map(|b| &b.cells),
                "warnings": report.brhr.as_ref().map(|b| &b.warnings),
            }))
        }
        Command::Explain {
            checkpoint,
            data,
            ground_truth,
            t,
            t_dec,
            query_side,
            no_smooth,
            out,
        } => {
            let (model, _) = ModelGraph::load(&checkpoint)?;
            let records: Vec<BindingRecord> = read_jsonl(&data)?;
            let gt = read_ground_truth(&ground_truth)?;
            let cfg = ExplainConfig {
                t,
                t_dec,
                smooth: !no_smooth,
                side: if query_side {
                    ImportanceSide::Query
                } else {
                    ImportanceSide::Attended
                },
                ..Default::default()
            };
            let toks = model.tokenize(&records)?;
            let table = dataset_brhr(&model, &toks, &gt, None, &cfg)?;
            std::fs::create_dir_all(&out)?;
            write_brhr_csv(&out.join("brhr.csv"), &table.cells)?;
            write_importance_jsonl(&out.join("importance.jsonl"), &table.importances)?;
            std::fs::write(
                out.join("regions.json"),
                serde_json::to_string_pretty(&table.regions)?,
            )?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&json!({ "out": out, "cells": table.cells }))
        }
        Command::Select { ledger, strategy } => {
            let l = RunLedger::read(&ledger)?;
            let strategy = match strategy {
                Strategy::Loss => SelectionStrategy::LossBased,
                Strategy::Explanation => SelectionStrategy::ExplanationBased,
            };
            let s = select_checkpoint(&l, strategy)?;
            let base = ledger.parent().unwrap_or(Path::new("."));
            print_json(&json!({
                "strategy": s.strategy,
                "epoch": s.epoch,
                "score": s.score,
                "checkpoint": base.join(&s.checkpoint),
            }))
        }
        Command::Synth { rule, n, seed, out } => {
            let rule: BindingRule = rule.parse()?;
            let cfg = SynthConfig {
                n,
                rule,
                ..Default::default()
            };
            cfg.validate()?;
            let ds = generate_synthetic(&cfg, seed)?;
            write_jsonl(&out.join("records.jsonl"), &ds.records)?;
            write_jsonl(&out.join("ground_truth.jsonl"), &ds.ground_truth)?;
            std::fs::write(
                out.join("motifs.json"),
                serde_json::to_string_pretty(&ds.motifs)?,
            )?;
            let binders = ds.records.iter().filter(|r| r.label.is_binder()).count();
            let counts: BTreeMap<&str, usize> =
                [("records", ds.records.len()), ("binders", binders)]
                    .into_iter()
                    .collect();
            print_json(&json!({ "out": out, "rule": rule.name(), "counts": counts }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
