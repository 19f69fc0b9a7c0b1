use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tcrlab::blocks::BlockConfig;
use tcrlab::data::SynthConfig;
use tcrlab::train::{DataConfig, ExperimentConfig, SynthSource};
use tcrlab::zoo::{ArchitectureSpec, EpitopeQueries, LossHead};

fn tcrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcrlab"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_config(dir: &Path, lr: f64) -> String {
    let cfg = ExperimentConfig {
        arch: ArchitectureSpec::egm2(EpitopeQueries::Enriched)
            .with_block(BlockConfig {
                layers: 1,
                hidden: 8,
                heads: 1,
                ffn_mult: 2,
                dropout: 0.0,
            })
            .with_loss_heads(&[LossHead::Binder, LossHead::MlmEnc]),
        data: DataConfig {
            synth: Some(SynthSource {
                config: SynthConfig {
                    n: 48,
                    ..Default::default()
                },
                seed: 2,
                validation_fraction: 0.25,
                explain_n: 8,
            }),
            ..Default::default()
        },
        epochs: 2,
        batch_size: 16,
        lr,
        selection_start_epoch: 1,
        eval_every: 1,
        t_dec: 0.0,
        folds: 2,
        output_dir: dir.join("run"),
        ..Default::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn synth_train_select_evaluate_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth_dir = d.join("synth");
    let out = tcrlab(&[
        "synth",
        "--rule",
        "joint",
        "--n",
        "40",
        "--seed",
        "3",
        "--out",
        synth_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["counts"]["records"], 40);
    for f in ["records.jsonl", "ground_truth.jsonl", "motifs.json"] {
        assert!(synth_dir.join(f).exists(), "{f}");
    }

    let config = write_config(d, 1e-3);
    let out = tcrlab(&["train", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["epochs"], 2);
    let ledger = d.join("run/ledger.json");
    assert!(d.join("run/metrics.jsonl").exists());

    let out = tcrlab(&[
        "select",
        "--ledger",
        ledger.to_str().unwrap(),
        "--strategy",
        "explanation",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let chosen = stdout_json(&out);
    let ckpt = chosen["checkpoint"].as_str().unwrap().to_string();
    assert!(Path::new(&ckpt).exists(), "{ckpt}");

    let records = synth_dir.join("records.jsonl");
    let gt = synth_dir.join("ground_truth.jsonl");
    let (records, gt) = (records.to_str().unwrap(), gt.to_str().unwrap());
    let out = tcrlab(&[
        "evaluate",
        "--checkpoint",
        &ckpt,
        "--data",
        records,
        "--ground-truth",
        gt,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["n_records"], 40);
    assert!(report["roc_auc"].as_f64().unwrap() >= 0.0);

    let explain_dir = d.join("explain");
    let out = tcrlab(&[
        "explain",
        "--checkpoint",
        &ckpt,
        "--data",
        records,
        "--ground-truth",
        gt,
        "--t",
        "0.25",
        "--t-dec",
        "0",
        "--out",
        explain_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(explain_dir.join("brhr.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "modality,partner,t,mean_brhr,n_records"
    );
    assert!(csv.lines().count() > 1);
    let first = std::fs::read_to_string(explain_dir.join("importance.jsonl")).unwrap();
    let first: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(first["scores"].is_array());
}

#[test]
fn arch_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 1e-3);
    let out = tcrlab(&[
        "train", "--config", &config, "--arch", "xprobe", "--a", "EPITOPE", "--b", "CDR3B",
        "--extra", "query",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ledger: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/ledger.json")).unwrap())
            .unwrap();
    assert!(ledger["rows"][0].get("explanation_quality").is_none());
    let out = tcrlab(&[
        "train", "--config", &config, "--arch", "xprobe", "--a", "EPITOPE",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn kfold_prints_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 1e-3);
    let out = tcrlab(&["kfold", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    assert!(report["summary"].as_str().unwrap().contains('±'));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("absent.json");
    assert_eq!(
        code(&tcrlab(&["train", "--config", missing.to_str().unwrap()])),
        2
    );
    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"epochs": 0}"#).unwrap();
    assert_eq!(
        code(&tcrlab(&["train", "--config", bad.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&tcrlab(&["synth", "--rule", "both", "--n", "10"])), 2);

    let config = write_config(d, 1e30);
    let out = tcrlab(&["train", "--config", &config]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));

    let config = write_config(d, 1e-3);
    assert_eq!(code(&tcrlab(&["train", "--config", &config])), 0);
    let ckpt = d.join("run/checkpoints/epoch_0002.ckpt");
    let garbage = d.join("garbage.jsonl");
    std::fs::write(&garbage, "{not json\n").unwrap();
    let out = tcrlab(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        garbage.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let no_ckpt = d.join("none.ckpt");
    let out = tcrlab(&[
        "evaluate",
        "--checkpoint",
        no_ckpt.to_str().unwrap(),
        "--data",
        garbage.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}
