use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::vocab::{Modality, Vocabulary};
use crate::error::{Error, Result};

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub enum MhcClass {
    I,
    II,
    #[default]
    NA,
}

impl MhcClass {
    pub fn parse(s: &str) -> MhcClass {
        let norm: String = s
            .trim()
            .to_ascii_uppercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        match norm.trim_start_matches("MHC") {
            "I" | "1" => MhcClass::I,
            "II" | "2" => MhcClass::II,
            _ => MhcClass::NA,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Binder,
    Nonbinder,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "binder" | "positive" | "pos" | "true" | "yes" => Some(Label::Binder),
            "0" | "nonbinder" | "non-binder" | "negative" | "neg" | "false" | "no" => {
                Some(Label::Nonbinder)
            }
            _ => None,
        }
    }

    pub fn is_binder(self) -> bool {
        self == Label::Binder
    }
}

/// One TCR-pMHC example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingRecord {
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcr_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcr_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr1a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr2a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr3a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr1b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr2b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr3b: Option<String>,
    pub epitope: String,
    #[serde(default)]
    pub mhc_class: MhcClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mhc_allele: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ja: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jb: Option<String>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
}

impl BindingRecord {
    pub fn new(record_id: impl Into<String>, epitope: impl Into<String>, label: Label) -> Self {
        BindingRecord {
            record_id: record_id.into(),
            tcr_a: None,
            tcr_b: None,
            cdr1a: None,
            cdr2a: None,
            cdr3a: None,
            cdr1b: None,
            cdr2b: None,
            cdr3b: None,
            epitope: epitope.into(),
            mhc_class: MhcClass::NA,
            mhc_allele: None,
            va: None,
            ja: None,
            vb: None,
            jb: None,
            label,
            species: None,
        }
    }

    /// Sequence for `m`, treating empty strings as absent.
    pub fn sequence(&self, m: Modality) -> Option<&str> {
        let s = match m {
            Modality::TcrA => self.tcr_a.as_deref(),
            Modality::TcrB => self.tcr_b.as_deref(),
            Modality::Cdr1a => self.cdr1a.as_deref(),
            Modality::Cdr2a => self.cdr2a.as_deref(),
            Modality::Cdr3a => self.cdr3a.as_deref(),
            Modality::Cdr1b => self.cdr1b.as_deref(),
            Modality::Cdr2b => self.cdr2b.as_deref(),
            Modality::Cdr3b => self.cdr3b.as_deref(),
            Modality::Epitope => Some(self.epitope.as_str()),
        };
        s.filter(|s| !s.is_empty())
    }

    pub fn sequence_mut(&mut self, m: Modality) -> Option<&mut Option<String>> {
        Some(match m {
            Modality::TcrA => &mut self.tcr_a,
            Modality::TcrB => &mut self.tcr_b,
            Modality::Cdr1a => &mut self.cdr1a,
            Modality::Cdr2a => &mut self.cdr2a,
            Modality::Cdr3a => &mut self.cdr3a,
            Modality::Cdr1b => &mut self.cdr1b,
            Modality::Cdr2b => &mut self.cdr2b,
            Modality::Cdr3b => &mut self.cdr3b,
            Modality::Epitope => return None,
        })
    }

    /// Identity of the TCR side (chains, CDRs and V/J alleles).
    pub fn tcr_key(&self) -> String {
        [
            &self.tcr_a,
            &self.tcr_b,
            &self.cdr1a,
            &self.cdr2a,
            &self.cdr3a,
            &self.cdr1b,
            &self.cdr2b,
            &self.cdr3b,
            &self.va,
            &self.ja,
            &self.vb,
            &self.jb,
        ]
        .iter()
        .map(|f| f.as_deref().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("|")
    }

    /// Copies the TCR side of `donor` onto `self`.
    pub fn set_tcr_from(&mut self, donor: &BindingRecord) {
        self.tcr_a = donor.tcr_a.clone();
        self.tcr_b = donor.tcr_b.clone();
        self.cdr1a = donor.cdr1a.clone();
        self.cdr2a = donor.cdr2a.clone();
        self.cdr3a = donor.cdr3a.clone();
        self.cdr1b = donor.cdr1b.clone();
        self.cdr2b = donor.cdr2b.clone();
        self.cdr3b = donor.cdr3b.clone();
        self.va = donor.va.clone();
        self.ja = donor.ja.clone();
        self.vb = donor.vb.clone();
        self.jb = donor.jb.clone();
    }

    /// Validation flags; problems are reported, never fatal (except an
    /// empty epitope, which ingestion rejects before this point).
    pub fn flags(&self) -> Vec<String> {
        let vocab = Vocabulary;
        let mut flags = Vec::new();
        for m in Modality::ALL {
            if let Some(s) = self.sequence(m) {
                if s.chars().any(|c| vocab.residue_id(c).is_none()) {
                    flags.push(format!("{}_noncanonical", m.name().to_ascii_lowercase()));
                }
            }
        }
        for (chain, cdr3, name) in [
            (&self.tcr_a, &self.cdr3a, "cdr3a_mismatch"),
            (&self.tcr_b, &self.cdr3b, "cdr3b_mismatch"),
        ] {
            if let (Some(chain), Some(cdr3)) = (chain, cdr3) {
                if !chain.is_empty() && !cdr3.is_empty() && !chain.contains(cdr3.as_str()) {
                    flags.push(name.to_string());
                }
            }
        }
        flags
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Ingest(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
