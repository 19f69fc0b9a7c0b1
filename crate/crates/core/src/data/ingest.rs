use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{BindingRecord, Label, MhcClass};
use crate::error::{Error, Result};

/// Record fields a column can map onto.
pub const FIELDS: [&str; 19] = [
    "record_id",
    "tcr_a",
    "tcr_b",
    "cdr1a",
    "cdr2a",
    "cdr3a",
    "cdr1b",
    "cdr2b",
    "cdr3b",
    "epitope",
    "mhc_class",
    "mhc_allele",
    "va",
    "ja",
    "vb",
    "jb",
    "label",
    "species",
    // accepted but ignored; lets exports keep a free-text column mapped
    "comment",
];

/// Maps record fields to header names of a delimited export.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    /// Field delimiter; inferred from the extension (`.csv` → `,`, else tab)
    /// when unset.
    pub delimiter: Option<char>,
    /// `field -> header`. Unmapped fields fall back to a header of the same
    /// name when present.
    pub columns: BTreeMap<String, String>,
    /// Label for files without a label column (e.g. positive-only exports).
    pub default_label: Option<Label>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedRecord {
    pub record_id: String,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub file: String,
    pub rows_read: usize,
    pub records: usize,
    pub dropped: Vec<DroppedRow>,
    pub flagged: Vec<FlaggedRecord>,
}

/// Reads a delimited file into validated records.
pub fn ingest_tsv(
    path: &Path,
    schema: &SchemaConfig,
) -> Result<(Vec<BindingRecord>, IngestReport)> {
    for field in schema.columns.keys() {
        if !FIELDS.contains(&field.as_str()) {
            return Err(Error::Schema(format!(
                "unknown field {field} in column mapping"
            )));
        }
    }
    let delimiter =
        schema
            .delimiter
            .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("csv") => ',',
                _ => '\t',
            });
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let position: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let mut column: HashMap<&str, usize> = HashMap::new();
    for field in FIELDS {
        let header = schema
            .columns
            .get(field)
            .map(String::as_str)
            .unwrap_or(field);
        match position.get(header) {
            Some(i) => {
                column.insert(field, *i);
            }
            None if schema.columns.contains_key(field) => {
                return Err(Error::Schema(format!(
                    "column {header} mapped to {field} is missing from {}",
                    path.display()
                )));
            }
            None => {}
        }
    }
    if !column.contains_key("epitope") {
        return Err(Error::Schema(format!(
            "{}: no epitope column",
            path.display()
        )));
    }
    if !column.contains_key("label") && schema.default_label.is_none() {
        return Err(Error::Schema(format!(
            "{}: no label column and no default_label",
            path.display()
        )));
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string();
    let mut report = IngestReport {
        file: path.display().to_string(),
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.dropped.push(DroppedRow {
                    row: row_no,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let get = |field: &str| -> Option<String> {
            column
                .get(field)
                .and_then(|i| row.get(*i))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("na"))
        };
        let Some(epitope) = get("epitope") else {
            report.dropped.push(DroppedRow {
                row: row_no,
                reason: "required field empty".into(),
            });
            continue;
        };
        let label = match get("label") {
            Some(s) => match Label::parse(&s) {
                Some(l) => l,
                None => {
                    report.dropped.push(DroppedRow {
                        row: row_no,
                        reason: format!("unparseable label {s:?}"),
                    });
                    continue;
                }
            },
            None => match schema.default_label {
                Some(l) => l,
                None => {
                    report.dropped.push(DroppedRow {
                        row: row_no,
                        reason: "required field empty".into(),
                    });
                    continue;
                }
            },
        };
        let record_id = get("record_id").unwrap_or_else(|| format!("{stem}:{row_no}"));
        if !seen_ids.insert(record_id.clone()) {
            report.dropped.push(DroppedRow {
                row: row_no,
                reason: format!("duplicate record_id {record_id}"),
            });
            continue;
        }
        let upper = |s: Option<String>| s.map(|s| s.to_ascii_uppercase());
        let mut rec = BindingRecord::new(record_id, epitope.to_ascii_uppercase(), label);
        rec.tcr_a = upper(get("tcr_a"));
        rec.tcr_b = upper(get("tcr_b"));
        rec.cdr1a = upper(get("cdr1a"));
        rec.cdr2a = upper(get("cdr2a"));
        rec.cdr3a = upper(get("cdr3a"));
        rec.cdr1b = upper(get("cdr1b"));
        rec.cdr2b = upper(get("cdr2b"));
        rec.cdr3b = upper(get("cdr3b"));
        rec.mhc_class = get("mhc_class").map_or(MhcClass::NA, |s| MhcClass::parse(&s));
        rec.mhc_allele = get("mhc_allele");
        rec.va = get("va");
        rec.ja = get("ja");
        rec.vb = get("vb");
        rec.jb = get("jb");
        rec.species = get("species");
        let flags = rec.flags();
        if !flags.is_empty() {
            report.flagged.push(FlaggedRecord {
                record_id: rec.record_id.clone(),
                flags,
            });
        }
        records.push(rec);
    }
    report.records = records.len();
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "ok.tsv",
            "cdr3b\tepitope\tlabel\nCASSL\tGILGFVFTL\t1\nCASRP\tNLVPMVATV\t0\nCATS\tGLCTLVAML\tbinder\n",
        );
        let (recs, report) = ingest_tsv(&p, &SchemaConfig::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(report.dropped.is_empty() && report.flagged.is_empty());
        assert_eq!(recs[1].label, Label::Nonbinder);
        assert_eq!(recs[0].record_id, "ok:1");
    }

    #[test]
    fn missing_epitope_row_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "m.tsv",
            "cdr3b\tepitope\tlabel\nCASSL\t\t1\nCASRP\tNLVPMVATV\t0\n",
        );
        let (recs, report) = ingest_tsv(&p, &SchemaConfig::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.dropped[0].reason, "required field empty");
    }

    #[test]
    fn cdr3_mismatch_keeps_record_with_flag() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "f.csv",
            "TRB,CDR3,Peptide\nAAACASSLGGG,CAST,GILGFVFTL\n",
        );
        let schema = SchemaConfig {
            columns: [("tcr_b", "TRB"), ("cdr3b", "CDR3"), ("epitope", "Peptide")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            default_label: Some(Label::Binder),
            ..Default::default()
        };
        let (recs, report) = ingest_tsv(&p, &schema).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.flagged[0].flags, vec!["cdr3b_mismatch".to_string()]);
    }

    #[test]
    fn missing_mapped_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.tsv", "cdr3b\tlabel\nCASSL\t1\n");
        assert!(matches!(
            ingest_tsv(&p, &SchemaConfig::default()),
            Err(Error::Schema(_))
        ));
        let schema = SchemaConfig {
            columns: [("epitope".to_string(), "Peptide".to_string())]
                .into_iter()
                .collect(),
            ..Default::default()
        };
        assert!(matches!(ingest_tsv(&p, &schema), Err(Error::Schema(_))));
    }
}
