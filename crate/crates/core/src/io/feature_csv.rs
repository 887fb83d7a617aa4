//! Feature CSV: `#` metadata lines, a header row, then one row per video.
//!
//! ```text
//! # fingerprint=3f2a9c0e5b7d1142
//! # bank=speeds=[0.5,1];directions=[0,...];envelope=moving;...
//! "path","label","v=0.5;theta=0",...
//! "videos/a","fire",1.25e3,...
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::classify::{LabeledDataset, LabeledItem};
use crate::error::{Error, Result};
use crate::features::{BankConfig, FeatureVector};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub fingerprint: String,
    /// Canonical bank description ([`BankConfig::describe`]).
    pub bank: String,
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(bank: &BankConfig) -> Self {
        FeatureTable {
            fingerprint: bank.fingerprint(),
            bank: bank.describe(),
            columns: bank.column_labels(),
            rows: Vec::new(),
        }
    }

    pub fn contains(&self, path: &str) -> bool {
        self.rows.iter().any(|r| r.path == path)
    }

    pub fn to_dataset(&self) -> Result<LabeledDataset> {
        let items = self
            .rows
            .iter()
            .map(|r| {
                Ok(LabeledItem::new(
                    FeatureVector::new(r.values.clone(), self.fingerprint.clone())?,
                    r.label.clone(),
                    r.path.clone(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(items)
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .has_headers(false)
        .from_writer(out)
}

fn record(row: &FeatureRow) -> Vec<String> {
    let mut fields = vec![row.path.clone(), row.label.clone()];
    fields.extend(row.values.iter().map(|v| format!("{v:e}")));
    fields
}

pub fn write_feature_csv(path: impl AsRef<Path>, table: &FeatureTable) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "# fingerprint={}", table.fingerprint)?;
    writeln!(file, "# bank={}", table.bank)?;
    let mut w = writer(file);
    let mut header = vec!["path".to_string(), "label".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for row in &table.rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows to an existing file written by [`write_feature_csv`].
pub fn append_feature_rows(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<()> {
    let file = OpenOptions::new().append(true).open(path)?;
    let mut w = writer(file);
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut fingerprint = None;
    let mut bank = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let Some(meta) = line.strip_prefix('#') else { break };
        let meta = meta.trim();
        if let Some(fp) = meta.strip_prefix("fingerprint=") {
            fingerprint = Some(fp.trim().to_string());
        } else if let Some(b) = meta.strip_prefix("bank=") {
            bank = b.trim().to_string();
        }
    }
    let fingerprint =
        fingerprint.ok_or_else(|| Error::format(format!("{} has no '# fingerprint=' line", path.display())))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "path" || &header[1] != "label" {
        return Err(Error::format(
            "feature header must start with path,label and list at least one feature",
        ));
    }
    let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = n + 1;
        if rec.len() != header.len() {
            return Err(Error::format(format!(
                "row {line} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(format!("row {line}: '{f}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            path: rec[0].to_string(),
            label: rec[1].to_string(),
            values,
        });
    }
    Ok(FeatureTable {
        fingerprint,
        bank,
        columns,
        rows,
    })
}
