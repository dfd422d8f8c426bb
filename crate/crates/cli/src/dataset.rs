//! Tab-separated expression tables: header row, item id first, numeric
//! measurements, optional annotation columns.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub ids: Vec<String>,
    /// Names of the measurement columns.
    pub columns: Vec<String>,
    /// Row-major `n × samples` measurements.
    pub values: Vec<f64>,
    /// `(column name, per-item value)` for each annotation column.
    pub annotations: Vec<(String, Vec<String>)>,
}

impl DatasetTable {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn samples(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = self.samples();
        &self.values[i * s..(i + 1) * s]
    }

    pub fn annotation(&self, name: &str) -> Option<&[String]> {
        self.annotations
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Loads a table. Columns named in `annotation_columns` are kept as text;
/// every other column after the id must be numeric. Duplicate ids get a
/// `#2`, `#3`, ... suffix and a warning.
pub fn load_dataset(path: &Path, annotation_columns: &[String]) -> Result<(DatasetTable, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < 2 {
        bail!("{}: need an id column and at least one measurement column", path.display());
    }
    for a in annotation_columns {
        if !header[1..].contains(a) {
            bail!("{}: annotation column '{a}' not found in header", path.display());
        }
    }
    let is_annotation: Vec<bool> = header.iter().map(|h| annotation_columns.contains(h)).collect();
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(c, _)| !is_annotation[*c])
        .map(|(_, h)| h.clone())
        .collect();
    if columns.is_empty() {
        bail!("{}: no measurement columns", path.display());
    }

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut notes: Vec<Vec<String>> = vec![Vec::new(); annotation_columns.len()];
    let mut warnings = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.with_context(|| format!("{}: row {row}: unreadable", path.display()))?;
        if record.len() != header.len() {
            bail!(
                "{}: row {row}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            );
        }
        let raw_id = record[0].trim().to_string();
        let count = seen.entry(raw_id.clone()).or_insert(0);
        *count += 1;
        let id = if *count == 1 {
            raw_id
        } else {
            let renamed = format!("{raw_id}#{count}");
            warnings.push(format!("row {row}: duplicate id '{raw_id}' renamed to '{renamed}'"));
            renamed
        };
        ids.push(id);
        for (c, cell) in record.iter().enumerate().skip(1) {
            let cell = cell.trim();
            if is_annotation[c] {
                let k = annotation_columns.iter().position(|a| *a == header[c]).expect("annotation");
                notes[k].push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).with_context(|| {
                format!(
                    "{}: row {row}, column {} ('{}'): '{cell}' is not a number",
                    path.display(),
                    c + 1,
                    header[c]
                )
            })?;
            values.push(v);
        }
    }
    if ids.len() < 2 {
        bail!("{}: need at least two items, found {}", path.display(), ids.len());
    }
    let annotations = annotation_columns.iter().cloned().zip(notes).collect();
    Ok((
        DatasetTable {
            ids,
            columns,
            values,
            annotations,
        },
        warnings,
    ))
}
