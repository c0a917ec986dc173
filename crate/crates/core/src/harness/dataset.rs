use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MaladyError, Result};
use crate::graph::FeatureMatrix;

/// On-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// One point per line, comma-separated decimals.
    Csv,
    /// Little-endian `u64 N`, `u64 d`, then `N * d` `f64` values row-major.
    Binary,
}

/// Which CSV column, if any, holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    None,
    #[default]
    Last,
    Index(usize),
}

/// Features plus dense labels `0..K` and the original label of each dense class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: Option<Vec<usize>>,
    pub label_values: Vec<i64>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.label_values.len()
    }
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> MaladyError {
    MaladyError::Format {
        path: path.to_path_buf(),
        line: line as u64,
        message: message.into(),
    }
}

fn parse_label(field: &str, path: &Path, line: usize) -> Result<i64> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(format_error(path, line, format!("label `{field}` is not an integer"))),
    }
}

/// Maps sorted distinct raw labels to `0..K`.
pub fn remap_labels(raw: &[i64]) -> (Vec<usize>, Vec<i64>) {
    let mut values = raw.to_vec();
    values.sort_unstable();
    values.dedup();
    let dense = raw
        .iter()
        .map(|v| values.binary_search(v).expect("value present"))
        .collect();
    (dense, values)
}

pub fn load_dataset(path: &Path, format: DataFormat, label_column: LabelColumn) -> Result<Dataset> {
    match format {
        DataFormat::Csv => load_csv(path, label_column),
        DataFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| MaladyError::io(path, e))?;
            Ok(Dataset {
                features: parse_binary(&bytes, path)?,
                labels: None,
                label_values: Vec::new(),
            })
        }
    }
}

fn load_csv(path: &Path, label_column: LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(format_error(
                    path,
                    line,
                    format!("expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        let label_at = match label_column {
            LabelColumn::None => None,
            LabelColumn::Last => Some(record.len() - 1),
            LabelColumn::Index(i) if i < record.len() => Some(i),
            LabelColumn::Index(i) => {
                return Err(format_error(path, line, format!("no label column {i}")));
            }
        };
        for (c, field) in record.iter().enumerate() {
            if Some(c) == label_at {
                raw_labels.push(parse_label(field, path, line)?);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| format_error(path, line, format!("`{field}` is not a number")))?;
                if !v.is_finite() {
                    return Err(format_error(path, line, format!("non-finite value `{field}`")));
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    let dims = width.unwrap_or(0) - usize::from(label_column != LabelColumn::None);
    if rows == 0 || dims == 0 {
        return Err(format_error(path, 0, "no feature values found"));
    }
    let features = FeatureMatrix::new(rows, dims, values)?;
    let (labels, label_values) = if label_column == LabelColumn::None {
        (None, Vec::new())
    } else {
        let (dense, values) = remap_labels(&raw_labels);
        (Some(dense), values)
    };
    Ok(Dataset {
        features,
        labels,
        label_values,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> MaladyError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => MaladyError::io(path, source),
        other => format_error(path, line, format!("{other:?}")),
    }
}

/// Parses the raw little-endian format; `line` in errors is the byte offset.
pub fn parse_binary(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let word = |offset: usize| -> Option<[u8; 8]> { bytes.get(offset..offset + 8)?.try_into().ok() };
    let (Some(n), Some(d)) = (word(0), word(8)) else {
        return Err(format_error(path, 0, "file is shorter than the 16-byte header"));
    };
    let (n, d) = (u64::from_le_bytes(n), u64::from_le_bytes(d));
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(16))
        .filter(|&c| c <= usize::MAX as u64)
        .ok_or_else(|| format_error(path, 0, format!("header {n} x {d} is too large")))?;
    if bytes.len() as u64 != expected {
        return Err(format_error(
            path,
            0,
            format!("header {n} x {d} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    FeatureMatrix::new(n as usize, d as usize, values)
}

pub fn write_binary(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * features.values().len());
    out.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(features.dims() as u64).to_le_bytes());
    for v in features.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Integer labels, one per line.
pub fn load_label_file(path: &Path) -> Result<(Vec<usize>, Vec<i64>)> {
    let text = fs::read_to_string(path).map_err(|e| MaladyError::io(path, e))?;
    let raw = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_label(l, path, i + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(remap_labels(&raw))
}

/// Writes features (and labels as the last column when given) as CSV.
pub fn write_csv(path: &Path, features: &FeatureMatrix, labels: Option<&[usize]>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for i in 0..features.rows() {
        let mut fields: Vec<String> = features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        writer.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| MaladyError::io(path, e))
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}
