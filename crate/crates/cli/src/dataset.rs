//! Two-column numeric input from delimited text.

use std::path::{Path, PathBuf};

use thiserror::Error;
use ucorr::RawSample;

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Csv {
        line: u64,
        #[source]
        source: csv::Error,
    },
    #[error("line {line}: expected at least {needed} columns, found {found}")]
    MissingColumn { line: u64, needed: usize, found: usize },
    #[error("line {line}, column {column}: '{field}' is not a number")]
    NotNumeric { line: u64, column: usize, field: String },
    #[error("line {line}, column {column}: non-finite value '{field}'")]
    NonFinite { line: u64, column: usize, field: String },
    #[error(
        "line {line}: cannot tell whether the first row is a header \
         (one selected field is numeric, the other is not); pass --has-header or fix the row"
    )]
    AmbiguousHeader { line: u64 },
    #[error("unsupported delimiter '{0}': use a single ASCII character, 'tab', or '\\t'")]
    Delimiter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// 1-based column indices.
    pub x_col: usize,
    pub y_col: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            x_col: 1,
            y_col: 2,
        }
    }
}

pub fn parse_delimiter(s: &str) -> Result<u8, DatasetError> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(DatasetError::Delimiter(s.to_owned())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub source: PathBuf,
    pub rows: Vec<(f64, f64)>,
    pub header: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_sample(&self) -> ucorr::Result<RawSample> {
        RawSample::from_pairs(&self.rows)
    }
}

enum Field {
    Number(f64),
    Text,
}

fn classify(field: &str) -> Field {
    match field.trim().parse::<f64>() {
        Ok(v) => Field::Number(v),
        Err(_) => Field::Text,
    }
}

pub fn read_dataset(path: &Path, opts: &ParseOptions) -> Result<(Dataset, Vec<u8>), DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let dataset = parse_dataset(&bytes, path, opts)?;
    Ok((dataset, bytes))
}

/// Parses delimited text. Blank lines are skipped. Without `has_header`, a
/// first row whose selected fields are both non-numeric is taken as a header.
pub fn parse_dataset(bytes: &[u8], source: &Path, opts: &ParseOptions) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(opts.delimiter)
        .from_reader(bytes);
    let needed = opts.x_col.max(opts.y_col);

    let mut rows = Vec::new();
    let mut header = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|source| DatasetError::Csv {
            line: source.position().map_or(0, |p| line_at(bytes, p.byte())),
            source,
        })?;
        let line = record.position().map_or(0, |p| line_at(bytes, p.byte()));
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() < needed {
            return Err(DatasetError::MissingColumn {
                line,
                needed,
                found: record.len(),
            });
        }
        let fields = [&record[opts.x_col - 1], &record[opts.y_col - 1]];
        let is_first = std::mem::replace(&mut first, false);
        if is_first && opts.has_header {
            header = Some(fields.iter().map(|f| f.trim().to_owned()).collect());
            continue;
        }
        let kinds = fields.map(classify);
        if is_first {
            match kinds {
                [Field::Text, Field::Text] => {
                    header = Some(fields.iter().map(|f| f.trim().to_owned()).collect());
                    continue;
                }
                [Field::Number(_), Field::Text] | [Field::Text, Field::Number(_)] => {
                    return Err(DatasetError::AmbiguousHeader { line });
                }
                _ => {}
            }
        }
        let mut values = [0.0; 2];
        for (k, (kind, field)) in kinds.iter().zip(fields).enumerate() {
            let column = if k == 0 { opts.x_col } else { opts.y_col };
            match *kind {
                Field::Number(v) if v.is_finite() => values[k] = v,
                Field::Number(_) => {
                    return Err(DatasetError::NonFinite {
                        line,
                        column,
                        field: field.trim().to_owned(),
                    })
                }
                Field::Text => {
                    return Err(DatasetError::NotNumeric {
                        line,
                        column,
                        field: field.trim().to_owned(),
                    })
                }
            }
        }
        rows.push((values[0], values[1]));
    }
    Ok(Dataset {
        source: source.to_owned(),
        rows,
        header,
    })
}

// The reader's line counter and record offsets both ignore skipped blank lines.
fn line_at(bytes: &[u8], offset: u64) -> u64 {
    let mut end = (offset as usize).min(bytes.len());
    while end < bytes.len() && matches!(bytes[end], b'\n' | b'\r') {
        end += 1;
    }
    1 + bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64
}

/// 64-bit FNV-1a hash of the raw input bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
