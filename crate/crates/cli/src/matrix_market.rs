//! Reading and writing MatrixMarket files: `array` (dense, column-major) and
//! `coordinate` (sparse, 1-based) layouts with `general` symmetry.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fixrank::{Mat, Observation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T, MmError> {
    Err(MmError::Parse {
        line,
        message: message.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Integer,
    Pattern,
}

/// Contents of a MatrixMarket file.
#[derive(Clone, Debug, PartialEq)]
pub enum MmData {
    Dense(Mat),
    /// Zero-based entries in file order; pattern files carry value 1.
    Coordinate {
        rows: usize,
        cols: usize,
        field: Field,
        entries: Vec<Observation>,
    },
}

pub fn read(path: &Path) -> Result<MmData, MmError> {
    let text = fs::read_to_string(path).map_err(|source| MmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<MmData, MmError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = match lines.next() {
        Some(h) => h,
        None => return parse_err(1, "empty file"),
    };
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return parse_err(hline, "expected header `%%MatrixMarket matrix <format> <field> general`");
    }
    let dense = match words[2].as_str() {
        "array" => true,
        "coordinate" => false,
        other => return parse_err(hline, format!("unsupported format `{other}`")),
    };
    let field = match words[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return parse_err(hline, format!("unsupported field `{other}`")),
    };
    if words[4] != "general" {
        return parse_err(hline, format!("unsupported symmetry `{}`", words[4]));
    }
    if dense && field == Field::Pattern {
        return parse_err(hline, "array files cannot use the pattern field");
    }

    let mut data = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (sline, size) = match data.next() {
        Some(s) => s,
        None => return parse_err(hline + 1, "missing size line"),
    };
    let dims = parse_usizes(sline, size)?;

    if dense {
        if dims.len() != 2 {
            return parse_err(sline, "array size line needs `rows cols`");
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut values = Vec::with_capacity(rows * cols);
        for (ln, l) in data {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 1 {
                return parse_err(ln, format!("expected one value, found {}", toks.len()));
            }
            if values.len() == rows * cols {
                return parse_err(ln, format!("more than {} values", rows * cols));
            }
            values.push(parse_value(ln, toks[0], field)?);
        }
        if values.len() != rows * cols {
            return parse_err(
                text.lines().count().max(1),
                format!("expected {} values, found {}", rows * cols, values.len()),
            );
        }
        return Ok(MmData::Dense(Mat::from_column_slice(rows, cols, &values)));
    }

    if dims.len() != 3 {
        return parse_err(sline, "coordinate size line needs `rows cols entries`");
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut entries = Vec::with_capacity(nnz);
    let mut seen = HashSet::with_capacity(nnz);
    for (ln, l) in data {
        let toks: Vec<&str> = l.split_whitespace().collect();
        let want = if field == Field::Pattern { 2 } else { 3 };
        if toks.len() != want {
            return parse_err(ln, format!("expected {want} fields, found {}", toks.len()));
        }
        if entries.len() == nnz {
            return parse_err(ln, format!("more than the declared {nnz} entries"));
        }
        let i = parse_index(ln, toks[0], rows, "row")?;
        let j = parse_index(ln, toks[1], cols, "column")?;
        if !seen.insert((i, j)) {
            return parse_err(ln, format!("duplicate entry ({}, {})", i + 1, j + 1));
        }
        let value = if field == Field::Pattern {
            1.0
        } else {
            parse_value(ln, toks[2], field)?
        };
        entries.push(Observation { row: i, col: j, value });
    }
    if entries.len() != nnz {
        return parse_err(
            text.lines().count().max(1),
            format!("declared {nnz} entries, found {}", entries.len()),
        );
    }
    Ok(MmData::Coordinate {
        rows,
        cols,
        field,
        entries,
    })
}

fn parse_usizes(line: usize, s: &str) -> Result<Vec<usize>, MmError> {
    s.split_whitespace()
        .map(|t| t.parse::<usize>().or_else(|_| parse_err(line, format!("invalid size `{t}`"))))
        .collect()
}

fn parse_index(line: usize, tok: &str, limit: usize, what: &str) -> Result<usize, MmError> {
    match tok.parse::<usize>() {
        Ok(k) if k >= 1 && k <= limit => Ok(k - 1),
        Ok(k) => parse_err(line, format!("{what} index {k} outside 1..={limit}")),
        Err(_) => parse_err(line, format!("invalid {what} index `{tok}`")),
    }
}

fn parse_value(line: usize, tok: &str, field: Field) -> Result<f64, MmError> {
    let v = match field {
        Field::Integer => tok.parse::<i64>().map(|v| v as f64).ok(),
        _ => tok.parse::<f64>().ok(),
    };
    match v {
        Some(v) if v.is_finite() => Ok(v),
        _ => parse_err(line, format!("invalid value `{tok}`")),
    }
}

/// Array format; values use Rust's shortest round-trip representation.
pub fn format_dense(a: &Mat) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", a.nrows(), a.ncols());
    for v in a.iter() {
        let _ = writeln!(s, "{v:e}");
    }
    s
}

pub fn format_coordinate(rows: usize, cols: usize, entries: &[Observation]) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{rows} {cols} {}", entries.len());
    for e in entries {
        let _ = writeln!(s, "{} {} {:e}", e.row + 1, e.col + 1, e.value);
    }
    s
}

pub fn write_dense(path: &Path, a: &Mat) -> Result<(), MmError> {
    write_text(path, &format_dense(a))
}

pub fn write_coordinate(path: &Path, rows: usize, cols: usize, entries: &[Observation]) -> Result<(), MmError> {
    write_text(path, &format_coordinate(rows, cols, entries))
}

fn write_text(path: &Path, text: &str) -> Result<(), MmError> {
    fs::write(path, text).map_err(|source| MmError::Io {
        path: path.to_path_buf(),
        source,
    })
}
