//! Dense CSV and sparse `label idx:val ...` dataset files.
//!
//! Dense rows are comma separated with the target in the last column. Sparse
//! rows use 1-based feature indices; missing features are zero. Blank lines and
//! lines starting with `#` are skipped by both readers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Task};
use crate::error::{MatkError, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> MatkError {
    MatkError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("'{}' is not a number", tok.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("'{}' is not finite", tok.trim())));
    }
    Ok(v)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn finish(
    name: &str,
    task: Option<Task>,
    features: Vec<f64>,
    d: usize,
    targets: Vec<f64>,
    label_lines: &[usize],
) -> Result<Dataset> {
    if targets.is_empty() {
        return Err(MatkError::param(format!("{name}: no samples")));
    }
    let task = task.unwrap_or_else(|| Task::infer(&targets));
    if task == Task::Classification {
        if let Some(i) = targets.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(parse_err(
                label_lines[i],
                format!("label {} is not -1 or +1", targets[i]),
            ));
        }
    }
    Dataset::new(name, task, features, d, targets)
}

/// Parses dense CSV text. `task = None` infers the task from the targets.
pub fn parse_dense_csv(text: &str, name: &str, task: Option<Task>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut lines = Vec::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in content_lines(text) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 2 {
            return Err(parse_err(line_no, "need at least one feature and a target"));
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    line_no,
                    format!("row has {} columns, expected {w}", cells.len()),
                ))
            }
            _ => {}
        }
        let (target, row) = cells.split_last().expect("at least two cells");
        for cell in row {
            features.push(parse_number(cell, line_no)?);
        }
        targets.push(parse_number(target, line_no)?);
        lines.push(line_no);
    }
    let d = width.map_or(0, |w| w - 1);
    finish(name, task, features, d, targets, &lines)
}

/// Parses sparse `label idx:val ...` text. The dimension is the largest index seen.
pub fn parse_sparse(text: &str, name: &str, task: Option<Task>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut targets = Vec::new();
    let mut lines = Vec::new();
    let mut d = 0usize;
    for (line_no, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        if label.contains(':') {
            return Err(parse_err(line_no, "line starts with a feature, expected a label"));
        }
        targets.push(parse_number(label, line_no)?);
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("'{tok}' is not idx:val")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad feature index '{idx}'")))?;
            if idx == 0 {
                return Err(parse_err(line_no, "feature indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(line_no, format!("index {idx} is not increasing")));
            }
            last = idx;
            d = d.max(idx);
            row.push((idx - 1, parse_number(val, line_no)?));
        }
        rows.push(row);
        lines.push(line_no);
    }
    if d == 0 && !rows.is_empty() {
        return Err(MatkError::param(format!("{name}: no features in any row")));
    }
    let mut features = vec![0.0; rows.len() * d];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * d + j] = v;
        }
    }
    finish(name, task, features, d, targets, &lines)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_owned())
}

pub fn load_dense_csv(path: impl AsRef<Path>, task: Option<Task>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_dense_csv(&fs::read_to_string(path)?, &file_stem(path), task)
}

pub fn load_sparse(path: impl AsRef<Path>, task: Option<Task>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_sparse(&fs::read_to_string(path)?, &file_stem(path), task)
}

/// Picks the reader from the extension: `.csv` is dense, anything else sparse.
pub fn load_auto(path: impl AsRef<Path>, task: Option<Task>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_dense_csv(path, task),
        _ => load_sparse(path, task),
    }
}

fn fmt_label(y: f64, task: Task) -> String {
    if task == Task::Classification && y > 0.0 {
        "+1".to_owned()
    } else if task == Task::Classification {
        "-1".to_owned()
    } else {
        format!("{y}")
    }
}

pub fn to_dense_csv(data: &Dataset) -> String {
    let mut out = String::new();
    for (row, &y) in data.rows().zip(data.targets()) {
        for v in row {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{}", fmt_label(y, data.task())).unwrap();
    }
    out
}

/// Zero features are omitted, except the last column, which is always written
/// so the dimension survives a round trip.
pub fn to_sparse(data: &Dataset) -> String {
    let mut out = String::new();
    let d = data.dim();
    for (row, &y) in data.rows().zip(data.targets()) {
        out.push_str(&fmt_label(y, data.task()));
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 || j + 1 == d {
                write!(out, " {}:{v}", j + 1).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_dense_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_dense_csv(data))?;
    Ok(())
}

pub fn write_sparse(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_sparse(data))?;
    Ok(())
}
