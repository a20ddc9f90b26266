//! CSV reading and writing for the two-sample files.
//!
//! UTF-8, comma-separated, one header line of feature names with an optional
//! trailing `y` column for labels. Values are written with 17 significant
//! digits so a save/load round trip is bit exact.

use std::fs;
use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn save_matrix_csv(
    path: &str,
    names: &[String],
    rows: &Array2<f64>,
    labels: Option<&[i8]>,
) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let mut header = names.join(",");
    if labels.is_some() {
        header.push_str(",y");
    }
    writeln!(out, "{header}")?;
    for (i, row) in rows.rows().into_iter().enumerate() {
        let mut line = String::with_capacity(rows.ncols() * 24);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        if let Some(l) = labels {
            line.push_str(&format!(",{}", l[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn load_matrix_csv(path: &str) -> Result<(Vec<String>, Array2<f64>, Option<Vec<i8>>)> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| Error::CsvParse {
        path: path.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    let mut names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(err(1, "malformed header: empty column name".into()));
    }
    let has_labels = names.last().map(|n| n == "y").unwrap_or(false);
    if has_labels {
        names.pop();
    }
    if names.is_empty() {
        return Err(err(1, "malformed header: no feature columns".into()));
    }
    let ncols = names.len() + usize::from(has_labels);

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let mut nrows = 0usize;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ncols {
            return Err(err(
                lineno,
                format!("expected {ncols} columns, found {}", cells.len()),
            ));
        }
        for cell in &cells[..names.len()] {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric cell {cell:?}")))?;
            values.push(v);
        }
        if has_labels {
            let raw = cells[ncols - 1].trim();
            let l: i8 = raw
                .parse()
                .map_err(|_| err(lineno, format!("non-integer label {raw:?}")))?;
            labels.push(l);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(err(1, "no data rows".into()));
    }
    let rows = Array2::from_shape_vec((nrows, names.len()), values)
        .expect("row-count accounting is exact");
    Ok((names, rows, has_labels.then_some(labels)))
}
