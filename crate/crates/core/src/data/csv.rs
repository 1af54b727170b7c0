//! Plain CSV: a header `x0,...,x{d-1}[,label]`, then one row per point.
//! Values are written with 17 significant digits, so 64-bit values
//! survive a round trip unchanged.

use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::autodiff::DenseArray;
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses CSV text. Line numbers in errors are 1-based.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = match lines.next() {
        Some(h) if !h.trim().is_empty() => h,
        _ => return Err(parse_err(1, "missing header")),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = columns.last() == Some(&"label");
    let dim = columns.len() - usize::from(has_label);
    for (j, c) in columns[..dim].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(parse_err(1, format!("expected column `x{j}`, found `{c}`")));
        }
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    let mut ended = false;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.is_empty() {
            ended = true;
            continue;
        }
        if ended {
            return Err(parse_err(lineno - 1, "blank line inside data"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        for f in &fields[..dim] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("not a number: `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value `{f}`")));
            }
            data.push(v);
        }
        if has_label {
            let f = fields[dim].trim();
            labels.push(
                f.parse::<usize>()
                    .map_err(|_| parse_err(lineno, format!("bad label `{f}`")))?,
            );
        }
        rows += 1;
    }
    let x = DenseArray::matrix(rows, dim, data)?;
    Dataset::new(name, x, has_label.then_some(labels))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&text, &name)
}

/// Renders a dataset in the CSV format above.
pub fn write_csv(dataset: &Dataset) -> String {
    let d = dataset.dim();
    let mut out = (0..d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    if dataset.labels().is_some() {
        out.push_str(if d > 0 { ",label" } else { "label" });
    }
    out.push('\n');
    for i in 0..dataset.len() {
        for (j, v) in dataset.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("write to string");
        }
        if let Some(l) = dataset.labels() {
            if d > 0 {
                out.push(',');
            }
            write!(out, "{}", l[i]).expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_csv(dataset))?;
    Ok(())
}
