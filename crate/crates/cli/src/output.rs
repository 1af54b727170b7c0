//! Plain CSV writers for run artifacts.

use std::fmt::Write as _;
use std::path::Path;

use tcc::encoder::AssignmentDistribution;

use crate::error::{CliError, CliResult};

pub fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// `index,cluster,pi_0,...,pi_{K-1}`.
pub fn assignments_csv(assignments: &[AssignmentDistribution]) -> String {
    let k = assignments.first().map_or(0, |a| a.len());
    let mut out = String::from("index,cluster");
    for j in 0..k {
        let _ = write!(out, ",pi_{j}");
    }
    out.push('\n');
    for (i, a) in assignments.iter().enumerate() {
        let _ = write!(out, "{i},{}", a.argmax());
        for p in a.probs() {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

/// `cluster,count`.
pub fn histogram_csv(histogram: &[usize]) -> String {
    let mut out = String::from("cluster,count\n");
    for (k, c) in histogram.iter().enumerate() {
        let _ = writeln!(out, "{k},{c}");
    }
    out
}
