pub mod convert;
pub mod filter;
pub mod gd;
pub mod odometer;
pub mod queries;
pub mod validate;

use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug)]
pub struct StreamOptions {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub snapshot_out: Option<PathBuf>,
    pub stop_after: Option<usize>,
}

/// Stream entries to process given the resume position and `--stop-after`.
pub fn window(total: usize, start: usize, stop_after: Option<usize>) -> Result<Range<usize>, CliError> {
    if start > total {
        return Err(CliError::Config(format!(
            "snapshot position {start} is past the end of a stream of {total} entries"
        )));
    }
    let end = stop_after.map_or(total, |k| total.min(start.saturating_add(k)));
    Ok(start..end)
}

/// Reads a headed numeric CSV into its header and rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let unreadable = |e: &dyn std::fmt::Display| CliError::Config(format!("unreadable data {}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| unreadable(&e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| unreadable(&e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| unreadable(&e))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| unreadable(&format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}
