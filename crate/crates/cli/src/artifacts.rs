//! Output files are collected in memory and written only once a run has
//! produced all of them.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Default)]
pub struct Artifacts {
    out_dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(out_dir: PathBuf) -> Self {
        Self {
            out_dir,
            files: Vec::new(),
        }
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(io)?;
        self.files.push((self.out_dir.join(name), bytes));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        self.json_at(path, value)
    }

    /// A JSON file outside the output directory, such as a snapshot.
    pub fn json_at<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io)?;
        bytes.push(b'\n');
        self.files.push((path, bytes));
        Ok(())
    }

    pub fn write(self) -> Result<(), CliError> {
        for (path, bytes) in &self.files {
            if let Some(parent) = path.parent().filter(|p| *p != Path::new("")) {
                std::fs::create_dir_all(parent).map_err(io)?;
            }
            std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}
