//! Versioned state snapshots for the streaming subcommands.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot<S> {
    pub snapshot_version: u32,
    pub kind: String,
    /// Number of stream entries consumed so far.
    pub position: usize,
    pub state: S,
}

impl<S> Snapshot<S> {
    pub fn new(kind: &str, position: usize, state: S) -> Self {
        Self {
            snapshot_version: SNAPSHOT_VERSION,
            kind: kind.to_string(),
            position,
            state,
        }
    }
}

pub fn read<S: DeserializeOwned>(path: &Path, kind: &str) -> Result<Snapshot<S>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
    let snap: Snapshot<S> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("snapshot {}: {e}", path.display())))?;
    if snap.snapshot_version != SNAPSHOT_VERSION {
        return Err(CliError::Config(format!(
            "snapshot version {} is not supported; expected {SNAPSHOT_VERSION}",
            snap.snapshot_version
        )));
    }
    if snap.kind != kind {
        return Err(CliError::Config(format!("snapshot holds {} state, not {kind}", snap.kind)));
    }
    Ok(snap)
}
