//! JSON run configs. Every file carries `schema_version`; `output_dir` is
//! optional. The remaining keys belong to the subcommand and are checked
//! strictly.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{config_err, CliError};
use crate::OUT_DIR_ENV;

pub const SCHEMA_VERSION: u64 = 1;

const DEFAULT_OUT_DIR: &str = "irdp-out";

#[derive(Debug)]
pub struct Loaded<T> {
    pub body: T,
    output_dir: Option<PathBuf>,
    base_dir: PathBuf,
}

impl<T> Loaded<T> {
    /// Paths in a config are relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Flag, then config, then environment, then `irdp-out`.
    pub fn out_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.output_dir.as_ref().map(|p| self.resolve(p)))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), strip(&e))))
}

fn strip(e: &CliError) -> String {
    match e {
        CliError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn parse<T: DeserializeOwned>(text: &str, base_dir: &Path) -> Result<Loaded<T>, CliError> {
    let mut value: Value = serde_json::from_str(text).map_err(config_err)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(CliError::Config(format!(
                "unsupported schema_version {other}; expected {SCHEMA_VERSION}"
            )))
        }
        None => return Err(CliError::Config("missing schema_version".into())),
    }
    let output_dir = match obj.remove("output_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => return Err(CliError::Config(format!("output_dir must be a string, got {other}"))),
    };
    let body = serde_json::from_value(value).map_err(config_err)?;
    Ok(Loaded {
        body,
        output_dir,
        base_dir: base_dir.to_path_buf(),
    })
}
