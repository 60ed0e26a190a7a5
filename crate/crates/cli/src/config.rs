//! Merging of a JSON config file with command-line flags, plus the error
//! type that maps failures to exit codes.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// A failure of one invocation.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input files, unknown config keys.
    Config(String),
    /// Parameters rejected before any computation.
    Validation(String),
    /// Output could not be written.
    Io(String),
    Core(flatcircle_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// One-line JSON description for standard error.
    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Validation(m) => ("validation", m.clone()),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

impl From<flatcircle_core::Error> for CliError {
    fn from(e: flatcircle_core::Error) -> Self {
        match e {
            flatcircle_core::Error::InvalidParameter(m) => CliError::Validation(m),
            e => CliError::Core(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads a JSON file, reporting failures as config errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Overlays the flags given on the command line onto the config file.
///
/// Flags left unset serialize as `null` and do not override the file.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CliResult<T> {
    let mut merged = match config {
        Some(path) => match read_json::<Value>(path)? {
            Value::Object(m) => m,
            _ => return Err(CliError::Config(format!("{}: expected a JSON object", path.display()))),
        },
        None => Map::new(),
    };
    let given = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))?;
    if let Value::Object(m) = given {
        merged.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("config: {e}")))
}
