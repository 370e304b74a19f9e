//! Run configuration: a single JSON document.

use std::path::{Path, PathBuf};

use enztrend::certificate::{CertificateVariant, DEFAULT_L_LOGSOB};
use enztrend::model::ReactionParameters;
use enztrend::solver::{InitialData, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rates: ReactionParameters,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialData,
    /// Log-Sobolev constant; [`DEFAULT_L_LOGSOB`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_logsob: Option<f64>,
    #[serde(default)]
    pub variant: CertificateVariant,
    #[serde(default)]
    pub seed: u64,
    /// CSV destination for `simulate`; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    #[serde(default)]
    pub nonneg_floor: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
}

fn one() -> usize {
    1
}

fn default_halvings() -> u32 {
    SolverConfig::new(1.0, 1.0).max_halvings
}

impl TimeConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_end: self.t_end,
            nonneg_floor: self.nonneg_floor,
            max_halvings: self.max_halvings,
            output_every: self.output_every,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn l_logsob(&self) -> f64 {
        self.l_logsob.unwrap_or(DEFAULT_L_LOGSOB)
    }

    pub fn l_logsob_source(&self) -> &'static str {
        if self.l_logsob.is_some() {
            "configured"
        } else {
            "default"
        }
    }

    /// The configuration with every default spelled out.
    pub fn effective_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Reads a config file as a JSON value, for edits before typing.
pub fn load_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses `key=a,b,c` into the dotted key and its raw values.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("sweep `{spec}` is not of the form key=a,b,c")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.is_empty() || values.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("sweep `{spec}` has an empty key or value")));
    }
    Ok((key.trim().to_string(), values))
}

/// Sets the dotted path `key` (e.g. `rates.k_plus`) to `raw`, read as JSON
/// when it parses and as a string otherwise.
pub fn set_dotted(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("sweep key `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}
