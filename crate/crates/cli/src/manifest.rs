use serde::{Deserialize, Serialize};

use iris_core::simulator::TurbulenceConfig;
use iris_core::ModelParams;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub input: Vec<String>,
    pub output_dir: String,
    pub params: Option<ModelParams>,
    pub turbulence: Option<TurbulenceConfig>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Files written by the run, relative to `output_dir`.
    pub artifacts: Vec<String>,
    /// Subcommand-specific results.
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, input: Vec<String>, output_dir: String) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            input,
            output_dir,
            params: None,
            turbulence: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts: Vec::new(),
            details: serde_json::Value::Null,
        }
    }
}

/// JSON value of a float, with infinities spelled `"inf"` / `"-inf"`.
pub fn json_number(v: f64) -> serde_json::Value {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        v.into()
    }
}
