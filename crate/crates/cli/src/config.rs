//! Structured run configuration: a JSON file with per-stage sections,
//! merged with command-line flags (flags win), validated strictly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use usb_core::training::CouplingKind;

fn reject<T>(msg: String) -> crate::CliResult<T> {
    Err(crate::CliError::Config(msg))
}

/// On-disk configuration. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<String>,
    pub generator: Option<String>,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub n_steady: Option<usize>,
    pub n_transit: Option<usize>,
    pub alpha_g: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub delta: Option<f64>,
    pub nu: Option<f64>,
    pub eps_entropic: Option<f64>,
    pub minibatch: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_per_pair: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub hidden_width: Option<usize>,
    pub depth: Option<usize>,
    pub t_floor: Option<f64>,
    pub cosine_lr: Option<bool>,
    pub coupling_mode: Option<CouplingKind>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub mode: Option<String>,
    pub dt: Option<f64>,
    pub n_roots: Option<usize>,
    pub repeats: Option<usize>,
    pub max_population: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub holdout: Option<bool>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub plot: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> crate::CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::CliError::Io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| crate::CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Seed resolution: explicit flag, then config value, then the `USB_SEED`
/// environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> crate::CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("USB_SEED") {
        Ok(text) => match text.parse() {
            Ok(s) => Ok(s),
            Err(_) => reject(format!("USB_SEED must be an unsigned integer, got {text:?}")),
        },
        Err(_) => Ok(0),
    }
}
