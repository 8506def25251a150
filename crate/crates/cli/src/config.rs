//! Flat TOML configuration for `gen`, `solve` and `sweep`.
//!
//! Every key is optional. Values given on the command line win over the
//! file, and the file wins over built-in defaults.
//!
//! ```toml
//! n = 512
//! d = 2
//! p = 0.5
//! sigma = 0.5               # gen / solve
//! sigmas = [1.5, 1.0, 0.5]  # sweep
//! seed = 1
//! truth_mode = "uniform"    # or "identity"
//! trials = 100
//! methods = ["vanilla", "anchored"]
//! method = "anchored"
//! parallelism = 4
//! collect_diagnostics = true
//! timings = false
//! tol = 1e-8
//! max_iter = 200
//! restarts = 10
//! out = "results"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub sigmas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub truth_mode: Option<String>,
    pub trials: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub method: Option<String>,
    pub parallelism: Option<usize>,
    pub collect_diagnostics: Option<bool>,
    pub timings: Option<bool>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// First present value wins.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
