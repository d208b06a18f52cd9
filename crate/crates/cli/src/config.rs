use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Deserialize;
use steerkit_core::Error;

/// Flat key/value settings file. Any command-line flag with the same name
/// takes precedence over the file; the file takes precedence over built-in
/// defaults. Input and output paths are deliberately flag-only so every run
/// states its data explicitly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Path to a keyword lexicon TOML file.
    pub lexicon: Option<PathBuf>,
    /// Construction method for `build`.
    pub method: Option<String>,
    /// Expected extraction layer; ingested states must match when set.
    pub layer: Option<u32>,
    /// Stability threshold for hard filtering.
    pub tau: Option<f64>,
    /// Content-subspace rank.
    pub k: Option<usize>,
    /// Expected continuations per boundary; scoring fails on a mismatch
    /// when set.
    pub num_samples: Option<u32>,
    /// Steering strength to record alongside built vectors (metadata only;
    /// this toolkit never applies it to a model).
    pub alpha: Option<f64>,
    /// RNG seed for sampling-based commands.
    pub seed: Option<u64>,
    /// Size-matched random control vectors per run.
    pub n_controls: Option<usize>,
    /// Rows drawn per stability bin for the behavior probe.
    pub per_bin: Option<usize>,
    /// Cross-validation folds.
    pub folds: Option<usize>,
    /// Inverse regularization strength for probes.
    pub c: Option<f64>,
    /// Optimizer gradient tolerance.
    pub tol: Option<f64>,
    /// Optimizer iteration cap.
    pub max_iter: Option<usize>,
    /// Ranks to evaluate in the subject probe.
    pub k_grid: Option<Vec<usize>>,
}

/// Loads the settings file, or returns defaults when no path is given.
/// Unreadable or malformed files are configuration errors.
pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(p) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(p)
        .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?;
    let cfg = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?;
    Ok(cfg)
}
