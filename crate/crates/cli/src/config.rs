//! Configuration merge and path resolution.
//!
//! Precedence, highest first: command-line flags, then the `--config`
//! TOML file, then built-in defaults. File sections are partial — any
//! omitted key falls back to the default for that section.
//!
//! When `HCF_DATA_DIR` is set, relative `--data`/`--model`/`--truth`/
//! `--out` paths are resolved under it; absolute paths and `--config`
//! are taken as given.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hcf_core::fm::{Direction, Variant};
use hcf_core::pipelines::{DismParams, RecoParams};
use hcf_core::synth::GenConfig;
use hcf_core::train::TrainConfig;
use serde::Deserialize;

pub const DATA_DIR_ENV: &str = "HCF_DATA_DIR";

/// Everything a config file may carry. Top-level keys mirror flags;
/// sections mirror the library parameter structs.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub direction: Option<Direction>,
    pub top_n: Option<usize>,
    pub iterations: Option<usize>,
    pub cohort: Option<usize>,
    pub gen: Option<GenConfig>,
    pub train: Option<TrainConfig>,
    pub reco: Option<RecoParams>,
    pub dism: Option<DismParams>,
    pub eval: Option<EvalSection>,
}

/// Split-protocol overrides for `evaluate`.
#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub holdout_fraction: Option<f64>,
    pub freshness_cutoff: Option<usize>,
}

impl FileConfig {
    /// Loads `--config` when given; an absent flag is an empty file.
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn gen_config(&self) -> GenConfig {
        self.gen.clone().unwrap_or_default()
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.unwrap_or_default()
    }

    pub fn reco_params(&self) -> RecoParams {
        self.reco.unwrap_or_default()
    }

    pub fn dism_params(&self) -> DismParams {
        self.dism.unwrap_or_default()
    }

    pub fn eval_section(&self) -> EvalSection {
        self.eval.unwrap_or_default()
    }
}

/// Flag beats file beats default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Resolves a path flag against the data root, if one is configured.
pub fn rooted(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
