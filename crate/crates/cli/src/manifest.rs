//! Run manifests.
//!
//! Every artifact-producing command drops a JSON manifest next to its
//! output: the command name, the seed, every input path, every output
//! path, and the fully resolved configuration after the flag/file merge.
//! Rebuilding the artifact needs nothing but this file. Manifests carry
//! no clocks or host details, so a seeded rerun reproduces them
//! byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: &'static str,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input role (e.g. "data", "model") to resolved path.
    pub inputs: BTreeMap<&'static str, PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// The exact configuration the command ran with.
    pub config: C,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &'static str, seed: Option<u64>, config: C) -> Self {
        Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            config,
        }
    }

    pub fn input(mut self, role: &'static str, path: &Path) -> Self {
        self.inputs.insert(role, path.to_path_buf());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `<artifact>.manifest.json` next to the artifact and
    /// returns the manifest path.
    pub fn write_alongside(&self, artifact: &Path) -> Result<PathBuf> {
        let mut name = artifact
            .file_name()
            .with_context(|| format!("artifact path {} has no file name", artifact.display()))?
            .to_os_string();
        name.push(".manifest.json");
        let path = artifact.with_file_name(name);
        self.write_to(&path)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)
            .with_context(|| format!("creating manifest {}", path.display()))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }
}
