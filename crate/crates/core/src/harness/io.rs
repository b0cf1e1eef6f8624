use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::training::{Checkpoint, HandFlowModel};

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, model: &HandFlowModel, config_hash: &str, step: usize) -> Result<()> {
    write_atomic(path, model.to_checkpoint(config_hash, step).to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, HandFlowModel)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let c = Checkpoint::from_json(&text)?;
    let m = HandFlowModel::from_checkpoint(&c)?;
    Ok((c, m))
}

pub const MANIFEST_FORMAT: &str = "handflow.manifest.v1";

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    /// Canonical configuration text.
    pub config: String,
    pub version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, args: &[String], run: &RunConfig) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            args: args.to_vec(),
            config_hash: run.hash(),
            seed: run.seed,
            config: run.to_text(),
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}
