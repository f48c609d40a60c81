use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one completed (or attempted) stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    /// Hash over the stage's config slice and upstream output hashes.
    pub inputs_hash: String,
    /// Output paths relative to the run directory, with content hashes.
    pub outputs: BTreeMap<String, String>,
    pub complete: bool,
    pub wall_clock_s: f64,
}

/// Per-stage bookkeeping for a run directory. It holds wall-clock times,
/// so it is the one file that differs between otherwise identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Stage(format!("corrupt manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::Stage(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// A stage is current when it completed with the same inputs and every
    /// recorded output still has its recorded content.
    pub fn is_current(&self, dir: &Path, stage: &str, inputs_hash: &str) -> bool {
        let Some(e) = self.stages.get(stage) else {
            return false;
        };
        e.complete
            && e.inputs_hash == inputs_hash
            && e.outputs
                .iter()
                .all(|(p, h)| file_hash(&dir.join(p)).is_ok_and(|x| &x == h))
    }

    /// Hashes of a stage's recorded outputs, for use as downstream inputs.
    pub fn output_hashes(&self, stage: &str) -> Option<&BTreeMap<String, String>> {
        self.stages.get(stage).filter(|e| e.complete).map(|e| &e.outputs)
    }
}

pub fn file_hash(path: &Path) -> std::io::Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

/// Hash of labelled byte strings, order-sensitive.
pub fn hash_parts<'a>(parts: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (label, bytes) in parts {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex(&h.finalize())
}
