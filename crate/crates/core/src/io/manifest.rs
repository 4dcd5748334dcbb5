use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::NoiseSpec;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    /// Relative to the manifest's directory.
    pub file: PathBuf,
    pub field_t: f64,
    pub sha256: String,
    pub params_digest: String,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Axis offset actually applied, MHz.
    pub axis_shift_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub generator: String,
    pub constants_version: String,
    pub seed: u64,
    pub field_range_t: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub entries: Vec<DatasetEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every file exists with the recorded digest and every field lies in range.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let [lo, hi] = self.field_range_t;
        for e in &self.entries {
            let path = dir.join(&e.file);
            let digest = sha256_file(&path)?;
            if digest != e.sha256 {
                return Err(Error::InvalidArgument(format!("{}: digest mismatch", path.display())));
            }
            if !(e.field_t >= lo && e.field_t <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "{}: field {} T outside [{lo}, {hi}] T",
                    path.display(),
                    e.field_t
                )));
            }
        }
        Ok(())
    }
}
