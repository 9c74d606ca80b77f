use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::matrix::{load_matrix, save_matrix};
use crate::lda::{Class, Dataset};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub p: usize,
    pub q: usize,
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported manifest format_version {}", m.format_version),
            ));
        }
        if m.p == 0 || m.q == 0 {
            return Err(Error::parse(path, "p and q must be positive"));
        }
        if let Some(e) = m.entries.iter().find(|e| e.label != 1 && e.label != 2) {
            return Err(Error::parse(path, format!("{}: label {} is not 1 or 2", e.path, e.label)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, base: &Path, entry: &ManifestEntry) -> PathBuf {
        base.join(&entry.path)
    }

    pub fn labels(&self) -> Result<Vec<Class>> {
        self.entries.iter().map(|e| Class::from_label(e.label.into())).collect()
    }

    /// Loads every referenced matrix, verifying checksums and shapes. Errors
    /// name the first offending file.
    pub fn load_dataset(&self, base: &Path) -> Result<Dataset> {
        if self.entries.is_empty() {
            return Err(Error::InvalidInput("manifest lists no samples".into()));
        }
        let mut samples = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let path = self.resolve(base, entry);
            if let Some(expected) = &entry.sha256 {
                let found = sha256_file(&path)?;
                if !found.eq_ignore_ascii_case(expected) {
                    return Err(Error::parse(&path, format!("checksum mismatch: expected {expected}, found {found}")));
                }
            }
            let m = load_matrix(&path)?;
            if m.shape() != (self.p, self.q) {
                return Err(Error::parse(
                    &path,
                    format!("expected a {}x{} matrix, found {}x{}", self.p, self.q, m.rows(), m.cols()),
                ));
            }
            samples.push(m);
        }
        Dataset::new(samples, self.labels()?)
    }

    /// Writes each sample of `d` as `dir/{stem}/{index}.{ext}` and returns a
    /// manifest with checksums and paths relative to `dir`.
    pub fn write_dataset(d: &Dataset, dir: &Path, stem: &str, ext: &str) -> Result<Self> {
        let sub = dir.join(stem);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let width = d.n().to_string().len().max(4);
        let mut entries = Vec::with_capacity(d.n());
        for (i, label) in d.labels().iter().enumerate() {
            let rel = format!("{stem}/{i:0width$}.{ext}");
            let path = dir.join(&rel);
            save_matrix(&d.sample(i), &path)?;
            entries.push(ManifestEntry {
                path: rel,
                label: label.label(),
                sha256: Some(sha256_file(&path)?),
            });
        }
        Ok(DatasetManifest {
            format_version: MANIFEST_VERSION,
            p: d.p(),
            q: d.q(),
            entries,
        })
    }
}
