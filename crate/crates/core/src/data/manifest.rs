//! Line-delimited JSON dataset manifests.
//!
//! The first line is a header `{"name": ..., "pad_target": [H, W]}`; every
//! following non-blank line is one sample
//! `{"id": ..., "image": ..., "mask": ..., "fov": ..., "split": "train"|"val"|"test"}`
//! with `fov` optional. Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{raster, FundusSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    pad_target: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub pad_target: (usize, usize),
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.pad_target;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Data(format!("pad target {h}x{w} must be a nonzero multiple of 16")));
        }
        if self.entries.is_empty() {
            return Err(Error::Data("manifest has no samples".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id '{}'", e.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Decodes every sample carrying `split`.
    pub fn load_samples<T: Scalar>(&self, split: Split) -> Result<Vec<FundusSample<T>>> {
        self.entries_in(split)
            .map(|e| {
                let image = raster::read_rgb(&self.resolve(&e.image))?;
                let mask = raster::read_mask(&self.resolve(&e.mask))?;
                let fov = e.fov.as_ref().map(|p| raster::read_mask(&self.resolve(p))).transpose()?;
                FundusSample::new(e.id.clone(), image, mask, fov)
            })
            .collect()
    }
}

/// Parses and validates a manifest; every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(Error::Data(format!("{}: manifest has no samples", path.display())));
    };
    let header: Header = serde_json::from_str(first)
        .map_err(|e| Error::Data(format!("{}:1: malformed header: {e}", path.display())))?;
    let entries = lines
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}:{}: malformed record: {e}", path.display(), n + 1)))
        })
        .collect::<Result<Vec<ManifestEntry>>>()?;
    let manifest = DatasetManifest {
        name: header.name,
        pad_target: header.pad_target,
        entries,
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    manifest.validate()?;
    for e in &manifest.entries {
        for p in [Some(&e.image), Some(&e.mask), e.fov.as_ref()].into_iter().flatten() {
            let full = manifest.resolve(p);
            if !full.is_file() {
                return Err(Error::Data(format!("sample '{}': missing file {}", e.id, full.display())));
            }
        }
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let mut out = serde_json::to_string(&Header {
        name: manifest.name.clone(),
        pad_target: manifest.pad_target,
    })?;
    out.push('\n');
    for e in &manifest.entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        std::fs::write(dir.join(name), b"").unwrap();
        PathBuf::from(name)
    }

    fn manifest(dir: &Path) -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            pad_target: (64, 64),
            entries: vec![
                ManifestEntry {
                    id: "a".into(),
                    image: touch(dir, "a.png"),
                    mask: touch(dir, "a_mask.png"),
                    fov: Some(touch(dir, "a_fov.png")),
                    split: Split::Train,
                },
                ManifestEntry {
                    id: "b".into(),
                    image: touch(dir, "b.png"),
                    mask: touch(dir, "b_mask.png"),
                    fov: None,
                    split: Split::Test,
                },
            ],
            root: dir.to_path_buf(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let path = dir.path().join("m.jsonl");
        save_manifest(&path, &m).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"name\":\"x\",\"pad_target\":[16,16]}\n").unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("no samples"), "{err}");
        std::fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap_err().to_string().contains("no samples"));
    }

    #[test]
    fn duplicate_ids_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path());
        m.entries[1].id = "a".into();
        assert!(m.validate().unwrap_err().to_string().contains("duplicate"));

        let mut m = manifest(dir.path());
        let path = dir.path().join("m.jsonl");
        m.entries[0].mask = "gone.png".into();
        save_manifest(&path, &m).unwrap();
        assert!(load_manifest(&path).unwrap_err().to_string().contains("missing file"));
    }

    #[test]
    fn pad_target_must_divide_by_16() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path());
        m.pad_target = (584, 565);
        assert!(m.validate().is_err());
    }

    #[test]
    fn malformed_record_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"name\":\"x\",\"pad_target\":[16,16]}\n{\"id\": 3}\n").unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
