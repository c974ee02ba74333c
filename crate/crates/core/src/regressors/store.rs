//! On-disk model archive.
//!
//! Layout: `<root>/<producer>/<kind>/<approach>/<dataset_tag>/<id>/` holding
//! `metadata.json` (including a sha256 checksum of the payload) and
//! `params.json` (the parameter payload). Writes go through a staging
//! directory and an atomic rename, so readers only ever see complete
//! archives.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::telemetry::Producer;

use super::{Approach, FeatureScale, ModelKind, ModelParams, PowerModel};

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

/// Identifier of a stored model: its path relative to the store root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub String);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMeta {
    pub format_version: u32,
    pub approach: Approach,
    pub producer: Producer,
    pub kind: ModelKind,
    pub dataset_tag: String,
    pub feature_names: Vec<String>,
    pub scaler: Vec<FeatureScale>,
    pub train_error_mae: f64,
    /// sha256 of params.json, lowercase hex.
    pub checksum: String,
    /// Insertion counter within the store; select ties break toward the
    /// highest sequence (deterministic, unlike wall-clock times).
    pub sequence: u64,
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    root: PathBuf,
}

fn tag_dir(tag: &str) -> String {
    if tag.is_empty() {
        "default".to_string()
    } else {
        tag.replace(['/', '\\'], "_")
    }
}

impl ModelStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)
            .map_err(|e| Error::StoreIo(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save(&self, model: &PowerModel) -> Result<ModelId> {
        let payload = serde_json::to_vec(&model.params)?;
        let checksum = hex::encode(Sha256::digest(&payload));
        let prefix = &checksum[..12];

        let group = PathBuf::from(model.producer.as_str())
            .join(model.kind.as_str())
            .join(model.approach.as_str())
            .join(tag_dir(&model.dataset_tag));
        let group_abs = self.root.join(&group);
        fs::create_dir_all(&group_abs)
            .map_err(|e| Error::StoreIo(format!("cannot create {}: {e}", group_abs.display())))?;

        // Re-saving the same model yields a fresh id with the same checksum.
        let mut suffix = 0usize;
        while group_abs.join(format!("{prefix}-{suffix}")).exists() {
            suffix += 1;
        }
        let dir_name = format!("{prefix}-{suffix}");
        let sequence = self.list()?.len() as u64;

        let meta = StoredMeta {
            format_version: ARCHIVE_FORMAT_VERSION,
            approach: model.approach,
            producer: model.producer,
            kind: model.kind,
            dataset_tag: model.dataset_tag.clone(),
            feature_names: model.feature_names.clone(),
            scaler: model.scaler.clone(),
            train_error_mae: model.train_error_mae,
            checksum,
            sequence,
        };

        let staging = self.root.join(format!(".partial-{dir_name}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)
                .map_err(|e| Error::StoreIo(format!("cannot clear staging dir: {e}")))?;
        }
        fs::create_dir_all(&staging)
            .map_err(|e| Error::StoreIo(format!("cannot create staging dir: {e}")))?;
        fs::write(staging.join("params.json"), &payload)
            .map_err(|e| Error::StoreIo(format!("cannot write payload: {e}")))?;
        fs::write(staging.join("metadata.json"), serde_json::to_vec_pretty(&meta)?)
            .map_err(|e| Error::StoreIo(format!("cannot write metadata: {e}")))?;
        fs::rename(&staging, group_abs.join(&dir_name))
            .map_err(|e| Error::StoreIo(format!("cannot publish archive: {e}")))?;

        let rel = group.join(&dir_name);
        Ok(ModelId(rel.to_string_lossy().replace('\\', "/")))
    }

    pub fn load(&self, id: &ModelId) -> Result<PowerModel> {
        let dir = self.root.join(&id.0);
        let meta_bytes = fs::read(dir.join("metadata.json"))
            .map_err(|e| Error::StoreIo(format!("cannot read {id}: {e}")))?;
        let meta: StoredMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::CorruptArchive(format!("{id}: bad metadata: {e}")))?;
        if meta.format_version != ARCHIVE_FORMAT_VERSION {
            return Err(Error::CorruptArchive(format!(
                "{id}: unsupported format_version {}",
                meta.format_version
            )));
        }
        let payload = fs::read(dir.join("params.json"))
            .map_err(|e| Error::CorruptArchive(format!("{id}: missing payload: {e}")))?;
        let checksum = hex::encode(Sha256::digest(&payload));
        if checksum != meta.checksum {
            return Err(Error::CorruptArchive(format!(
                "{id}: checksum mismatch ({} stored, {checksum} computed)",
                meta.checksum
            )));
        }
        let params: ModelParams = serde_json::from_slice(&payload)
            .map_err(|e| Error::CorruptArchive(format!("{id}: bad payload: {e}")))?;
        Ok(PowerModel {
            approach: meta.approach,
            producer: meta.producer,
            kind: meta.kind,
            dataset_tag: meta.dataset_tag,
            feature_names: meta.feature_names,
            scaler: meta.scaler,
            train_error_mae: meta.train_error_mae,
            params,
        })
    }

    /// All archives in the store, sorted by id.
    pub fn list(&self) -> Result<Vec<(ModelId, StoredMeta)>> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            let entries = match fs::read_dir(&dir) {
                Ok(entries) => entries,
                Err(_) => continue,
            };
            for entry in entries.flatten() {
                let path = entry.path();
                if !path.is_dir() {
                    continue;
                }
                if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')) {
                    continue;
                }
                if path.join("metadata.json").is_file() {
                    let rel = path
                        .strip_prefix(&self.root)
                        .map_err(|e| Error::StoreIo(e.to_string()))?
                        .to_string_lossy()
                        .replace('\\', "/");
                    let meta: StoredMeta =
                        serde_json::from_slice(&fs::read(path.join("metadata.json"))?)
                            .map_err(|e| Error::CorruptArchive(format!("{rel}: bad metadata: {e}")))?;
                    out.push((ModelId(rel), meta));
                } else {
                    stack.push(path);
                }
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
