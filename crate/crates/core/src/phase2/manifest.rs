//! The replay manifest written by the capture side and read by `analyze`.
//!
//! ```json
//! {
//!   "version": "taxbreak-replay-manifest/1",
//!   "null_replay": "null.bundle",
//!   "entries": [
//!     {"record_key": "3f…", "status": "replayed", "trace": "replays/3f….bundle"},
//!     {"record_key": "9a…", "status": "cache_hit"},
//!     {"record_key": "c0…", "status": "skipped", "reason": "no-op-recipe"}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel_db::DedupKey;

pub const MANIFEST_VERSION: &str = "taxbreak-replay-manifest/1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("manifest {path} has version '{found}', expected '{MANIFEST_VERSION}'")]
    Version { path: PathBuf, found: String },
    #[error("manifest {path} lists record {key} more than once")]
    DuplicateRecord { path: PathBuf, key: DedupKey },
    #[error("manifest {path}: replayed record {key} has no trace file")]
    MissingTrace { path: PathBuf, key: DedupKey },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestStatus {
    Replayed,
    CacheHit,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record_key: DedupKey,
    pub status: ManifestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub version: String,
    /// Standalone null-kernel replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_replay: Option<String>,
    /// Null kernel replayed inside the operator-replay process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_floor: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

impl ReplayManifest {
    pub fn new() -> Self {
        ReplayManifest { version: MANIFEST_VERSION.into(), null_replay: None, replay_floor: None, entries: Vec::new() }
    }

    pub fn from_str_at(text: &str, path: &Path) -> Result<Self, ManifestError> {
        let m: ReplayManifest =
            serde_json::from_str(text).map_err(|source| ManifestError::Parse { path: path.into(), source })?;
        if m.version != MANIFEST_VERSION {
            return Err(ManifestError::Version { path: path.into(), found: m.version });
        }
        let mut seen = BTreeMap::new();
        for e in &m.entries {
            if seen.insert(e.record_key.clone(), ()).is_some() {
                return Err(ManifestError::DuplicateRecord { path: path.into(), key: e.record_key.clone() });
            }
            if e.status == ManifestStatus::Replayed && e.trace.is_none() {
                return Err(ManifestError::MissingTrace { path: path.into(), key: e.record_key.clone() });
            }
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
        Self::from_str_at(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Replayed records and their trace paths, resolved against `base`.
    pub fn replay_paths(&self, base: &Path) -> BTreeMap<DedupKey, PathBuf> {
        self.entries
            .iter()
            .filter(|e| e.status == ManifestStatus::Replayed)
            .filter_map(|e| e.trace.as_ref().map(|t| (e.record_key.clone(), base.join(t))))
            .collect()
    }
}

impl Default for ReplayManifest {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_statuses() {
        let text = r#"{"version":"taxbreak-replay-manifest/1","null_replay":"null.bundle","entries":[
            {"record_key":"a","status":"replayed","trace":"r/a.bundle"},
            {"record_key":"b","status":"cache_hit"},
            {"record_key":"c","status":"skipped","reason":"no-op-recipe"}]}"#;
        let m = ReplayManifest::from_str_at(text, Path::new("m.json")).unwrap();
        assert_eq!(m.entries.len(), 3);
        let paths = m.replay_paths(Path::new("/data"));
        assert_eq!(paths[&DedupKey("a".into())], Path::new("/data/r/a.bundle"));
        assert_eq!(paths.len(), 1);
        let again = ReplayManifest::from_str_at(&m.to_json(), Path::new("m.json")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_duplicates_and_bad_version() {
        let dup = r#"{"version":"taxbreak-replay-manifest/1","entries":[
            {"record_key":"a","status":"cache_hit"},{"record_key":"a","status":"cache_hit"}]}"#;
        assert!(matches!(ReplayManifest::from_str_at(dup, Path::new("m")), Err(ManifestError::DuplicateRecord { .. })));
        let v = r#"{"version":"other/2","entries":[]}"#;
        assert!(matches!(ReplayManifest::from_str_at(v, Path::new("m")), Err(ManifestError::Version { .. })));
        let missing = r#"{"version":"taxbreak-replay-manifest/1","entries":[{"record_key":"a","status":"replayed"}]}"#;
        assert!(matches!(
            ReplayManifest::from_str_at(missing, Path::new("m")),
            Err(ManifestError::MissingTrace { .. })
        ));
    }
}
