//! Persistent replay cache keyed by [`DedupKey`].
//!
//! One JSON file per platform under the cache directory. Readers never lock;
//! writers hold `<file>.lock` (created exclusively), merge with the current
//! content and replace the file by an atomic rename.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DedupKey;
use crate::phase2::{FloorStats, ReplayMeasurement};

pub const CACHE_VERSION: &str = "taxbreak-cache/1";
pub const CACHE_DIR_ENV: &str = "TAXBREAK_CACHE_DIR";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cache file {path} is not a valid cache: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("cache file {path} has version '{found}', expected '{CACHE_VERSION}'")]
    Version { path: PathBuf, found: String },
    #[error("cache file {0} is locked by another writer")]
    Locked(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedupCache {
    pub version: String,
    pub platform_label: String,
    pub entries: BTreeMap<DedupKey, ReplayMeasurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<FloorStats>,
}

impl DedupCache {
    pub fn empty(platform_label: impl Into<String>) -> Self {
        DedupCache {
            version: CACHE_VERSION.into(),
            platform_label: platform_label.into(),
            entries: BTreeMap::new(),
            floor: None,
        }
    }

    /// Adds entries from `other`; existing entries win so that a cached
    /// measurement never changes once written.
    pub fn merge(&mut self, other: &DedupCache) {
        for (k, v) in &other.entries {
            self.entries.entry(k.clone()).or_insert_with(|| v.clone());
        }
        if self.floor.is_none() {
            self.floor = other.floor.clone();
        }
    }
}

#[derive(Clone, Debug)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CacheStore { dir: dir.into() }
    }

    /// Store rooted at `$TAXBREAK_CACHE_DIR`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(CacheStore::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, platform_label: &str) -> PathBuf {
        let safe: String = platform_label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}.cache.json"))
    }

    /// Current cache for `platform_label`; a missing file is an empty cache.
    pub fn load(&self, platform_label: &str) -> Result<DedupCache, CacheError> {
        let path = self.path_for(platform_label);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(DedupCache::empty(platform_label)),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let cache: DedupCache =
            serde_json::from_str(&text).map_err(|source| CacheError::Parse { path: path.clone(), source })?;
        if cache.version != CACHE_VERSION {
            return Err(CacheError::Version { path, found: cache.version });
        }
        Ok(cache)
    }

    /// Merges `update` into the stored cache under the writer lock.
    pub fn store(&self, update: &DedupCache) -> Result<DedupCache, CacheError> {
        let path = self.path_for(&update.platform_label);
        let io_err = |source| CacheError::Io { path: path.clone(), source };
        fs::create_dir_all(&self.dir).map_err(io_err)?;
        let _lock = WriterLock::acquire(&path)?;

        let mut merged = self.load(&update.platform_label)?;
        merged.merge(update);
        let text = serde_json::to_string_pretty(&merged).expect("cache serializes");
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(text.as_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(merged)
    }
}

struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    fn acquire(target: &Path) -> Result<Self, CacheError> {
        let path = target.with_extension("json.lock");
        for _ in 0..50 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(WriterLock { path }),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => thread::sleep(Duration::from_millis(20)),
                Err(source) => return Err(CacheError::Io { path, source }),
            }
        }
        Err(CacheError::Locked(target.to_path_buf()))
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
