//! Effective analysis configuration.
//!
//! Loaded from a JSON file whose fields are all optional; the CLI applies
//! its flags on top. The resolved value is embedded in every report.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnose::DiagnosisConfig;
use crate::kernel_db::PatternConfig;
use crate::phase1::ITERATION_MARKER_PREFIX;
use crate::phase2::DISPATCH_SCOPE_LABEL;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("config file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub patterns: PatternConfig,
    pub diagnosis: DiagnosisConfig,
    /// Minimum share of invocations with a replay measurement.
    pub min_coverage_pct: f64,
    pub dispatch_scope_label: String,
    pub iteration_marker_prefix: String,
    /// Use the in-context replay floor when the manifest provides one.
    pub prefer_replay_floor: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            patterns: PatternConfig::default(),
            diagnosis: DiagnosisConfig::default(),
            min_coverage_pct: 95.0,
            dispatch_scope_label: DISPATCH_SCOPE_LABEL.into(),
            iteration_marker_prefix: ITERATION_MARKER_PREFIX.into(),
            prefer_replay_floor: true,
        }
    }
}

impl AnalysisConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = AnalysisConfig::from_json(r#"{"min_coverage_pct": 80, "diagnosis": {"kappa": 0.4}}"#, Path::new("c"))
            .unwrap();
        assert_eq!(cfg.min_coverage_pct, 80.0);
        assert_eq!(cfg.diagnosis.kappa, 0.4);
        assert_eq!(cfg.diagnosis.theta_low, 0.3);
        assert_eq!(cfg.patterns, PatternConfig::default());
    }

    #[test]
    fn digest_tracks_content() {
        let a = AnalysisConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.min_coverage_pct = 90.0;
        assert_ne!(a.digest(), b.digest());
    }
}
