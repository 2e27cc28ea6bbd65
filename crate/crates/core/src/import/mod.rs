//! Importers from external profiler outputs into [`TraceBundle`]s.
//!
//! Every importer normalizes the epoch (earliest event at 0) and
//! canonicalizes event order, so importing, exporting to the canonical
//! format and re-importing is the identity.

mod framework;
mod mapping;
mod tables;
mod units;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::trace::io::BundleError;
use crate::trace::{RunMetadata, TraceBundle};

pub use framework::{import_framework_trace, import_framework_trace_str};
pub use mapping::FrameworkMapping;
pub use tables::{import_profiler_tables, KERNEL_TABLE, NVTX_TABLE, RUNTIME_TABLE};
pub use units::{detect_time_unit, parse_decimal_ns, TimeUnit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportSourceKind {
    FrameworkTraceEvents,
    SystemProfilerTables,
    CanonicalBundle,
}

impl fmt::Display for ImportSourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportSourceKind::FrameworkTraceEvents => "framework_trace_events",
            ImportSourceKind::SystemProfilerTables => "system_profiler_tables",
            ImportSourceKind::CanonicalBundle => "canonical_bundle",
        })
    }
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported schema version {found}")]
    UnsupportedSchemaVersion { path: PathBuf, found: String },
    #[error("{dir}: missing table {table} (expected {table}.csv or {table}.tsv)")]
    MissingTable { dir: PathBuf, table: String },
    #[error("{table}: missing column '{column}'")]
    MissingColumn { table: String, column: String },
    #[error("{table} row {row}: {message}")]
    BadValue { table: String, row: usize, message: String },
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

impl ImportError {
    pub fn missing_column(&self) -> Option<&str> {
        match self {
            ImportError::MissingColumn { column, .. } => Some(column),
            _ => None,
        }
    }
}

/// What an import kept and dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub source_kind: ImportSourceKind,
    pub time_unit: Option<TimeUnit>,
    pub framework_ops: usize,
    pub runtime_calls: usize,
    pub kernels: usize,
    pub nvtx_ranges: usize,
    /// Runtime or kernel events without a correlation argument.
    pub missing_correlation: usize,
    /// Events of phases or categories the mapping does not cover.
    pub ignored_events: usize,
}

impl ImportReport {
    fn new(source_kind: ImportSourceKind, time_unit: Option<TimeUnit>) -> Self {
        ImportReport {
            source_kind,
            time_unit,
            framework_ops: 0,
            runtime_calls: 0,
            kernels: 0,
            nvtx_ranges: 0,
            missing_correlation: 0,
            ignored_events: 0,
        }
    }

    fn count(&mut self, b: &TraceBundle) {
        self.framework_ops = b.framework_ops.len();
        self.runtime_calls = b.runtime_calls.len();
        self.kernels = b.kernels.len();
        self.nvtx_ranges = b.nvtx_ranges.len();
    }
}

#[derive(Clone, Debug, Default)]
pub struct ImportOptions {
    /// Run metadata; inferred from the trace span when absent.
    pub metadata: Option<RunMetadata>,
    /// Overrides unit auto-detection.
    pub time_unit: Option<TimeUnit>,
    pub mapping: FrameworkMapping,
}

/// Reads a metadata sidecar (a JSON `RunMetadata`).
pub fn read_metadata(path: &Path) -> Result<RunMetadata, ImportError> {
    let text = fs::read_to_string(path).map_err(|source| ImportError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| ImportError::Parse { path: path.into(), message: e.to_string() })
}

fn finish(mut bundle: TraceBundle, opts: &ImportOptions) -> TraceBundle {
    bundle.normalize_epoch();
    bundle.metadata = opts.metadata.clone().unwrap_or_else(|| RunMetadata::inferred(bundle.span()));
    bundle.canonicalize();
    bundle
}

/// Canonical bundles pass through with the same normalization as the
/// other importers.
pub fn import_bundle(path: &Path, opts: &ImportOptions) -> Result<(TraceBundle, ImportReport), ImportError> {
    let mut b = crate::trace::io::read_bundle(path)?;
    b.normalize_epoch();
    if let Some(m) = &opts.metadata {
        b.metadata = m.clone();
    }
    b.canonicalize();
    let mut report = ImportReport::new(ImportSourceKind::CanonicalBundle, Some(TimeUnit::Nanoseconds));
    report.count(&b);
    Ok((b, report))
}

/// Picks the importer from the input: a directory holds profiler tables, a
/// JSON document with a bundle `version` tag is a canonical bundle, and any
/// other file is read as trace events.
pub fn import_any(path: &Path, opts: &ImportOptions) -> Result<(TraceBundle, ImportReport), ImportError> {
    if path.is_dir() {
        return import_profiler_tables(path, opts);
    }
    if is_bundle_file(path)? {
        return import_bundle(path, opts);
    }
    import_framework_trace(path, opts)
}

fn is_bundle_file(path: &Path) -> Result<bool, ImportError> {
    #[derive(serde::Deserialize)]
    struct Tag {
        version: Option<String>,
    }
    let text = fs::read_to_string(path).map_err(|source| ImportError::Io { path: path.into(), source })?;
    Ok(serde_json::from_str::<Tag>(&text)
        .ok()
        .and_then(|t| t.version)
        .is_some_and(|v| v.starts_with("taxbreak-bundle/")))
}
