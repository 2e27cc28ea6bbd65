//! Report documents and plot tables.
//!
//! Internal arithmetic stays in integer ns; rounding happens here, at
//! emission: times to 0.01 µs and ratios to 4 decimal places in the
//! headline block. The full-precision summary is kept alongside.

mod pipeline;
pub mod plot;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::AnalysisConfig;
use crate::decompose::{InvocationDecomposition, RunSummary, UnmatchedInvocation};
use crate::diagnose::Diagnosis;
use crate::phase2::FamilyRow;

pub use pipeline::{
    analyze, analyze_phase1, Analysis, AnalyzeError, AnalyzeInputs, FloorInfo, FloorSource, Phase1Analysis, ReplayStats,
};

pub const REPORT_VERSION: &str = "taxbreak-report/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl ProvenanceEntry {
    pub fn of_bytes(role: impl Into<String>, path: impl Into<String>, bytes: &[u8]) -> Self {
        ProvenanceEntry { role: role.into(), path: path.into(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

pub fn round_to(v: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (v * scale).round() / scale
}

/// Nanoseconds as microseconds rounded to 0.01.
pub fn us(ns: u64) -> f64 {
    round_to(ns as f64 / 1000.0, 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub t_orchestration_us: f64,
    pub t_device_active_us: f64,
    pub sum_t_py_us: f64,
    pub sum_base_term_us: f64,
    pub sum_dct_us: f64,
    pub sum_floor_term_us: f64,
    pub floor_us: f64,
    pub dispatch_baseline_us: f64,
    pub per_kernel_host_cost_us: f64,
    pub hdbi: f64,
    pub idle_fraction: f64,
    pub diversity_ratio: f64,
    pub coverage_pct: f64,
    pub kernels_per_token: f64,
    pub gpu_utilization_pct: f64,
}

impl Headline {
    pub fn of(s: &RunSummary) -> Self {
        Headline {
            t_orchestration_us: us(s.t_orchestration),
            t_device_active_us: us(s.t_device_active),
            sum_t_py_us: us(s.sum_t_py),
            sum_base_term_us: us(s.sum_base_term),
            sum_dct_us: us(s.sum_dct),
            sum_floor_term_us: us(s.sum_floor_term),
            floor_us: us(s.floor),
            dispatch_baseline_us: us(s.dispatch_baseline),
            per_kernel_host_cost_us: round_to(s.per_kernel_host_cost / 1000.0, 2),
            hdbi: round_to(s.hdbi, 4),
            idle_fraction: round_to(s.idle_fraction, 4),
            diversity_ratio: round_to(s.diversity_ratio, 4),
            coverage_pct: round_to(s.coverage_pct, 2),
            kernels_per_token: round_to(s.kernels_per_token, 4),
            gpu_utilization_pct: round_to(s.gpu_utilization_pct, 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub version: String,
    pub headline: Headline,
    pub summary: RunSummary,
    pub diagnosis: Diagnosis,
    pub per_family_table: Vec<FamilyRow>,
    /// File name of the per-invocation table written next to the report.
    pub invocations_table: Option<String>,
    pub floor: FloorInfo,
    pub replay: ReplayStats,
    pub phase1: Phase1Stats,
    pub window: Option<[u64; 2]>,
    pub unmatched: Vec<UnmatchedInvocation>,
    pub validation_warnings: usize,
    pub config: AnalysisConfig,
    pub provenance: Vec<ProvenanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase1Stats {
    pub samples: usize,
    pub flagged: usize,
    pub skew_clamped: usize,
    pub kernel_records: usize,
    pub cached_records: usize,
}

impl ReportDocument {
    pub fn build(
        a: &Analysis,
        config: &AnalysisConfig,
        invocations_table: Option<String>,
        mut provenance: Vec<ProvenanceEntry>,
    ) -> Self {
        provenance.push(ProvenanceEntry { role: "config".into(), path: String::new(), sha256: config.digest() });
        provenance.sort_by(|x, y| (&x.role, &x.path).cmp(&(&y.role, &y.path)));
        let s = &a.decomposition.summary;
        ReportDocument {
            version: REPORT_VERSION.into(),
            headline: Headline::of(s),
            summary: s.clone(),
            diagnosis: a.diagnosis.clone(),
            per_family_table: s.per_family_table.clone(),
            invocations_table,
            floor: a.floor.clone(),
            replay: a.replay_stats.clone(),
            phase1: Phase1Stats {
                samples: a.p1.phase1.samples.len(),
                flagged: a.p1.phase1.flagged_count,
                skew_clamped: a.p1.phase1.skew_count,
                kernel_records: a.p1.db.len(),
                cached_records: a.replay_stats.cache_hits,
            },
            window: a.p1.window.map(|(s, e)| [s.0, e.0]),
            unmatched: a.decomposition.unmatched.clone(),
            validation_warnings: a.p1.validation.violations.len(),
            config: config.clone(),
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The exact run summary as written to `run.summary`.
pub fn summary_to_json(s: &RunSummary) -> String {
    serde_json::to_string_pretty(s).expect("summary serializes") + "\n"
}

pub fn summary_from_json(text: &str) -> Result<RunSummary, serde_json::Error> {
    serde_json::from_str(text)
}

/// Per-invocation table, tab separated.
pub fn invocations_to_tsv(rows: &[InvocationDecomposition]) -> String {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    w.write_record([
        "invocation",
        "correlation",
        "record_key",
        "family",
        "lib_flag",
        "t_py_ns",
        "dft_ns",
        "dct_ns",
        "dkt_ns",
        "dkt_fw_ns",
        "t_dispatch_ns",
        "t_launch_raw_ns",
        "source",
    ])
    .expect("in-memory write");
    for r in rows {
        let source = match r.source {
            crate::decompose::MeasurementSource::Record => "record".to_string(),
            crate::decompose::MeasurementSource::Fallback(k) => format!("fallback_{k}"),
        };
        w.write_record([
            r.invocation_index.to_string(),
            r.correlation.to_string(),
            r.record_key.to_string(),
            r.family.to_string(),
            u8::from(r.lib_flag).to_string(),
            r.t_py.to_string(),
            r.dft.to_string(),
            r.dct.to_string(),
            r.dkt.to_string(),
            r.dkt_fw.to_string(),
            r.t_dispatch.to_string(),
            r.t_launch_raw.to_string(),
            source,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rules() {
        assert_eq!(us(5_083_064), 5083.06);
        assert_eq!(us(4_505), 4.51);
        assert_eq!(round_to(0.73654, 4), 0.7365);
    }

    #[test]
    fn provenance_digest() {
        let p = ProvenanceEntry::of_bytes("trace", "a.bundle", b"abc");
        assert_eq!(p.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
