//! The end-to-end analysis: validate, link, window, kernel database,
//! framework translation, replay measurements, floor, decomposition and
//! diagnosis.

use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AnalysisConfig;
use crate::decompose::{decompose_run, DecomposeError, DecomposeInputs, Decomposition};
use crate::diagnose::{prescribe, Diagnosis};
use crate::kernel_db::{build_kernel_db, DedupCache, DedupKey, KernelDatabase, ReplayPartition};
use crate::phase1::{extract_framework_translation, select_last_iteration, Phase1Output};
use crate::phase2::{
    compute_dispatch_baseline, compute_sys_floor, measure_record, FloorStats, MatchKind, Phase2Error, ReplayMeasurement,
};
use crate::trace::{
    link_by_correlation, validate_bundle, LinkError, LinkedTrace, Timestamp, TraceBundle, ValidationReport,
};
use crate::Nanos;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("{role} bundle failed validation with {} error(s); first: {}", .report.violations.iter().filter(|v| !v.kind.is_warning()).count(), first_error(.report))]
    Validation { role: String, report: ValidationReport },
    #[error("{role} bundle: {source}")]
    Link { role: String, source: LinkError },
    #[error("no launch floor available: pass a null-kernel replay with --null-replay (or list one in the manifest), or use a cache that holds a floor")]
    MissingFloor,
    #[error("{role}: {source}")]
    Floor { role: String, source: Phase2Error },
    #[error("replay of record {key}: {source}")]
    Replay { key: DedupKey, source: Phase2Error },
    #[error(transparent)]
    Baseline(Phase2Error),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

fn first_error(report: &ValidationReport) -> String {
    report.violations.iter().find(|v| !v.kind.is_warning()).map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Clone, Debug)]
pub struct AnalyzeInputs {
    pub full: TraceBundle,
    /// Replay bundles by record key.
    pub replays: BTreeMap<DedupKey, TraceBundle>,
    pub null_replay: Option<TraceBundle>,
    pub replay_floor: Option<TraceBundle>,
    pub cache: Option<DedupCache>,
    pub config: AnalysisConfig,
}

impl AnalyzeInputs {
    pub fn new(full: TraceBundle) -> Self {
        AnalyzeInputs {
            full,
            replays: BTreeMap::new(),
            null_replay: None,
            replay_floor: None,
            cache: None,
            config: AnalysisConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorSource {
    Replay,
    Standalone,
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorInfo {
    pub standalone: Option<FloorStats>,
    pub replay: Option<FloorStats>,
    pub cached: Option<FloorStats>,
    pub source: FloorSource,
    /// Floor charged per launch, in ns.
    pub value: Nanos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub records: usize,
    pub replayed: usize,
    pub cache_hits: usize,
    pub unmeasured: usize,
    /// Replay bundles whose key is not in the kernel database.
    pub unknown_keys: usize,
    pub match_kinds: BTreeMap<MatchKind, usize>,
    pub empty_scopes: usize,
    pub dropped_multi_launch: usize,
    pub dropped_unordered: usize,
    pub dropped_unlinked: usize,
}

/// Everything Phase 1 produces; enough to export the kernel database for
/// the capture side.
#[derive(Clone, Debug)]
pub struct Phase1Analysis {
    pub validation: ValidationReport,
    pub trace: LinkedTrace,
    pub window: Option<(Timestamp, Timestamp)>,
    pub db: KernelDatabase,
    pub phase1: Phase1Output,
    pub partition: ReplayPartition,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub p1: Phase1Analysis,
    pub measurements: BTreeMap<DedupKey, ReplayMeasurement>,
    pub replay_stats: ReplayStats,
    pub floor: FloorInfo,
    pub decomposition: Decomposition,
    pub diagnosis: Diagnosis,
    /// New measurements and the floor, for the dedup cache.
    pub cache_update: DedupCache,
}

fn validated_link(role: &str, bundle: &TraceBundle) -> Result<(LinkedTrace, ValidationReport), AnalyzeError> {
    let report = validate_bundle(bundle);
    if report.has_errors() {
        return Err(AnalyzeError::Validation { role: role.into(), report });
    }
    let linked = link_by_correlation(bundle).map_err(|source| AnalyzeError::Link { role: role.into(), source })?;
    Ok((linked, report))
}

pub fn analyze_phase1(
    full: &TraceBundle,
    config: &AnalysisConfig,
    cache: Option<&DedupCache>,
) -> Result<Phase1Analysis, AnalyzeError> {
    let (linked, validation) = validated_link("full-trace", full)?;
    let (trace, window) = select_last_iteration(&linked, &config.iteration_marker_prefix);
    let db = build_kernel_db(&trace, &config.patterns);
    let phase1 = extract_framework_translation(&trace, &config.iteration_marker_prefix);
    let empty = DedupCache::empty(&full.metadata.platform_label);
    let partition = db.partition(cache.unwrap_or(&empty));
    info!("phase 1: {} invocations, {} records ({} cached)", trace.n_kernels(), db.len(), partition.cache_hits.len());
    Ok(Phase1Analysis { validation, trace, window, db, phase1, partition })
}

fn floor_of(role: &str, bundle: &TraceBundle, label: &str) -> Result<FloorStats, AnalyzeError> {
    let (linked, _) = validated_link(role, bundle)?;
    compute_sys_floor(&linked, label).map_err(|source| AnalyzeError::Floor { role: role.into(), source })
}

pub fn analyze(inputs: &AnalyzeInputs) -> Result<Analysis, AnalyzeError> {
    let full = &inputs.full;
    let cfg = &inputs.config;
    let label = cfg.dispatch_scope_label.as_str();
    let p1 = analyze_phase1(full, cfg, inputs.cache.as_ref())?;

    let standalone = inputs.null_replay.as_ref().map(|b| floor_of("null-replay", b, label)).transpose()?;
    let replay = inputs.replay_floor.as_ref().map(|b| floor_of("replay-floor", b, label)).transpose()?;
    let cached = inputs.cache.as_ref().and_then(|c| c.floor.clone());
    let (source, stats) = match (&replay, &standalone, &cached) {
        (Some(r), _, _) if cfg.prefer_replay_floor => (FloorSource::Replay, r),
        (_, Some(s), _) => (FloorSource::Standalone, s),
        (Some(r), None, _) => (FloorSource::Replay, r),
        (None, None, Some(c)) => (FloorSource::Cache, c),
        (None, None, None) => return Err(AnalyzeError::MissingFloor),
    };
    let floor =
        FloorInfo { value: stats.floor_ns(), standalone: standalone.clone(), replay: replay.clone(), cached, source };

    let mut measurements = BTreeMap::new();
    let mut stats = ReplayStats { records: p1.db.len(), ..ReplayStats::default() };
    let mut cache_update = DedupCache::empty(&full.metadata.platform_label);
    cache_update.floor = standalone.or(replay);
    for (key, record) in &p1.db.records {
        if let Some(m) = inputs.cache.as_ref().and_then(|c| c.entries.get(key)) {
            measurements.insert(key.clone(), m.clone());
            stats.cache_hits += 1;
            continue;
        }
        let Some(bundle) = inputs.replays.get(key) else {
            stats.unmeasured += 1;
            continue;
        };
        let role = format!("replay {key}");
        let (linked, _) = validated_link(&role, bundle)?;
        let (m, timings) = measure_record(key, &record.cleaned_name, &linked, label)
            .map_err(|source| AnalyzeError::Replay { key: key.clone(), source })?;
        stats.replayed += 1;
        *stats.match_kinds.entry(m.match_kind).or_default() += 1;
        stats.empty_scopes += timings.empty_scopes;
        stats.dropped_multi_launch += timings.dropped_multi_launch;
        stats.dropped_unordered += timings.dropped_unordered;
        stats.dropped_unlinked += timings.dropped_unlinked;
        cache_update.entries.insert(key.clone(), m.clone());
        measurements.insert(key.clone(), m);
    }
    stats.unknown_keys = inputs.replays.keys().filter(|k| !p1.db.records.contains_key(*k)).count();
    if stats.unknown_keys > 0 {
        warn!("{} replay traces belong to records not present in the full trace", stats.unknown_keys);
    }

    let baseline = compute_dispatch_baseline(measurements.values(), &p1.db).map_err(AnalyzeError::Baseline)?;
    let decomposition = decompose_run(&DecomposeInputs {
        trace: &p1.trace,
        db: &p1.db,
        phase1: &p1.phase1,
        measurements: &measurements,
        floor: floor.value,
        baseline,
    })?;
    let diagnosis = prescribe(&decomposition.summary, &cfg.diagnosis);
    Ok(Analysis { p1, measurements, replay_stats: stats, floor, decomposition, diagnosis, cache_update })
}
