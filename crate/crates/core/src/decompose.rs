//! Per-invocation decomposition and run-level aggregates.
//!
//! Every decomposed invocation costs `dft + dct + floor` on the host, where
//! `dft = T_Py + baseline`, `dct` is the library front-end excess (zero for
//! framework-native kernels) and `floor` is the null-kernel launch floor.
//! The launch excess `dkt_fw` is reported per invocation but never summed.
//! All sums are exact integer nanoseconds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel_db::{DedupKey, KernelDatabase, KernelFamily};
use crate::phase1::Phase1Output;
use crate::phase2::{self, delta_kt_fw, match_kernel, FamilyRow, MatchKind, ReplayMeasurement};
use crate::stats::{median_by, sample_std};
use crate::trace::{CorrelationId, LinkedTrace, Phase};
use crate::Nanos;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("trace has no linked kernel invocations; HDBI is undefined")]
    EmptyTrace,
    #[error("launch floor must be positive")]
    NonPositiveFloor,
    #[error("no invocation could be matched to a replay measurement")]
    NothingMatched,
    #[error("fusion cannot add launches ({before} -> {after})")]
    LaunchCountIncreased { before: u64, after: u64 },
}

/// How an invocation found its replay measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSource {
    /// The record's own replay (same dedup key).
    Record,
    /// Name fallback to another record's replay.
    Fallback(MatchKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationDecomposition {
    pub invocation_index: usize,
    pub correlation: CorrelationId,
    pub record_key: DedupKey,
    pub t_py: Nanos,
    pub dft: Nanos,
    pub dct: Nanos,
    pub dkt: Nanos,
    pub dkt_fw: Nanos,
    pub t_dispatch: Nanos,
    pub t_launch_raw: Nanos,
    pub lib_flag: bool,
    pub family: KernelFamily,
    pub source: MeasurementSource,
}

impl InvocationDecomposition {
    pub fn host_total(&self) -> Nanos {
        self.dft + self.dct + self.dkt
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmatchedInvocation {
    pub invocation_index: usize,
    pub correlation: CorrelationId,
    pub record_key: DedupKey,
    pub cleaned_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentationMetrics {
    pub total_launches: u64,
    pub unique_names: u64,
    pub kernels_per_token: f64,
    pub diversity_ratio: f64,
    pub gpu_utilization_pct: f64,
}

/// `N/m`, `unique/N` and `device_active/e2e·100`.
pub fn fragmentation_metrics(
    total_launches: u64,
    unique_names: u64,
    output_tokens: u32,
    device_active: Nanos,
    e2e: Nanos,
) -> FragmentationMetrics {
    FragmentationMetrics {
        total_launches,
        unique_names,
        kernels_per_token: total_launches as f64 / output_tokens.max(1) as f64,
        diversity_ratio: if total_launches == 0 { 0.0 } else { unique_names as f64 / total_launches as f64 },
        gpu_utilization_pct: if e2e == 0 { 0.0 } else { device_active as f64 / e2e as f64 * 100.0 },
    }
}

/// `D / (D + O)`; `None` when both are zero.
pub fn hdbi(device_active: Nanos, orchestration: Nanos) -> Option<f64> {
    let total = device_active as u128 + orchestration as u128;
    (total > 0).then(|| device_active as f64 / total as f64)
}

/// Σ t_k over linked kernels (sum semantics; overlaps count twice).
pub fn device_active_total(trace: &LinkedTrace) -> Nanos {
    trace.device_active()
}

/// Length of the union of linked kernel intervals.
pub fn device_busy_time(trace: &LinkedTrace) -> Nanos {
    let mut spans: Vec<(u64, u64)> = trace
        .launches
        .iter()
        .map(|l| {
            let k = trace.kernel_of(l);
            (k.start.0, k.end.0.max(k.start.0))
        })
        .collect();
    spans.sort_unstable();
    let mut busy = 0;
    let mut cur: Option<(u64, u64)> = None;
    for (s, e) in spans {
        cur = match cur {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                busy += ce - cs;
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    if let Some((cs, ce)) = cur {
        busy += ce - cs;
    }
    busy
}

/// Launches removed by fusion times the floor.
pub fn fusion_savings_estimate(n_before: u64, n_after: u64, floor: Nanos) -> Result<Nanos, DecomposeError> {
    if n_after > n_before {
        return Err(DecomposeError::LaunchCountIncreased { before: n_before, after: n_after });
    }
    Ok((n_before - n_after) * floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub workload_label: String,
    pub platform_label: String,
    pub gpu_label: String,
    pub batch_size: u32,
    pub sequence_length: u32,
    pub phase: Phase,
    pub output_tokens: u32,
    pub wall_clock_e2e: Nanos,

    /// Linked invocations in the analysis window.
    pub n_linked: u64,
    /// Decomposed invocations (`N` in the sums).
    pub n_kernels: u64,
    pub n_unmatched: u64,
    pub coverage_pct: f64,

    pub floor: Nanos,
    pub dispatch_baseline: Nanos,
    pub sum_t_py: Nanos,
    /// `N · baseline`.
    pub sum_base_term: Nanos,
    pub sum_dft: Nanos,
    pub sum_dct: Nanos,
    /// `N · floor`.
    pub sum_floor_term: Nanos,
    pub t_orchestration: Nanos,
    pub t_device_active: Nanos,
    pub device_busy_time: Nanos,
    pub hdbi: f64,
    pub idle_fraction: f64,
    /// Set when device-active time exceeds the wall clock.
    pub overlap_flag: bool,
    pub gpu_utilization_pct: f64,
    pub kernels_per_token: f64,
    pub unique_names: u64,
    pub diversity_ratio: f64,
    pub mean_dkt_fw: f64,
    pub per_kernel_host_cost: f64,
    pub ci95_orchestration: Option<f64>,
    pub per_family_table: Vec<FamilyRow>,
}

/// `t_orchestration / N`.
pub fn per_kernel_host_cost(summary: &RunSummary) -> f64 {
    if summary.n_kernels == 0 {
        0.0
    } else {
        summary.t_orchestration as f64 / summary.n_kernels as f64
    }
}

pub struct DecomposeInputs<'a> {
    pub trace: &'a LinkedTrace,
    pub db: &'a KernelDatabase,
    pub phase1: &'a Phase1Output,
    /// Replay measurements by record key.
    pub measurements: &'a BTreeMap<DedupKey, ReplayMeasurement>,
    pub floor: Nanos,
    pub baseline: Nanos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub invocations: Vec<InvocationDecomposition>,
    pub unmatched: Vec<UnmatchedInvocation>,
    pub summary: RunSummary,
}

/// Finds a measurement for a record without its own replay: exact, then
/// substring match on cleaned names of measured records.
fn fallback_measurement<'a>(
    cleaned: &str,
    by_name: &BTreeMap<&str, &'a ReplayMeasurement>,
    names: &[&str],
) -> Option<(&'a ReplayMeasurement, MatchKind)> {
    match match_kernel(names, cleaned)? {
        (name, kind @ (MatchKind::Exact | MatchKind::Substring)) => by_name.get(name.as_str()).map(|m| (*m, kind)),
        (_, MatchKind::MostFrequent) => None,
    }
}

pub fn decompose_run(inp: &DecomposeInputs<'_>) -> Result<Decomposition, DecomposeError> {
    let trace = inp.trace;
    if trace.launches.is_empty() {
        return Err(DecomposeError::EmptyTrace);
    }
    if inp.floor == 0 {
        return Err(DecomposeError::NonPositiveFloor);
    }
    let db = inp.db;

    let mut by_name: BTreeMap<&str, &ReplayMeasurement> = BTreeMap::new();
    for (key, m) in inp.measurements {
        if let Some(r) = db.records.get(key) {
            by_name.entry(r.cleaned_name.as_str()).or_insert(m);
        }
    }
    let measured_names: Vec<&str> = by_name.keys().copied().collect();

    let mut invocations = Vec::new();
    let mut unmatched = Vec::new();
    let mut used: Vec<(&ReplayMeasurement, usize)> = Vec::new();
    for (i, l) in trace.launches.iter().enumerate() {
        let key = &db.invocation_keys[i];
        let record = &db.records[key];
        let correlation = trace.launch_of(l).correlation;
        let found = match inp.measurements.get(key) {
            Some(m) => Some((m, MeasurementSource::Record)),
            None => fallback_measurement(&record.cleaned_name, &by_name, &measured_names)
                .map(|(m, k)| (m, MeasurementSource::Fallback(k))),
        };
        let Some((m, source)) = found else {
            unmatched.push(UnmatchedInvocation {
                invocation_index: i,
                correlation,
                record_key: key.clone(),
                cleaned_name: record.cleaned_name.clone(),
            });
            continue;
        };
        let t_py = inp.phase1.samples[i].t_py;
        let t_dispatch = m.dispatch_ns();
        let t_launch = m.launch_ns();
        let dkt_fw = delta_kt_fw(t_launch, inp.floor);
        invocations.push(InvocationDecomposition {
            invocation_index: i,
            correlation,
            record_key: key.clone(),
            t_py,
            dft: t_py + inp.baseline,
            dct: phase2::delta_ct_ns(t_dispatch, record.lib_flag, inp.baseline),
            dkt: inp.floor,
            dkt_fw,
            t_dispatch,
            t_launch_raw: inp.floor + dkt_fw,
            lib_flag: record.lib_flag,
            family: record.family,
            source,
        });
        used.push((m, i));
    }
    if invocations.is_empty() {
        return Err(DecomposeError::NothingMatched);
    }

    let meta = &trace.bundle.metadata;
    let n = invocations.len() as u64;
    let n_linked = trace.launches.len() as u64;
    let sum_t_py: Nanos = invocations.iter().map(|d| d.t_py).sum();
    let sum_dft: Nanos = invocations.iter().map(|d| d.dft).sum();
    let sum_dct: Nanos = invocations.iter().map(|d| d.dct).sum();
    let sum_floor_term = n * inp.floor;
    let t_orchestration = sum_dft + sum_dct + sum_floor_term;
    let t_device_active = device_active_total(trace);
    let e2e = meta.wall_clock_e2e;
    let unique: BTreeSet<&str> = trace
        .launches
        .iter()
        .enumerate()
        .map(|(i, _)| db.records[&db.invocation_keys[i]].cleaned_name.as_str())
        .collect();
    let frag = fragmentation_metrics(n_linked, unique.len() as u64, meta.output_tokens, t_device_active, e2e);
    let measured: BTreeMap<&DedupKey, &ReplayMeasurement> = used.iter().map(|(m, _)| (&m.record_key, *m)).collect();

    let mut summary = RunSummary {
        workload_label: meta.workload_label.clone(),
        platform_label: meta.platform_label.clone(),
        gpu_label: meta.gpu_label.clone(),
        batch_size: meta.batch_size,
        sequence_length: meta.sequence_length,
        phase: meta.phase,
        output_tokens: meta.output_tokens,
        wall_clock_e2e: e2e,
        n_linked,
        n_kernels: n,
        n_unmatched: unmatched.len() as u64,
        coverage_pct: n as f64 / n_linked as f64 * 100.0,
        floor: inp.floor,
        dispatch_baseline: inp.baseline,
        sum_t_py,
        sum_base_term: n * inp.baseline,
        sum_dft,
        sum_dct,
        sum_floor_term,
        t_orchestration,
        t_device_active,
        device_busy_time: device_busy_time(trace),
        hdbi: hdbi(t_device_active, t_orchestration).expect("orchestration is positive"),
        idle_fraction: if e2e == 0 { 0.0 } else { (e2e.saturating_sub(t_device_active)) as f64 / e2e as f64 },
        overlap_flag: t_device_active > e2e,
        gpu_utilization_pct: frag.gpu_utilization_pct,
        kernels_per_token: frag.kernels_per_token,
        unique_names: frag.unique_names,
        diversity_ratio: frag.diversity_ratio,
        mean_dkt_fw: invocations.iter().map(|d| d.dkt_fw as f64).sum::<f64>() / n as f64,
        per_kernel_host_cost: 0.0,
        ci95_orchestration: ci95_orchestration(&invocations, &used, db, inp.floor),
        per_family_table: phase2::family_percentile_table(measured.values().copied(), db, inp.floor),
    };
    summary.per_kernel_host_cost = per_kernel_host_cost(&summary);
    Ok(Decomposition { invocations, unmatched, summary })
}

/// Normal-approximation 95% interval half-width of per-run orchestration
/// totals. Run `j` recomputes the baseline and library excess from the
/// `j`-th replay samples.
fn ci95_orchestration(
    invocations: &[InvocationDecomposition],
    used: &[(&ReplayMeasurement, usize)],
    db: &KernelDatabase,
    floor: Nanos,
) -> Option<f64> {
    let runs = used.iter().map(|(m, _)| m.t_dispatch_samples.len()).min()?;
    if runs < 2 {
        return None;
    }
    let mut distinct: BTreeMap<&DedupKey, &ReplayMeasurement> = BTreeMap::new();
    for (m, _) in used {
        distinct.insert(&m.record_key, m);
    }
    let mut totals = Vec::with_capacity(runs);
    for j in 0..runs {
        let native: Vec<Nanos> = distinct
            .values()
            .filter(|m| db.records.get(&m.record_key).is_some_and(|r| !r.lib_flag))
            .map(|m| m.t_dispatch_samples[j])
            .collect();
        let base = median_by(&native)?;
        let total: u128 = invocations
            .iter()
            .zip(used)
            .map(|(d, (m, _))| {
                let dct = phase2::delta_ct_ns(m.t_dispatch_samples[j], d.lib_flag, base);
                (d.t_py + base + dct + floor) as u128
            })
            .sum();
        totals.push(total as f64);
    }
    sample_std(&totals).map(|s| 1.96 * s / (runs as f64).sqrt())
}
