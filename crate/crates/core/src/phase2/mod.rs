//! Isolation-replay and null-kernel analysis.
//!
//! Each replayed operator dispatch sits inside an NVTX scope. Within a scope
//! the scope start, the launch-call start and the kernel start give
//! `T_dispatch = t_api - t_nvtx` and `T_launch = t_kernel - t_api`.

mod manifest;
mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel_db::{clean_kernel_name, DedupKey, KernelDatabase, KernelFamily};
use crate::stats::{mean, median_by, percentile_sorted, round_ns};
use crate::trace::{LinkedTrace, Timestamp};
use crate::Nanos;

pub use manifest::{ManifestEntry, ManifestError, ManifestStatus, ReplayManifest, MANIFEST_VERSION};
pub use matching::{match_kernel, MatchKind};

/// NVTX label of one replayed dispatch.
pub const DISPATCH_SCOPE_LABEL: &str = "aten_dispatch";

/// Fewest launch samples accepted for a floor estimate.
pub const MIN_FLOOR_SAMPLES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Phase2Error {
    #[error("trace has no '{0}' NVTX scopes; it does not look like a replay trace")]
    NoNvtxScopes(String),
    #[error("null-kernel replay has {found} usable launch samples, at least {MIN_FLOOR_SAMPLES} are required")]
    InsufficientSamples { found: usize },
    #[error("no framework-native kernel has a replay measurement, so the dispatch baseline is undefined; replay at least one non-library kernel")]
    NoFrameworkNativeKernels,
    #[error("replay trace for record {0} contains no usable scoped invocation")]
    NoScopedInvocations(DedupKey),
}

/// One NVTX-scoped replay invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScopedInvocation {
    pub t_nvtx: Timestamp,
    pub t_api: Timestamp,
    pub t_kernel: Timestamp,
    pub cleaned_name: String,
}

impl ScopedInvocation {
    pub fn t_dispatch(&self) -> Nanos {
        self.t_api.0 - self.t_nvtx.0
    }

    pub fn t_launch(&self) -> Nanos {
        self.t_kernel.0 - self.t_api.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReplayTimings {
    /// Usable invocations in scope order.
    pub invocations: Vec<ScopedInvocation>,
    /// Scopes that enclosed no linked launch.
    pub empty_scopes: usize,
    /// Launches dropped because their scope held more than one launch.
    pub dropped_multi_launch: usize,
    /// Scopes whose timestamps were out of order (api before scope start or
    /// kernel before api).
    pub dropped_unordered: usize,
    /// Launches inside a scope whose kernel never arrived.
    pub dropped_unlinked: usize,
}

/// Extracts `(t_nvtx, t_api, t_kernel)` for every scope labeled `label`.
pub fn extract_replay_timings(trace: &LinkedTrace, label: &str) -> Result<ReplayTimings, Phase2Error> {
    let b = &trace.bundle;
    let mut scopes: Vec<usize> = (0..b.nvtx_ranges.len()).filter(|&i| b.nvtx_ranges[i].label == label).collect();
    if scopes.is_empty() {
        return Err(Phase2Error::NoNvtxScopes(label.to_string()));
    }
    scopes.sort_by_key(|&i| (b.nvtx_ranges[i].start, i));

    let mut per_scope: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (li, l) in trace.launches.iter().enumerate() {
        // innermost dispatch scope only, so nested labels do not double count
        if let Some(&s) = l.nvtx_chain.iter().find(|&&n| b.nvtx_ranges[n].label == label) {
            per_scope.entry(s).or_default().push(li);
        }
    }
    let mut unlinked: BTreeMap<usize, usize> = BTreeMap::new();
    for &ri in &trace.residue.orphan_launches {
        let call = &b.runtime_calls[ri];
        if let Some(&s) = scopes.iter().find(|&&s| {
            let r = &b.nvtx_ranges[s];
            r.thread == call.thread && r.start <= call.start && call.end <= r.end
        }) {
            *unlinked.entry(s).or_default() += 1;
        }
    }

    let mut out = ReplayTimings::default();
    for s in scopes {
        let scope = &b.nvtx_ranges[s];
        let launches = per_scope.get(&s).map(Vec::as_slice).unwrap_or(&[]);
        let n_unlinked = unlinked.get(&s).copied().unwrap_or(0);
        if launches.len() + n_unlinked > 1 {
            out.dropped_multi_launch += launches.len() + n_unlinked;
            continue;
        }
        if n_unlinked == 1 {
            out.dropped_unlinked += 1;
            continue;
        }
        let Some(&li) = launches.first() else {
            out.empty_scopes += 1;
            continue;
        };
        let l = &trace.launches[li];
        let api = trace.launch_of(l).start;
        let kernel = trace.kernel_of(l);
        if api < scope.start || kernel.start < api {
            out.dropped_unordered += 1;
            continue;
        }
        out.invocations.push(ScopedInvocation {
            t_nvtx: scope.start,
            t_api: api,
            t_kernel: kernel.start,
            cleaned_name: clean_kernel_name(&kernel.raw_name),
        });
    }
    Ok(out)
}

/// Null-kernel launch statistics. Percentiles are nearest-rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorStats {
    pub mean: f64,
    pub p50: Nanos,
    pub p5: Nanos,
    pub p95: Nanos,
    pub min: Nanos,
    pub max: Nanos,
    pub sample_count: usize,
}

impl FloorStats {
    pub fn from_samples(samples: &[Nanos]) -> Result<FloorStats, Phase2Error> {
        if samples.len() < MIN_FLOOR_SAMPLES {
            return Err(Phase2Error::InsufficientSamples { found: samples.len() });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        Ok(FloorStats {
            mean: mean(&sorted).expect("non-empty"),
            p50: percentile_sorted(&sorted, 50.0),
            p5: percentile_sorted(&sorted, 5.0),
            p95: percentile_sorted(&sorted, 95.0),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            sample_count: sorted.len(),
        })
    }

    /// The per-launch constant charged as `ΔKT`: the mean, in whole ns.
    pub fn floor_ns(&self) -> Nanos {
        round_ns(self.mean)
    }
}

/// Launch-gap samples of a null-kernel replay after skipping the trace's
/// warm-up invocations.
///
/// Scoped invocations are used when the trace carries dispatch scopes;
/// otherwise every linked launch counts as one invocation.
pub fn null_kernel_samples(null_replay: &LinkedTrace, label: &str) -> Vec<Nanos> {
    let all: Vec<Nanos> = match extract_replay_timings(null_replay, label) {
        Ok(t) => t.invocations.iter().map(ScopedInvocation::t_launch).collect(),
        Err(_) => null_replay
            .launches
            .iter()
            .filter_map(|l| null_replay.kernel_of(l).start.since(null_replay.launch_of(l).start))
            .collect(),
    };
    let skip = null_replay.bundle.metadata.warmup_runs as usize;
    all.into_iter().skip(skip).collect()
}

pub fn compute_sys_floor(null_replay: &LinkedTrace, label: &str) -> Result<FloorStats, Phase2Error> {
    FloorStats::from_samples(&null_kernel_samples(null_replay, label))
}

/// Per-record replay result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMeasurement {
    pub record_key: DedupKey,
    pub t_dispatch_mean: f64,
    pub t_launch_mean: f64,
    pub t_dispatch_samples: Vec<Nanos>,
    pub t_launch_samples: Vec<Nanos>,
    pub matched_kernel_name: String,
    pub match_kind: MatchKind,
}

impl ReplayMeasurement {
    pub fn from_samples(
        record_key: DedupKey,
        matched_kernel_name: String,
        match_kind: MatchKind,
        t_dispatch_samples: Vec<Nanos>,
        t_launch_samples: Vec<Nanos>,
    ) -> Self {
        ReplayMeasurement {
            record_key,
            t_dispatch_mean: mean(&t_dispatch_samples).unwrap_or(0.0),
            t_launch_mean: mean(&t_launch_samples).unwrap_or(0.0),
            t_dispatch_samples,
            t_launch_samples,
            matched_kernel_name,
            match_kind,
        }
    }

    pub fn dispatch_ns(&self) -> Nanos {
        round_ns(self.t_dispatch_mean)
    }

    pub fn launch_ns(&self) -> Nanos {
        round_ns(self.t_launch_mean)
    }
}

/// Measurement of one record from its replay trace.
///
/// The candidate set is every usable scoped invocation in the trace; the
/// record's kernel is chosen by [`match_kernel`], the first `W` matching
/// invocations are skipped and the next `R` are kept (`W`, `R` from the
/// replay trace's metadata).
pub fn measure_record(
    key: &DedupKey,
    target_cleaned_name: &str,
    replay: &LinkedTrace,
    label: &str,
) -> Result<(ReplayMeasurement, ReplayTimings), Phase2Error> {
    let timings = extract_replay_timings(replay, label)?;
    let names: Vec<&str> = timings.invocations.iter().map(|i| i.cleaned_name.as_str()).collect();
    let (chosen, kind) =
        match_kernel(&names, target_cleaned_name).ok_or_else(|| Phase2Error::NoScopedInvocations(key.clone()))?;
    let meta = &replay.bundle.metadata;
    let kept: Vec<&ScopedInvocation> = timings
        .invocations
        .iter()
        .filter(|i| i.cleaned_name == chosen)
        .skip(meta.warmup_runs as usize)
        .take(meta.measured_runs as usize)
        .collect();
    if kept.is_empty() {
        return Err(Phase2Error::NoScopedInvocations(key.clone()));
    }
    let m = ReplayMeasurement::from_samples(
        key.clone(),
        chosen,
        kind,
        kept.iter().map(|i| i.t_dispatch()).collect(),
        kept.iter().map(|i| i.t_launch()).collect(),
    );
    Ok((m, timings))
}

/// Nearest-rank median of `t_dispatch_mean` over framework-native records,
/// rounded to whole ns.
pub fn compute_dispatch_baseline<'a>(
    measurements: impl IntoIterator<Item = &'a ReplayMeasurement>,
    db: &KernelDatabase,
) -> Result<Nanos, Phase2Error> {
    let native: Vec<f64> = measurements
        .into_iter()
        .filter(|m| db.records.get(&m.record_key).is_some_and(|r| !r.lib_flag))
        .map(|m| m.t_dispatch_mean)
        .collect();
    median_by(&native).map(round_ns).ok_or(Phase2Error::NoFrameworkNativeKernels)
}

/// Library front-end excess over the baseline; zero for native kernels.
pub fn delta_ct(measurement: &ReplayMeasurement, lib_flag: bool, baseline: Nanos) -> Nanos {
    delta_ct_ns(measurement.dispatch_ns(), lib_flag, baseline)
}

pub fn delta_ct_ns(t_dispatch: Nanos, lib_flag: bool, baseline: Nanos) -> Nanos {
    if lib_flag {
        t_dispatch.saturating_sub(baseline)
    } else {
        0
    }
}

/// Launch latency above the null-kernel floor.
pub fn delta_kt_fw(t_launch: Nanos, floor: Nanos) -> Nanos {
    t_launch.saturating_sub(floor)
}

/// `floor + ΔKT_fw`: the observed launch latency, or the floor when the
/// observation sits below it.
pub fn t_launch_raw(t_launch: Nanos, floor: Nanos) -> Nanos {
    floor + delta_kt_fw(t_launch, floor)
}

/// Whole-percent excess of `dkt_fw` over `floor`, rounded half up.
pub fn pct_above_floor(dkt_fw: Nanos, floor: Nanos) -> u64 {
    assert!(floor > 0, "floor must be positive");
    (dkt_fw as u128 * 100 + floor as u128 / 2).div_euclid(floor as u128) as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: KernelFamily,
    pub sample_count: usize,
    pub p50: Nanos,
    pub p95: Nanos,
    pub dkt_fw_p50: Nanos,
    pub pct_above_floor: u64,
}

impl FamilyRow {
    pub fn from_samples(family: KernelFamily, samples: &[Nanos], floor: Nanos) -> Option<FamilyRow> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let p50 = percentile_sorted(&sorted, 50.0);
        let dkt = delta_kt_fw(p50, floor);
        Some(FamilyRow {
            family,
            sample_count: sorted.len(),
            p50,
            p95: percentile_sorted(&sorted, 95.0),
            dkt_fw_p50: dkt,
            pct_above_floor: pct_above_floor(dkt, floor),
        })
    }
}

/// Per-family launch-latency table over the pooled launch samples of every
/// measured record. Families without samples are omitted.
pub fn family_percentile_table<'a>(
    measurements: impl IntoIterator<Item = &'a ReplayMeasurement>,
    db: &KernelDatabase,
    floor: Nanos,
) -> Vec<FamilyRow> {
    let mut pooled: BTreeMap<KernelFamily, Vec<Nanos>> = BTreeMap::new();
    for m in measurements {
        if let Some(r) = db.records.get(&m.record_key) {
            pooled.entry(r.family).or_default().extend(&m.t_launch_samples);
        }
    }
    pooled.iter().filter_map(|(&f, s)| FamilyRow::from_samples(f, s, floor)).collect()
}
