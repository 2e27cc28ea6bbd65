use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{Phase, ThreadId, Timestamp, TraceBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Metadata,
    FrameworkOps,
    RuntimeCalls,
    Kernels,
    NvtxRanges,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NegativeDuration,
    PhaseOutputTokensMismatch,
    NonPositiveField,
    DuplicateKernelCorrelation,
    DuplicateLaunchCorrelation,
    KernelWithoutLaunch,
    NonPositiveLaunchDims,
    NvtxPartialOverlap,
    ShapeDtypeLengthMismatch,
}

impl ViolationKind {
    /// Warnings describe conditions the analyzer tolerates (they end up in
    /// the link residue); errors make the bundle unusable.
    pub fn is_warning(self) -> bool {
        matches!(self, ViolationKind::KernelWithoutLaunch | ViolationKind::ShapeDtypeLengthMismatch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub section: Section,
    /// Indices into the section's event list, in file order.
    pub indices: Vec<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} in {:?} {:?}: {}", self.kind, self.section, self.indices, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_well_formed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| !v.kind.is_warning())
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, section: Section, indices: Vec<usize>, detail: impl Into<String>) {
        self.violations.push(Violation { kind, section, indices, detail: detail.into() });
    }
}

/// Lists every invariant violation in `bundle`. Never fails: violations are
/// data.
pub fn validate_bundle(bundle: &TraceBundle) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_metadata(bundle, &mut report);
    check_durations(bundle, &mut report);
    check_correlations(bundle, &mut report);

    for (i, k) in bundle.kernels.iter().enumerate() {
        if !k.grid.is_positive() || !k.block.is_positive() {
            report.push(
                ViolationKind::NonPositiveLaunchDims,
                Section::Kernels,
                vec![i],
                format!("grid {} block {}", k.grid, k.block),
            );
        }
    }
    for (i, op) in bundle.framework_ops.iter().enumerate() {
        if op.input_shapes.len() != op.dtypes.len() {
            report.push(
                ViolationKind::ShapeDtypeLengthMismatch,
                Section::FrameworkOps,
                vec![i],
                format!("{} shapes vs {} dtypes on {}", op.input_shapes.len(), op.dtypes.len(), op.name),
            );
        }
    }
    check_nvtx_nesting(bundle, &mut report);
    report
}

fn check_metadata(bundle: &TraceBundle, report: &mut ValidationReport) {
    let m = &bundle.metadata;
    match m.phase {
        Phase::Prefill if m.output_tokens != 1 => report.push(
            ViolationKind::PhaseOutputTokensMismatch,
            Section::Metadata,
            vec![],
            format!("phase/m mismatch: prefill requires m = 1, got m = {}", m.output_tokens),
        ),
        _ => {}
    }
    let positive = [
        ("batch_size", m.batch_size as u64),
        ("sequence_length", m.sequence_length as u64),
        ("output_tokens", m.output_tokens as u64),
        ("measured_runs", m.measured_runs as u64),
        ("wall_clock_e2e", m.wall_clock_e2e),
    ];
    for (field, value) in positive {
        if value == 0 {
            report.push(
                ViolationKind::NonPositiveField,
                Section::Metadata,
                vec![],
                format!("{field} must be positive"),
            );
        }
    }
}

fn check_durations(bundle: &TraceBundle, report: &mut ValidationReport) {
    let mut check = |section: Section, spans: Vec<(Timestamp, Timestamp)>| {
        for (i, (s, e)) in spans.into_iter().enumerate() {
            if e < s {
                report.push(
                    ViolationKind::NegativeDuration,
                    section,
                    vec![i],
                    format!("negative duration: end {e} < start {s}"),
                );
            }
        }
    };
    check(Section::FrameworkOps, bundle.framework_ops.iter().map(|e| (e.start, e.end)).collect());
    check(Section::RuntimeCalls, bundle.runtime_calls.iter().map(|e| (e.start, e.end)).collect());
    check(Section::Kernels, bundle.kernels.iter().map(|e| (e.start, e.end)).collect());
    check(Section::NvtxRanges, bundle.nvtx_ranges.iter().map(|e| (e.start, e.end)).collect());
}

fn check_correlations(bundle: &TraceBundle, report: &mut ValidationReport) {
    let mut kernels: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, k) in bundle.kernels.iter().enumerate() {
        kernels.entry(k.correlation.0).or_default().push(i);
    }
    let mut launches: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut any_call: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in bundle.runtime_calls.iter().enumerate() {
        any_call.entry(c.correlation.0).or_default().push(i);
        if c.is_launch() {
            launches.entry(c.correlation.0).or_default().push(i);
        }
    }
    for (corr, idx) in &kernels {
        if idx.len() > 1 {
            report.push(
                ViolationKind::DuplicateKernelCorrelation,
                Section::Kernels,
                idx.clone(),
                format!("correlation {corr} shared by {} kernels", idx.len()),
            );
        }
        if !launches.contains_key(corr) {
            report.push(
                ViolationKind::KernelWithoutLaunch,
                Section::Kernels,
                idx.clone(),
                format!("correlation {corr} has no launch call"),
            );
        }
    }
    for (corr, idx) in &launches {
        if idx.len() > 1 {
            report.push(
                ViolationKind::DuplicateLaunchCorrelation,
                Section::RuntimeCalls,
                idx.clone(),
                format!("correlation {corr} shared by {} launch calls", idx.len()),
            );
        }
    }
}

fn check_nvtx_nesting(bundle: &TraceBundle, report: &mut ValidationReport) {
    let mut by_thread: BTreeMap<ThreadId, Vec<usize>> = BTreeMap::new();
    for (i, r) in bundle.nvtx_ranges.iter().enumerate() {
        if r.end >= r.start {
            by_thread.entry(r.thread).or_default().push(i);
        }
    }
    for (_, mut idx) in by_thread {
        let ranges = &bundle.nvtx_ranges;
        idx.sort_by_key(|&i| (ranges[i].start, std::cmp::Reverse(ranges[i].end), i));
        let mut stack: Vec<usize> = Vec::new();
        for i in idx {
            while stack.last().is_some_and(|&top| ranges[top].end <= ranges[i].start) {
                stack.pop();
            }
            if let Some(&top) = stack.last() {
                if ranges[i].end > ranges[top].end {
                    report.push(
                        ViolationKind::NvtxPartialOverlap,
                        Section::NvtxRanges,
                        vec![top, i],
                        format!("'{}' partially overlaps '{}'", ranges[i].label, ranges[top].label),
                    );
                    continue;
                }
            }
            stack.push(i);
        }
    }
}
