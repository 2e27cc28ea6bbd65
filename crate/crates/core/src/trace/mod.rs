//! Canonical in-memory representation of a profiled run.
//!
//! A [`TraceBundle`] holds every host and device event of one run plus the
//! run metadata. Importers produce bundles, every analysis consumes them, and
//! [`io`] reads and writes them in the canonical `taxbreak-bundle/1` file
//! format.

mod interval;
pub mod io;
mod link;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Nanos;

pub use interval::enclosing_chains;
pub use link::{link_by_correlation, LinkError, LinkedLaunch, LinkedTrace, Residue};
pub use validate::{validate_bundle, Section, ValidationReport, Violation, ViolationKind};

/// Version tag written into every canonical bundle file.
pub const BUNDLE_VERSION: &str = "taxbreak-bundle/1";

/// Nanoseconds since an arbitrary per-trace epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn ns(self) -> u64 {
        self.0
    }

    /// `self - earlier`, or `None` if `earlier` is later than `self`.
    pub fn since(self, earlier: Timestamp) -> Option<Nanos> {
        self.0.checked_sub(earlier.0)
    }

    pub fn shifted_back(self, by: u64) -> Timestamp {
        Timestamp(self.0 - by)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Profiler-assigned identifier linking a runtime call to its device work.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrelationId(pub u64);

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThreadId(pub u64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StreamId(pub u64);

/// Grid or block dimensions of a kernel launch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dim3(pub u32, pub u32, pub u32);

impl Dim3 {
    pub const ONE: Dim3 = Dim3(1, 1, 1);

    pub fn is_positive(self) -> bool {
        self.0 > 0 && self.1 > 0 && self.2 > 0
    }
}

impl fmt::Display for Dim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0, self.1, self.2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Prefill,
    Decode,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Prefill => "prefill",
            Phase::Decode => "decode",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Free-form workload name (model and variant); used to pair runs in
    /// comparisons.
    #[serde(default)]
    pub workload_label: String,
    pub platform_label: String,
    pub gpu_label: String,
    pub cpu_label: String,
    pub batch_size: u32,
    pub sequence_length: u32,
    pub phase: Phase,
    /// Number of generated output tokens (`m`).
    pub output_tokens: u32,
    pub warmup_runs: u32,
    pub measured_runs: u32,
    pub wall_clock_e2e: Nanos,
}

impl RunMetadata {
    /// Metadata used when an importer has no sidecar: a single measured
    /// prefill step whose wall clock is the trace span.
    pub fn inferred(span: Nanos) -> Self {
        RunMetadata {
            workload_label: String::new(),
            platform_label: "unknown".into(),
            gpu_label: "unknown".into(),
            cpu_label: "unknown".into(),
            batch_size: 1,
            sequence_length: 1,
            phase: Phase::Prefill,
            output_tokens: 1,
            warmup_runs: 0,
            measured_runs: 1,
            wall_clock_e2e: span.max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    TorchOp,
    AtenOp,
}

impl OpKind {
    /// Operators whose name carries the `aten::` namespace are ATen operators;
    /// everything else recorded at the framework level is a torch op.
    pub fn from_name(name: &str) -> OpKind {
        if name.starts_with("aten::") {
            OpKind::AtenOp
        } else {
            OpKind::TorchOp
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkOpEvent {
    pub name: String,
    pub kind: OpKind,
    pub start: Timestamp,
    pub end: Timestamp,
    pub thread: ThreadId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_shapes: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dtypes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scalar_args: Vec<(String, String)>,
}

impl FrameworkOpEvent {
    pub fn new(name: impl Into<String>, start: u64, end: u64, thread: u64) -> Self {
        let name = name.into();
        FrameworkOpEvent {
            kind: OpKind::from_name(&name),
            name,
            start: Timestamp(start),
            end: Timestamp(end),
            thread: ThreadId(thread),
            correlation: None,
            input_shapes: Vec::new(),
            dtypes: Vec::new(),
            scalar_args: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeApiEvent {
    pub api_name: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub thread: ThreadId,
    pub correlation: CorrelationId,
}

impl RuntimeApiEvent {
    pub fn new(api_name: impl Into<String>, start: u64, end: u64, thread: u64, corr: u64) -> Self {
        RuntimeApiEvent {
            api_name: api_name.into(),
            start: Timestamp(start),
            end: Timestamp(end),
            thread: ThreadId(thread),
            correlation: CorrelationId(corr),
        }
    }

    /// Kernel-launch APIs of the runtime and driver. Copies, memsets and
    /// library front-end calls are not launches.
    pub fn is_launch(&self) -> bool {
        is_launch_api(&self.api_name)
    }
}

pub fn is_launch_api(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.contains("launchkernel") || lower.starts_with("culaunch") || lower.contains("launchcooperativekernel")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceKernelEvent {
    pub raw_name: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub correlation: CorrelationId,
    pub grid: Dim3,
    pub block: Dim3,
    pub stream: StreamId,
}

impl DeviceKernelEvent {
    pub fn new(raw_name: impl Into<String>, start: u64, end: u64, corr: u64) -> Self {
        DeviceKernelEvent {
            raw_name: raw_name.into(),
            start: Timestamp(start),
            end: Timestamp(end),
            correlation: CorrelationId(corr),
            grid: Dim3::ONE,
            block: Dim3::ONE,
            stream: StreamId(7),
        }
    }

    pub fn duration(&self) -> Nanos {
        self.end.since(self.start).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NvtxRangeEvent {
    pub label: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub thread: ThreadId,
}

impl NvtxRangeEvent {
    pub fn new(label: impl Into<String>, start: u64, end: u64, thread: u64) -> Self {
        NvtxRangeEvent { label: label.into(), start: Timestamp(start), end: Timestamp(end), thread: ThreadId(thread) }
    }
}

/// One profiled run: metadata plus every captured event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceBundle {
    pub metadata: RunMetadata,
    #[serde(default)]
    pub framework_ops: Vec<FrameworkOpEvent>,
    #[serde(default)]
    pub runtime_calls: Vec<RuntimeApiEvent>,
    #[serde(default)]
    pub kernels: Vec<DeviceKernelEvent>,
    #[serde(default)]
    pub nvtx_ranges: Vec<NvtxRangeEvent>,
}

impl TraceBundle {
    pub fn new(metadata: RunMetadata) -> Self {
        TraceBundle {
            metadata,
            framework_ops: Vec::new(),
            runtime_calls: Vec::new(),
            kernels: Vec::new(),
            nvtx_ranges: Vec::new(),
        }
    }

    fn all_timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        let ops = self.framework_ops.iter().flat_map(|e| [e.start, e.end]);
        let rt = self.runtime_calls.iter().flat_map(|e| [e.start, e.end]);
        let k = self.kernels.iter().flat_map(|e| [e.start, e.end]);
        let nv = self.nvtx_ranges.iter().flat_map(|e| [e.start, e.end]);
        ops.chain(rt).chain(k).chain(nv)
    }

    pub fn earliest(&self) -> Option<Timestamp> {
        self.all_timestamps().min()
    }

    pub fn latest(&self) -> Option<Timestamp> {
        self.all_timestamps().max()
    }

    pub fn span(&self) -> Nanos {
        match (self.earliest(), self.latest()) {
            (Some(a), Some(b)) => b.since(a).unwrap_or(0),
            _ => 0,
        }
    }

    pub fn event_count(&self) -> usize {
        self.framework_ops.len() + self.runtime_calls.len() + self.kernels.len() + self.nvtx_ranges.len()
    }

    /// Shifts every timestamp so the earliest event sits at zero.
    pub fn normalize_epoch(&mut self) {
        let Some(origin) = self.earliest() else { return };
        let by = origin.0;
        if by == 0 {
            return;
        }
        for e in &mut self.framework_ops {
            e.start = e.start.shifted_back(by);
            e.end = e.end.shifted_back(by);
        }
        for e in &mut self.runtime_calls {
            e.start = e.start.shifted_back(by);
            e.end = e.end.shifted_back(by);
        }
        for e in &mut self.kernels {
            e.start = e.start.shifted_back(by);
            e.end = e.end.shifted_back(by);
        }
        for e in &mut self.nvtx_ranges {
            e.start = e.start.shifted_back(by);
            e.end = e.end.shifted_back(by);
        }
    }

    /// Sorts every event list by a total order over event content, so that
    /// two bundles holding the same events compare equal regardless of the
    /// order in which they were recorded.
    pub fn canonicalize(&mut self) {
        self.framework_ops.sort_by(|a, b| {
            (a.thread, a.start, std::cmp::Reverse(a.end), a.kind, &a.name, a.correlation)
                .cmp(&(b.thread, b.start, std::cmp::Reverse(b.end), b.kind, &b.name, b.correlation))
                .then_with(|| {
                    (&a.input_shapes, &a.dtypes, &a.scalar_args).cmp(&(&b.input_shapes, &b.dtypes, &b.scalar_args))
                })
        });
        self.runtime_calls.sort_by(|a, b| {
            (a.start, a.correlation, a.thread, std::cmp::Reverse(a.end), &a.api_name).cmp(&(
                b.start,
                b.correlation,
                b.thread,
                std::cmp::Reverse(b.end),
                &b.api_name,
            ))
        });
        self.kernels.sort_by(|a, b| {
            (a.start, a.correlation, a.end, &a.raw_name, a.grid, a.block, a.stream).cmp(&(
                b.start,
                b.correlation,
                b.end,
                &b.raw_name,
                b.grid,
                b.block,
                b.stream,
            ))
        });
        self.nvtx_ranges.sort_by(|a, b| {
            (a.thread, a.start, std::cmp::Reverse(a.end), &a.label).cmp(&(
                b.thread,
                b.start,
                std::cmp::Reverse(b.end),
                &b.label,
            ))
        });
    }

    /// Sum of kernel execution durations (sum semantics, overlaps counted twice).
    pub fn kernel_time_sum(&self) -> Nanos {
        self.kernels.iter().map(DeviceKernelEvent::duration).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn launch_api_detection() {
        assert!(is_launch_api("cudaLaunchKernel"));
        assert!(is_launch_api("cudaLaunchKernelExC_v11060"));
        assert!(is_launch_api("cuLaunchKernel"));
        assert!(!is_launch_api("cudaMemcpyAsync"));
        assert!(!is_launch_api("cudaMemsetAsync"));
        assert!(!is_launch_api("cublasLtMatmul"));
    }

    #[test]
    fn op_kind_from_prefix() {
        assert_eq!(OpKind::from_name("aten::addmm"), OpKind::AtenOp);
        assert_eq!(OpKind::from_name("nn.Linear"), OpKind::TorchOp);
    }

    #[test]
    fn normalize_epoch_moves_origin_to_zero() {
        let mut b = TraceBundle::new(RunMetadata::inferred(10));
        b.kernels.push(DeviceKernelEvent::new("k", 500, 900, 1));
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 300, 350, 1, 1));
        b.normalize_epoch();
        assert_eq!(b.earliest(), Some(Timestamp(0)));
        assert_eq!(b.kernels[0].start, Timestamp(200));
        assert_eq!(b.span(), 600);
    }
}
