//! Framework-translation overhead from the full-model trace.
//!
//! For each kernel invocation, `T_Py` is the time between the innermost
//! enclosing torch operator and the ATen operator through which dispatch
//! entered the C++ layer. An ATen operator that launches several kernels
//! pays that cost once: its first kernel carries `T_Py` and later kernels
//! carry zero.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::trace::{CorrelationId, LinkedTrace, OpKind, Timestamp};
use crate::Nanos;

/// Name prefix of the profiler's per-iteration marker ranges.
pub const ITERATION_MARKER_PREFIX: &str = "ProfilerStep#";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    NoTorchParent,
    NoAtenOp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrameworkTranslationSample {
    /// Index into `LinkedTrace::launches`.
    pub invocation_index: usize,
    /// `start(aten) - start(torch)`, the canonical value.
    pub t_py: Nanos,
    /// `end(torch) - end(aten)`, kept for comparison.
    pub t_py_end: Nanos,
    pub torch_op_name: String,
    pub aten_op_name: String,
    pub correlation: CorrelationId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<SampleFlag>,
    /// Whether the raw value was negative and clamped to zero.
    pub skew_clamped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Phase1Output {
    pub samples: Vec<FrameworkTranslationSample>,
    pub skew_count: usize,
    pub flagged_count: usize,
}

impl Phase1Output {
    pub fn sum_t_py(&self) -> Nanos {
        self.samples.iter().map(|s| s.t_py).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
        w.write_record(["invocation", "correlation", "torch_op", "aten_op", "t_py_ns", "t_py_end_ns", "flag"])
            .expect("in-memory write");
        for s in &self.samples {
            let flag = match s.flag {
                Some(SampleFlag::NoTorchParent) => "no_torch_parent",
                Some(SampleFlag::NoAtenOp) => "no_aten_op",
                None if s.skew_clamped => "skew_clamped",
                None => "",
            };
            w.write_record([
                s.invocation_index.to_string(),
                s.correlation.to_string(),
                s.torch_op_name.clone(),
                s.aten_op_name.clone(),
                s.t_py.to_string(),
                s.t_py_end.to_string(),
                flag.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Restricts `trace` to its last profiled iteration.
///
/// Iterations are delimited by marker ranges (NVTX ranges or framework ops)
/// whose name starts with `marker_prefix`; the marker that starts last
/// wins. A trace without markers is treated as a single iteration.
pub fn select_last_iteration(
    trace: &LinkedTrace,
    marker_prefix: &str,
) -> (LinkedTrace, Option<(Timestamp, Timestamp)>) {
    let b = &trace.bundle;
    let nvtx = b.nvtx_ranges.iter().filter(|r| r.label.starts_with(marker_prefix)).map(|r| (r.start, r.end));
    let ops = b.framework_ops.iter().filter(|o| o.name.starts_with(marker_prefix)).map(|o| (o.start, o.end));
    match nvtx.chain(ops).max() {
        Some((s, e)) => (trace.restricted_to(s, e), Some((s, e))),
        None => (trace.clone(), None),
    }
}

/// One sample per linked kernel invocation, in launch order.
pub fn extract_framework_translation(trace: &LinkedTrace, marker_prefix: &str) -> Phase1Output {
    let ops = &trace.bundle.framework_ops;
    let mut out = Phase1Output::default();
    let mut charged: BTreeSet<usize> = BTreeSet::new();

    for (i, l) in trace.launches.iter().enumerate() {
        let chain: Vec<usize> =
            l.op_chain.iter().copied().filter(|&o| !ops[o].name.starts_with(marker_prefix)).collect();
        let torch = chain.iter().copied().find(|&o| ops[o].kind == OpKind::TorchOp);
        // outermost ATen op below the innermost torch op
        let aten = chain.iter().copied().take_while(|&o| ops[o].kind == OpKind::AtenOp).last();
        let correlation = trace.launch_of(l).correlation;

        let mut sample = FrameworkTranslationSample {
            invocation_index: i,
            t_py: 0,
            t_py_end: 0,
            torch_op_name: torch.map(|o| ops[o].name.clone()).unwrap_or_default(),
            aten_op_name: aten.map(|o| ops[o].name.clone()).unwrap_or_default(),
            correlation,
            flag: None,
            skew_clamped: false,
        };
        match (torch, aten) {
            (None, _) => sample.flag = Some(SampleFlag::NoTorchParent),
            (Some(_), None) => sample.flag = Some(SampleFlag::NoAtenOp),
            (Some(t), Some(a)) => {
                if charged.insert(a) {
                    match ops[a].start.since(ops[t].start) {
                        Some(v) => sample.t_py = v,
                        None => sample.skew_clamped = true,
                    }
                    sample.t_py_end = ops[t].end.since(ops[a].end).unwrap_or(0);
                }
            }
        }
        if sample.flag.is_some() {
            out.flagged_count += 1;
        }
        if sample.skew_clamped {
            out.skew_count += 1;
        }
        out.samples.push(sample);
    }
    out
}

/// `ΔFT = T_Py + T_dispatch_base`.
pub fn delta_ft(sample: &FrameworkTranslationSample, dispatch_base: Nanos) -> Nanos {
    sample.t_py + dispatch_base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{
        link_by_correlation, DeviceKernelEvent, FrameworkOpEvent, NvtxRangeEvent, RunMetadata, RuntimeApiEvent,
        TraceBundle,
    };
    use proptest::prelude::*;

    fn one_op(torch_start: u64, aten_start: u64) -> TraceBundle {
        let mut b = TraceBundle::new(RunMetadata::inferred(1));
        b.framework_ops.push(FrameworkOpEvent::new("nn.Linear", torch_start, 1000, 1));
        b.framework_ops.push(FrameworkOpEvent::new("aten::addmm", aten_start, 900, 1));
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 400, 450, 1, 1));
        b.kernels.push(DeviceKernelEvent::new("k", 500, 600, 1));
        b
    }

    #[test]
    fn start_to_start() {
        let t = link_by_correlation(&one_op(100, 260)).unwrap();
        let out = extract_framework_translation(&t, ITERATION_MARKER_PREFIX);
        assert_eq!(out.samples[0].t_py, 160);
        assert_eq!(out.samples[0].t_py_end, 100);
        assert_eq!(out.samples[0].flag, None);
    }

    #[test]
    fn no_torch_parent_is_flagged() {
        let mut b = one_op(100, 260);
        b.framework_ops.remove(0);
        let out = extract_framework_translation(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
        assert_eq!(out.samples[0].t_py, 0);
        assert_eq!(out.samples[0].flag, Some(SampleFlag::NoTorchParent));
        assert_eq!(out.flagged_count, 1);
    }

    #[test]
    fn op_with_two_kernels_pays_once() {
        let mut b = one_op(100, 260);
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 600, 650, 1, 2));
        b.kernels.push(DeviceKernelEvent::new("k2", 700, 800, 2));
        let out = extract_framework_translation(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
        let t: Vec<Nanos> = out.samples.iter().map(|s| s.t_py).collect();
        assert_eq!(t, [160, 0]);
    }

    #[test]
    fn last_marked_iteration_is_selected() {
        let mut b = TraceBundle::new(RunMetadata::inferred(1));
        for (it, base) in [(0u64, 0u64), (1, 10_000)] {
            b.nvtx_ranges.push(NvtxRangeEvent::new(format!("ProfilerStep#{it}"), base, base + 5_000, 1));
            b.framework_ops.push(FrameworkOpEvent::new("nn.Linear", base + 100, base + 1000, 1));
            b.framework_ops.push(FrameworkOpEvent::new("aten::addmm", base + 100 + 50 * (it + 1), base + 900, 1));
            b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", base + 400, base + 450, 1, it));
            b.kernels.push(DeviceKernelEvent::new("k", base + 500, base + 600, it));
        }
        let (t, window) = select_last_iteration(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
        assert_eq!(window, Some((Timestamp(10_000), Timestamp(15_000))));
        let out = extract_framework_translation(&t, ITERATION_MARKER_PREFIX);
        assert_eq!(out.samples.len(), 1);
        assert_eq!(out.samples[0].t_py, 100);
    }

    #[test]
    fn marker_op_is_not_a_torch_parent() {
        let mut b = one_op(100, 260);
        b.framework_ops.push(FrameworkOpEvent::new("ProfilerStep#3", 0, 2000, 1));
        b.framework_ops.remove(0);
        let out = extract_framework_translation(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
        assert_eq!(out.samples[0].flag, Some(SampleFlag::NoTorchParent));
    }

    #[test]
    fn delta_ft_adds_base() {
        let t = link_by_correlation(&one_op(100, 260)).unwrap();
        let out = extract_framework_translation(&t, ITERATION_MARKER_PREFIX);
        assert_eq!(delta_ft(&out.samples[0], 7_700), 7_860);
        assert_eq!(delta_ft(&FrameworkTranslationSample { t_py: 0, ..out.samples[0].clone() }, 0), 0);
    }

    proptest! {
        #[test]
        fn extraction_ignores_event_order(seed in any::<u64>(), gaps in proptest::collection::vec((0u64..500, 1u64..50), 1..20)) {
            let mut b = TraceBundle::new(RunMetadata::inferred(1));
            let mut cursor = 0;
            for (i, &(py, extra)) in gaps.iter().enumerate() {
                b.framework_ops.push(FrameworkOpEvent::new("nn.Mod", cursor, cursor + py + 300 + extra, 1));
                b.framework_ops.push(FrameworkOpEvent::new("aten::op", cursor + py, cursor + py + 250, 1));
                b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", cursor + py + 100, cursor + py + 150, 1, i as u64));
                b.kernels.push(DeviceKernelEvent::new("k", cursor + py + 200, cursor + py + 220, i as u64));
                cursor += py + 400 + extra;
            }
            let reference = extract_framework_translation(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
            let want: Nanos = gaps.iter().map(|g| g.0).sum();
            prop_assert_eq!(reference.sum_t_py(), want);

            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            b.framework_ops.shuffle(&mut rng);
            b.runtime_calls.shuffle(&mut rng);
            b.kernels.shuffle(&mut rng);
            let shuffled = extract_framework_translation(&link_by_correlation(&b).unwrap(), ITERATION_MARKER_PREFIX);
            prop_assert_eq!(shuffled, reference);
        }
    }
}
