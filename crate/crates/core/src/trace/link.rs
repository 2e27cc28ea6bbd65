use std::collections::BTreeMap;

use log::warn;
use thiserror::Error;

use super::{enclosing_chains, CorrelationId, OpKind, Timestamp, TraceBundle};
use crate::Nanos;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("correlation id {0} is shared by more than one kernel; the trace is corrupt")]
    DuplicateKernelCorrelation(CorrelationId),
    #[error("correlation id {0} is shared by more than one launch call; the trace is corrupt")]
    DuplicateLaunchCorrelation(CorrelationId),
}

/// A launch-API call resolved to the kernel it submitted, with the host-side
/// context that encloses it on the launching thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkedLaunch {
    /// Index into `bundle.runtime_calls`.
    pub launch: usize,
    /// Index into `bundle.kernels`.
    pub kernel: usize,
    /// Framework operators containing the launch, innermost first.
    pub op_chain: Vec<usize>,
    /// NVTX ranges containing the launch, innermost first.
    pub nvtx_chain: Vec<usize>,
    /// Non-launch runtime calls (library front-ends and the like) containing
    /// the launch, innermost first.
    pub call_chain: Vec<usize>,
}

/// Events that could not be linked. Kept so nothing is dropped silently.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Residue {
    pub orphan_launches: Vec<usize>,
    pub orphan_kernels: Vec<usize>,
    /// Copies, memsets and other runtime calls that are not launches.
    pub non_launch_calls: Vec<usize>,
    /// Linked launches with no enclosing framework operator (indices into
    /// `LinkedTrace::launches`).
    pub unattributed_launches: Vec<usize>,
}

impl Residue {
    pub fn warning_count(&self) -> usize {
        self.orphan_launches.len() + self.orphan_kernels.len()
    }
}

/// A bundle with launch/kernel pairs and operator attribution resolved.
///
/// The owned bundle is canonicalized, so indices are stable for any input
/// ordering of the same events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkedTrace {
    pub bundle: TraceBundle,
    /// Linked pairs ordered by launch start.
    pub launches: Vec<LinkedLaunch>,
    pub residue: Residue,
}

/// Pairs launches with kernels by correlation id and attributes each launch
/// to the innermost framework operator containing it on the same thread.
pub fn link_by_correlation(bundle: &TraceBundle) -> Result<LinkedTrace, LinkError> {
    let mut bundle = bundle.clone();
    bundle.canonicalize();

    let mut kernel_by_corr: BTreeMap<CorrelationId, usize> = BTreeMap::new();
    for (i, k) in bundle.kernels.iter().enumerate() {
        if kernel_by_corr.insert(k.correlation, i).is_some() {
            return Err(LinkError::DuplicateKernelCorrelation(k.correlation));
        }
    }

    let mut residue = Residue::default();
    let mut launch_by_corr: BTreeMap<CorrelationId, usize> = BTreeMap::new();
    for (i, call) in bundle.runtime_calls.iter().enumerate() {
        if call.is_launch() {
            if launch_by_corr.insert(call.correlation, i).is_some() {
                return Err(LinkError::DuplicateLaunchCorrelation(call.correlation));
            }
        } else {
            residue.non_launch_calls.push(i);
        }
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (&corr, &li) in &launch_by_corr {
        match kernel_by_corr.get(&corr) {
            Some(&ki) => pairs.push((li, ki)),
            None => residue.orphan_launches.push(li),
        }
    }
    for (&corr, &ki) in &kernel_by_corr {
        if !launch_by_corr.contains_key(&corr) {
            residue.orphan_kernels.push(ki);
        }
    }
    residue.orphan_launches.sort_unstable();
    residue.orphan_kernels.sort_unstable();
    pairs.sort_unstable();

    let queries: Vec<_> = pairs
        .iter()
        .map(|&(li, _)| {
            let c = &bundle.runtime_calls[li];
            (c.thread, c.start, c.end)
        })
        .collect();
    let ops: Vec<_> = bundle.framework_ops.iter().map(|o| (o.thread, o.start, o.end)).collect();
    let nvtx: Vec<_> = bundle.nvtx_ranges.iter().map(|r| (r.thread, r.start, r.end)).collect();
    let calls: Vec<_> = residue
        .non_launch_calls
        .iter()
        .map(|&i| {
            let c = &bundle.runtime_calls[i];
            (c.thread, c.start, c.end)
        })
        .collect();

    let op_chains = enclosing_chains(&ops, &queries);
    let nvtx_chains = enclosing_chains(&nvtx, &queries);
    let call_chains = enclosing_chains(&calls, &queries);

    let mut launches: Vec<LinkedLaunch> = pairs
        .into_iter()
        .zip(op_chains)
        .zip(nvtx_chains.into_iter().zip(call_chains))
        .map(|(((launch, kernel), op_chain), (nvtx_chain, call_chain))| LinkedLaunch {
            launch,
            kernel,
            op_chain,
            nvtx_chain,
            call_chain: call_chain.into_iter().map(|j| residue.non_launch_calls[j]).collect(),
        })
        .collect();
    // Runtime calls are already sorted by start, so launch index order is
    // start order.
    launches.sort_by_key(|l| l.launch);

    residue.unattributed_launches =
        launches.iter().enumerate().filter(|(_, l)| l.op_chain.is_empty()).map(|(i, _)| i).collect();

    if residue.warning_count() > 0 {
        warn!(
            "linking left {} orphan launches and {} orphan kernels",
            residue.orphan_launches.len(),
            residue.orphan_kernels.len()
        );
    }

    Ok(LinkedTrace { bundle, launches, residue })
}

impl LinkedTrace {
    pub fn kernel_of(&self, l: &LinkedLaunch) -> &super::DeviceKernelEvent {
        &self.bundle.kernels[l.kernel]
    }

    pub fn launch_of(&self, l: &LinkedLaunch) -> &super::RuntimeApiEvent {
        &self.bundle.runtime_calls[l.launch]
    }

    /// Innermost enclosing torch-level operator.
    pub fn torch_op(&self, l: &LinkedLaunch) -> Option<usize> {
        l.op_chain.iter().copied().find(|&i| self.bundle.framework_ops[i].kind == OpKind::TorchOp)
    }

    /// Innermost enclosing ATen operator: the one whose metadata describes
    /// the kernel.
    pub fn leaf_aten_op(&self, l: &LinkedLaunch) -> Option<usize> {
        l.op_chain.iter().copied().find(|&i| self.bundle.framework_ops[i].kind == OpKind::AtenOp)
    }

    /// The ATen operator through which dispatch entered the C++ layer: the
    /// outermost ATen operator nested inside the innermost torch operator
    /// (or the outermost ATen operator overall when no torch operator
    /// encloses the launch).
    pub fn entry_aten_op(&self, l: &LinkedLaunch) -> Option<usize> {
        let ops = &self.bundle.framework_ops;
        l.op_chain.iter().copied().take_while(|&i| ops[i].kind == OpKind::AtenOp).last()
    }

    /// Number of linked kernel invocations.
    pub fn n_kernels(&self) -> usize {
        self.launches.len()
    }

    /// Σ t_k over linked kernels.
    pub fn device_active(&self) -> Nanos {
        self.launches.iter().map(|l| self.kernel_of(l).duration()).sum()
    }

    /// Keeps only the linked launches whose call starts inside `[start, end]`.
    pub fn restricted_to(&self, start: Timestamp, end: Timestamp) -> LinkedTrace {
        let launches: Vec<LinkedLaunch> = self
            .launches
            .iter()
            .filter(|l| {
                let s = self.launch_of(l).start;
                start <= s && s <= end
            })
            .cloned()
            .collect();
        let unattributed_launches =
            launches.iter().enumerate().filter(|(_, l)| l.op_chain.is_empty()).map(|(i, _)| i).collect();
        LinkedTrace {
            bundle: self.bundle.clone(),
            launches,
            residue: Residue { unattributed_launches, ..self.residue.clone() },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{DeviceKernelEvent, FrameworkOpEvent, RunMetadata, RuntimeApiEvent};

    fn meta() -> RunMetadata {
        RunMetadata::inferred(1_000)
    }

    #[test]
    fn unique_match_yields_one_pair() {
        let mut b = TraceBundle::new(meta());
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 10, 20, 1, 7));
        b.kernels.push(DeviceKernelEvent::new("k", 30, 40, 7));
        let linked = link_by_correlation(&b).unwrap();
        assert_eq!(linked.launches.len(), 1);
        assert_eq!(linked.residue, Residue { unattributed_launches: vec![0], ..Residue::default() });
        assert_eq!(linked.residue.warning_count(), 0);
    }

    #[test]
    fn orphan_launch_goes_to_residue() {
        let mut b = TraceBundle::new(meta());
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 10, 20, 1, 7));
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 30, 40, 1, 8));
        b.kernels.push(DeviceKernelEvent::new("k", 50, 60, 7));
        let linked = link_by_correlation(&b).unwrap();
        assert_eq!(linked.launches.len(), 1);
        assert_eq!(linked.residue.orphan_launches, vec![1]);
    }

    #[test]
    fn duplicate_kernel_correlation_is_an_error() {
        let mut b = TraceBundle::new(meta());
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 10, 20, 1, 7));
        b.kernels.push(DeviceKernelEvent::new("a", 30, 40, 7));
        b.kernels.push(DeviceKernelEvent::new("b", 50, 60, 7));
        assert_eq!(link_by_correlation(&b), Err(LinkError::DuplicateKernelCorrelation(CorrelationId(7))));
    }

    #[test]
    fn kernel_paired_with_memcpy_is_an_orphan() {
        let mut b = TraceBundle::new(meta());
        b.runtime_calls.push(RuntimeApiEvent::new("cudaMemcpyAsync", 10, 20, 1, 3));
        b.kernels.push(DeviceKernelEvent::new("k", 30, 40, 3));
        let linked = link_by_correlation(&b).unwrap();
        assert_eq!(linked.n_kernels(), 0);
        assert_eq!(linked.residue.orphan_kernels, vec![0]);
        assert_eq!(linked.residue.non_launch_calls, vec![0]);
    }

    #[test]
    fn attribution_uses_innermost_containing_op() {
        let mut b = TraceBundle::new(meta());
        b.framework_ops.push(FrameworkOpEvent::new("nn.Linear", 0, 100, 1));
        b.framework_ops.push(FrameworkOpEvent::new("aten::linear", 5, 95, 1));
        b.framework_ops.push(FrameworkOpEvent::new("aten::addmm", 10, 90, 1));
        // same interval on another thread must not be picked
        b.framework_ops.push(FrameworkOpEvent::new("aten::mul", 10, 90, 2));
        b.runtime_calls.push(RuntimeApiEvent::new("cublasLtMatmul", 20, 80, 1, 1));
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 30, 40, 1, 2));
        b.kernels.push(DeviceKernelEvent::new("sm90_xmma_gemm", 50, 70, 2));
        let linked = link_by_correlation(&b).unwrap();
        let l = &linked.launches[0];
        let ops = &linked.bundle.framework_ops;
        let names: Vec<&str> = l.op_chain.iter().map(|&i| ops[i].name.as_str()).collect();
        assert_eq!(names, ["aten::addmm", "aten::linear", "nn.Linear"]);
        assert_eq!(ops[linked.leaf_aten_op(l).unwrap()].name, "aten::addmm");
        assert_eq!(ops[linked.entry_aten_op(l).unwrap()].name, "aten::linear");
        assert_eq!(ops[linked.torch_op(l).unwrap()].name, "nn.Linear");
        assert_eq!(linked.bundle.runtime_calls[l.call_chain[0]].api_name, "cublasLtMatmul");
    }
}
