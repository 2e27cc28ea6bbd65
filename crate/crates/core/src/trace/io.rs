//! Canonical bundle file format.
//!
//! A bundle file is a single JSON document:
//!
//! ```text
//! {
//!   "version": "taxbreak-bundle/1",
//!   "metadata": { ... },
//!   "framework_ops": [ ... ],
//!   "runtime_calls": [ ... ],
//!   "kernels": [ ... ],
//!   "nvtx_ranges": [ ... ]
//! }
//! ```
//!
//! Field names match the Rust types; timestamps are decimal integers in
//! nanoseconds, so a write/read cycle is bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    DeviceKernelEvent, FrameworkOpEvent, NvtxRangeEvent, RunMetadata, RuntimeApiEvent, TraceBundle, BUNDLE_VERSION,
};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed bundle: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported bundle version '{0}' (expected '{BUNDLE_VERSION}')")]
    UnsupportedSchemaVersion(String),
}

#[derive(Serialize)]
struct BundleFileRef<'a> {
    version: &'a str,
    metadata: &'a RunMetadata,
    framework_ops: &'a [FrameworkOpEvent],
    runtime_calls: &'a [RuntimeApiEvent],
    kernels: &'a [DeviceKernelEvent],
    nvtx_ranges: &'a [NvtxRangeEvent],
}

#[derive(Deserialize)]
struct Versioned {
    version: String,
}

pub fn bundle_to_string(bundle: &TraceBundle) -> String {
    let file = BundleFileRef {
        version: BUNDLE_VERSION,
        metadata: &bundle.metadata,
        framework_ops: &bundle.framework_ops,
        runtime_calls: &bundle.runtime_calls,
        kernels: &bundle.kernels,
        nvtx_ranges: &bundle.nvtx_ranges,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("bundle serialization cannot fail");
    text.push('\n');
    text
}

pub fn bundle_from_str(text: &str) -> Result<TraceBundle, BundleError> {
    let v: Versioned = serde_json::from_str(text)?;
    if v.version != BUNDLE_VERSION {
        return Err(BundleError::UnsupportedSchemaVersion(v.version));
    }
    Ok(serde_json::from_str(text)?)
}

pub fn write_bundle(path: &Path, bundle: &TraceBundle) -> Result<(), BundleError> {
    fs::write(path, bundle_to_string(bundle))
        .map_err(|source| BundleError::Io { path: path.display().to_string(), source })
}

pub fn read_bundle(path: &Path) -> Result<TraceBundle, BundleError> {
    let text =
        fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
    bundle_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Dim3, Phase, StreamId, Timestamp};
    use proptest::prelude::*;

    fn arb_bundle() -> impl Strategy<Value = TraceBundle> {
        let ts = 0u64..u64::MAX / 2;
        let kernels = proptest::collection::vec(
            ("[a-z_<>0-9 ,]{0,12}", ts.clone(), 0u64..1_000_000, any::<u64>(), 1u32..4096, 1u32..1024, any::<u64>()),
            0..8,
        );
        let ops = proptest::collection::vec(("(aten::)?[a-z.]{1,8}", ts.clone(), 0u64..1_000_000, any::<u64>()), 0..8);
        (kernels, ops, 1u64..u64::MAX).prop_map(|(ks, os, e2e)| {
            let mut meta = RunMetadata::inferred(e2e);
            meta.phase = Phase::Decode;
            meta.output_tokens = 10;
            let mut b = TraceBundle::new(meta);
            for (name, s, d, corr, g, bl, stream) in ks {
                let mut k = DeviceKernelEvent::new(name, s, s + d, corr);
                k.grid = Dim3(g, 1, 2);
                k.block = Dim3(bl, 1, 1);
                k.stream = StreamId(stream);
                b.kernels.push(k);
                b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", s, s + 1, 3, corr));
            }
            for (name, s, d, corr) in os {
                let mut op = FrameworkOpEvent::new(name, s, s + d, 3);
                op.correlation = Some(crate::trace::CorrelationId(corr));
                op.input_shapes = vec![vec![-1, 4]];
                op.dtypes = vec!["c10::BFloat16".into()];
                op.scalar_args = vec![("alpha".into(), "1".into())];
                b.framework_ops.push(op);
            }
            b.nvtx_ranges.push(NvtxRangeEvent::new("aten_dispatch", 0, u64::MAX, 9));
            b
        })
    }

    proptest! {
        #[test]
        fn write_read_is_identity(b in arb_bundle()) {
            let text = bundle_to_string(&b);
            let back = bundle_from_str(&text).unwrap();
            prop_assert_eq!(back, b);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let text =
            bundle_to_string(&TraceBundle::new(RunMetadata::inferred(1))).replace(BUNDLE_VERSION, "taxbreak-bundle/9");
        assert!(
            matches!(bundle_from_str(&text), Err(BundleError::UnsupportedSchemaVersion(v)) if v == "taxbreak-bundle/9")
        );
    }

    #[test]
    fn timestamps_are_decimal_integers() {
        let mut b = TraceBundle::new(RunMetadata::inferred(1));
        b.kernels.push(DeviceKernelEvent::new("k", 18_446_744_073_709_551_000, 18_446_744_073_709_551_615, 1));
        let text = bundle_to_string(&b);
        assert!(text.contains("\"start\": 18446744073709551000"));
        assert_eq!(bundle_from_str(&text).unwrap().kernels[0].end, Timestamp(u64::MAX));
    }
}
