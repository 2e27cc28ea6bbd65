//! Writers for the two profiler-native formats the importers read, so
//! synthetic bundles can take the same import path as captured traces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SynthError;
use crate::import::{KERNEL_TABLE, NVTX_TABLE, RUNTIME_TABLE};
use crate::trace::{Timestamp, TraceBundle};

/// Offset added to every exported timestamp, so importers must normalize
/// the epoch back to zero.
pub const EXPORT_EPOCH_NS: u64 = 1_700_000_000_000_000;

fn micros(ns: u64) -> String {
    format!("{}.{:03}", ns / 1_000, ns % 1_000)
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn span(start: Timestamp, end: Timestamp) -> String {
    format!("\"ts\": {}, \"dur\": {}", micros(start.0 + EXPORT_EPOCH_NS), micros(end.0 - start.0))
}

/// Concrete inputs as a positional list; `argN` names land at index N,
/// anything else after them.
fn concrete_inputs(args: &[(String, String)], width: usize) -> Vec<String> {
    let mut out = vec![String::new(); width];
    let mut rest = Vec::new();
    for (name, value) in args {
        match name.strip_prefix("arg").and_then(|i| i.parse::<usize>().ok()) {
            Some(i) => {
                if out.len() <= i {
                    out.resize(i + 1, String::new());
                }
                out[i] = value.clone();
            }
            None => rest.push(value.clone()),
        }
    }
    out.extend(rest);
    out
}

/// Trace-event JSON with framework ops (`cpu_op`), runtime calls
/// (`cuda_runtime`), kernels (`kernel`) and NVTX ranges
/// (`user_annotation`), timestamps in microseconds with three decimals.
pub fn to_trace_events(b: &TraceBundle) -> String {
    let mut lines = Vec::new();
    for op in &b.framework_ops {
        let dims = serde_json::to_string(&op.input_shapes).expect("shapes serialize");
        let types = serde_json::to_string(&op.dtypes).expect("dtypes serialize");
        let concrete =
            serde_json::to_string(&concrete_inputs(&op.scalar_args, op.dtypes.len())).expect("args serialize");
        let mut args = format!("\"Input Dims\": {dims}, \"Input type\": {types}, \"Concrete Inputs\": {concrete}");
        if let Some(c) = op.correlation {
            let _ = write!(args, ", \"correlation\": {}", c.0);
        }
        lines.push(format!(
            "{{\"ph\": \"X\", \"cat\": \"cpu_op\", \"name\": {}, \"pid\": 0, \"tid\": {}, {}, \"args\": {{{args}}}}}",
            quoted(&op.name),
            op.thread.0,
            span(op.start, op.end)
        ));
    }
    for c in &b.runtime_calls {
        lines.push(format!(
            "{{\"ph\": \"X\", \"cat\": \"cuda_runtime\", \"name\": {}, \"pid\": 0, \"tid\": {}, {}, \"args\": {{\"correlation\": {}}}}}",
            quoted(&c.api_name),
            c.thread.0,
            span(c.start, c.end),
            c.correlation.0
        ));
    }
    for k in &b.kernels {
        lines.push(format!(
            "{{\"ph\": \"X\", \"cat\": \"kernel\", \"name\": {}, \"pid\": 1, \"tid\": {}, {}, \"args\": {{\"correlation\": {}, \"grid\": [{}, {}, {}], \"block\": [{}, {}, {}], \"stream\": {}}}}}",
            quoted(&k.raw_name),
            k.stream.0,
            span(k.start, k.end),
            k.correlation.0,
            k.grid.0,
            k.grid.1,
            k.grid.2,
            k.block.0,
            k.block.1,
            k.block.2,
            k.stream.0
        ));
    }
    for r in &b.nvtx_ranges {
        lines.push(format!(
            "{{\"ph\": \"X\", \"cat\": \"user_annotation\", \"name\": {}, \"pid\": 0, \"tid\": {}, {}}}",
            quoted(&r.label),
            r.thread.0,
            span(r.start, r.end)
        ));
    }
    format!("{{\"schemaVersion\": 1, \"traceEvents\": [\n{}\n]}}\n", lines.join(",\n"))
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), SynthError> {
    let io = |e: std::io::Error| SynthError::Io { path: path.into(), source: e };
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(header).map_err(to_io).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(to_io).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string())).map_err(io)?;
    fs::write(path, bytes).map_err(io)
}

/// System-profiler tables (NVTX, runtime, kernel) in integer nanoseconds.
/// Framework operators have no table and are not written.
pub fn write_profiler_tables(b: &TraceBundle, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.into(), source })?;
    let t = |ts: Timestamp| (ts.0 + EXPORT_EPOCH_NS).to_string();
    write_csv(
        &dir.join(format!("{NVTX_TABLE}.csv")),
        &["start", "end", "text", "globalTid"],
        b.nvtx_ranges.iter().map(|r| vec![t(r.start), t(r.end), r.label.clone(), r.thread.0.to_string()]).collect(),
    )?;
    write_csv(
        &dir.join(format!("{RUNTIME_TABLE}.csv")),
        &["start", "end", "correlationId", "name", "globalTid"],
        b.runtime_calls
            .iter()
            .map(|c| {
                vec![t(c.start), t(c.end), c.correlation.0.to_string(), c.api_name.clone(), c.thread.0.to_string()]
            })
            .collect(),
    )?;
    write_csv(
        &dir.join(format!("{KERNEL_TABLE}.csv")),
        &[
            "start",
            "end",
            "correlationId",
            "demangledName",
            "gridX",
            "gridY",
            "gridZ",
            "blockX",
            "blockY",
            "blockZ",
            "streamId",
        ],
        b.kernels
            .iter()
            .map(|k| {
                vec![
                    t(k.start),
                    t(k.end),
                    k.correlation.0.to_string(),
                    k.raw_name.clone(),
                    k.grid.0.to_string(),
                    k.grid.1.to_string(),
                    k.grid.2.to_string(),
                    k.block.0.to_string(),
                    k.block.1.to_string(),
                    k.block.2.to_string(),
                    k.stream.0.to_string(),
                ]
            })
            .collect(),
    )
}
