//! Trace-event-format files from the framework profiler.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use super::units::{detect_time_unit, parse_decimal_ns};
use super::{finish, ImportError, ImportOptions, ImportReport, ImportSourceKind};
use crate::trace::{
    CorrelationId, DeviceKernelEvent, Dim3, FrameworkOpEvent, NvtxRangeEvent, RunMetadata, RuntimeApiEvent, StreamId,
    ThreadId, Timestamp, TraceBundle,
};

pub fn import_framework_trace(path: &Path, opts: &ImportOptions) -> Result<(TraceBundle, ImportReport), ImportError> {
    let text = fs::read_to_string(path).map_err(|source| ImportError::Io { path: path.into(), source })?;
    import_framework_trace_str(&text, path, opts)
}

fn number_literal(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        _ => None,
    }
}

fn as_u64(v: Option<&Value>) -> Option<u64> {
    match v? {
        Value::Number(n) => n.as_u64().or_else(|| n.as_i64().map(|i| i as u64)),
        Value::String(s) => {
            let digits: String = s.chars().filter(char::is_ascii_digit).collect();
            digits.parse().ok()
        }
        _ => None,
    }
}

fn dim3(v: Option<&Value>) -> Option<Dim3> {
    let a = v?.as_array()?;
    let get = |i: usize| a.get(i).and_then(Value::as_u64).map(|x| x as u32).unwrap_or(1);
    Some(Dim3(get(0), get(1), get(2)))
}

fn shapes(v: Option<&Value>) -> Vec<Vec<i64>> {
    let Some(Value::Array(items)) = v else { return Vec::new() };
    items
        .iter()
        .map(|item| match item {
            Value::Array(dims) => dims.iter().filter_map(Value::as_i64).collect(),
            _ => Vec::new(),
        })
        .collect()
}

fn strings(v: Option<&Value>) -> Vec<String> {
    let Some(Value::Array(items)) = v else { return Vec::new() };
    items
        .iter()
        .map(|item| match item {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        })
        .collect()
}

pub fn import_framework_trace_str(
    text: &str,
    path: &Path,
    opts: &ImportOptions,
) -> Result<(TraceBundle, ImportReport), ImportError> {
    let parse_err = |message: String| ImportError::Parse { path: path.into(), message };
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let map = &opts.mapping;
    let events: &Vec<Value> = match &root {
        Value::Array(a) => a,
        Value::Object(o) => {
            if let Some(v) = o.get("schemaVersion") {
                let ok = v.as_u64().is_some_and(|n| map.supported_schema_versions.contains(&n));
                if !ok {
                    return Err(ImportError::UnsupportedSchemaVersion { path: path.into(), found: v.to_string() });
                }
            }
            o.get("traceEvents")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_err("expected a 'traceEvents' array".into()))?
        }
        _ => return Err(parse_err("expected an event array or an object with 'traceEvents'".into())),
    };

    let complete: Vec<&Map<String, Value>> = events
        .iter()
        .filter_map(Value::as_object)
        .filter(|e| e.get("ph").and_then(Value::as_str) == Some("X"))
        .collect();
    let unit = opts.time_unit.unwrap_or_else(|| {
        let lits: Vec<String> = complete
            .iter()
            .flat_map(|e| [number_literal(e.get("ts")), number_literal(e.get("dur"))])
            .flatten()
            .collect();
        detect_time_unit(lits.iter().map(String::as_str))
    });

    let mut report = ImportReport::new(ImportSourceKind::FrameworkTraceEvents, Some(unit));
    report.ignored_events = events.len() - complete.len();
    let mut b = TraceBundle::new(RunMetadata::inferred(1));
    let in_cats = |cats: &[String], c: &str| cats.iter().any(|x| x == c);

    for e in complete {
        let cat = e.get("cat").and_then(Value::as_str).unwrap_or("");
        let name = e.get("name").and_then(Value::as_str).unwrap_or("").to_string();
        let ts = number_literal(e.get("ts")).and_then(|l| parse_decimal_ns(&l, unit));
        let dur = number_literal(e.get("dur")).map_or(Some(0), |l| parse_decimal_ns(&l, unit));
        let (Some(start), Some(dur)) = (ts, dur) else {
            return Err(parse_err(format!("event '{name}' has an unreadable ts/dur")));
        };
        let (start, end) = (Timestamp(start), Timestamp(start + dur));
        let thread = ThreadId(as_u64(e.get("tid")).unwrap_or(0));
        let empty = Map::new();
        let args = e.get("args").and_then(Value::as_object).unwrap_or(&empty);
        let correlation = map.correlation_keys.iter().find_map(|k| as_u64(args.get(k))).map(CorrelationId);

        if in_cats(&map.framework_op_categories, cat) {
            let mut op = FrameworkOpEvent::new(name, 0, 0, 0);
            op.start = start;
            op.end = end;
            op.thread = thread;
            op.correlation = correlation;
            op.input_shapes = shapes(args.get(&map.shapes_key));
            op.dtypes = strings(args.get(&map.dtypes_key));
            op.scalar_args = strings(args.get(&map.concrete_inputs_key))
                .into_iter()
                .enumerate()
                .filter(|(_, v)| !v.is_empty())
                .map(|(i, v)| (format!("arg{i}"), v))
                .collect();
            b.framework_ops.push(op);
        } else if in_cats(&map.runtime_categories, cat) {
            let Some(correlation) = correlation else {
                report.missing_correlation += 1;
                continue;
            };
            b.runtime_calls.push(RuntimeApiEvent { api_name: name, start, end, thread, correlation });
        } else if in_cats(&map.kernel_categories, cat) {
            let Some(correlation) = correlation else {
                report.missing_correlation += 1;
                continue;
            };
            b.kernels.push(DeviceKernelEvent {
                raw_name: name,
                start,
                end,
                correlation,
                grid: dim3(args.get(&map.grid_key)).unwrap_or(Dim3::ONE),
                block: dim3(args.get(&map.block_key)).unwrap_or(Dim3::ONE),
                stream: StreamId(as_u64(args.get(&map.stream_key)).unwrap_or(0)),
            });
        } else if in_cats(&map.nvtx_categories, cat) {
            b.nvtx_ranges.push(NvtxRangeEvent { label: name, start, end, thread });
        } else {
            report.ignored_events += 1;
        }
    }
    let b = finish(b, opts);
    report.count(&b);
    Ok((b, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::OpKind;

    fn import(text: &str) -> (TraceBundle, ImportReport) {
        import_framework_trace_str(text, Path::new("t.json"), &ImportOptions::default()).unwrap()
    }

    #[test]
    fn minimal_trace() {
        let (b, r) = import(
            r#"{"schemaVersion": 1, "traceEvents": [
            {"ph":"X","cat":"cpu_op","name":"aten::mm","ts":100.0,"dur":50.5,"tid":1,
             "args":{"Input Dims":[[4,4],[4,4]],"Input type":["float","float"],"Concrete Inputs":["",""]}},
            {"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","ts":110.25,"dur":5,"tid":1,"args":{"correlation":5}},
            {"ph":"X","cat":"kernel","name":"gemm","ts":120,"dur":20,"tid":7,"args":{"correlation":5,"grid":[8,1,1],"block":[128,1,1],"stream":7}},
            {"ph":"s","cat":"ac2g","name":"flow","ts":110,"id":5}
        ]}"#,
        );
        assert_eq!((b.framework_ops.len(), b.runtime_calls.len(), b.kernels.len()), (1, 1, 1));
        assert_eq!(r.time_unit, Some(super::super::TimeUnit::Microseconds));
        assert_eq!(r.ignored_events, 1);
        assert_eq!(b.framework_ops[0].start, Timestamp(0));
        assert_eq!(b.framework_ops[0].end, Timestamp(50_500));
        assert_eq!(b.runtime_calls[0].start, Timestamp(10_250));
        assert_eq!(b.kernels[0].grid, Dim3(8, 1, 1));
        assert_eq!(b.framework_ops[0].input_shapes, vec![vec![4, 4], vec![4, 4]]);
        assert!(b.framework_ops[0].scalar_args.is_empty());
    }

    #[test]
    fn nested_ops_get_kinds() {
        let (b, _) = import(
            r#"[{"ph":"X","cat":"cpu_op","name":"nn.Linear","ts":0,"dur":100,"tid":1},
                {"ph":"X","cat":"cpu_op","name":"aten::addmm","ts":10,"dur":80,"tid":1}]"#,
        );
        let kinds: Vec<OpKind> = b.framework_ops.iter().map(|o| o.kind).collect();
        assert_eq!(kinds, [OpKind::TorchOp, OpKind::AtenOp]);
    }

    #[test]
    fn missing_correlation_is_counted() {
        let (b, r) =
            import(r#"[{"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","ts":1,"dur":1,"tid":1,"args":{}}]"#);
        assert!(b.runtime_calls.is_empty());
        assert_eq!(r.missing_correlation, 1);
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let err = import_framework_trace_str(
            r#"{"schemaVersion": 9, "traceEvents": []}"#,
            Path::new("t"),
            &ImportOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ImportError::UnsupportedSchemaVersion { .. }));
    }
}
