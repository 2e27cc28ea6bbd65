//! Delimited tables exported from the system profiler.
//!
//! Required tables and columns (header names are matched case-insensitively;
//! alternatives in brackets):
//!
//! * `NVTX_EVENTS`: start, end, text [label, name]; optional globalTid [tid].
//! * `CUPTI_ACTIVITY_KIND_RUNTIME`: start, end, correlationId [correlation],
//!   name [nameId]; optional globalTid [tid].
//! * `CUPTI_ACTIVITY_KIND_KERNEL`: start, end, correlationId, demangledName
//!   [name, shortName], gridX/gridY/gridZ [grid as `XxYxZ`], blockX/blockY/
//!   blockZ [block]; optional streamId [stream].
//!
//! An optional `StringIds` table (id, value) resolves numeric name columns.
//! Times are nanoseconds unless a value has a fractional part (then
//! microseconds) or a unit is forced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::units::parse_decimal_ns;
use super::{finish, ImportError, ImportOptions, ImportReport, ImportSourceKind, TimeUnit};
use crate::trace::{
    CorrelationId, DeviceKernelEvent, Dim3, NvtxRangeEvent, RunMetadata, RuntimeApiEvent, StreamId, ThreadId,
    Timestamp, TraceBundle,
};

pub const NVTX_TABLE: &str = "NVTX_EVENTS";
pub const RUNTIME_TABLE: &str = "CUPTI_ACTIVITY_KIND_RUNTIME";
pub const KERNEL_TABLE: &str = "CUPTI_ACTIVITY_KIND_KERNEL";
const STRING_TABLE: &str = "StringIds";

struct Table {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, aliases: &[&str]) -> Option<usize> {
        aliases.iter().find_map(|a| self.header.iter().position(|h| h.eq_ignore_ascii_case(a)))
    }

    fn require(&self, aliases: &[&str]) -> Result<usize, ImportError> {
        self.col(aliases)
            .ok_or_else(|| ImportError::MissingColumn { table: self.name.clone(), column: aliases[0].to_string() })
    }

    fn bad(&self, row: usize, message: String) -> ImportError {
        ImportError::BadValue { table: self.name.clone(), row: row + 1, message }
    }
}

fn find_table(dir: &Path, name: &str) -> Option<PathBuf> {
    ["csv", "tsv", "txt"].iter().map(|ext| dir.join(format!("{name}.{ext}"))).find(|p| p.is_file())
}

fn read_table(path: &Path, name: &str) -> Result<Table, ImportError> {
    let text = fs::read_to_string(path).map_err(|source| ImportError::Io { path: path.into(), source })?;
    let first = text.lines().next().unwrap_or("");
    let delimiter = if first.matches('\t').count() > first.matches(',').count() { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).from_reader(text.as_bytes());
    let parse = |e: csv::Error| ImportError::Parse { path: path.into(), message: e.to_string() };
    let header = rdr.headers().map_err(parse)?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(parse)?.iter().map(|v| v.trim().to_string()).collect());
    }
    Ok(Table { name: name.to_string(), header, rows })
}

fn cell(row: &[String], col: usize) -> &str {
    row.get(col).map(String::as_str).unwrap_or("")
}

struct Cols {
    start: usize,
    end: usize,
}

fn time(t: &Table, row: usize, cols: &Cols, unit: TimeUnit) -> Result<Option<(Timestamp, Timestamp)>, ImportError> {
    let r = &t.rows[row];
    let (s, e) = (cell(r, cols.start), cell(r, cols.end));
    if e.is_empty() {
        return Ok(None);
    }
    let s = parse_decimal_ns(s, unit).ok_or_else(|| t.bad(row, format!("bad start '{s}'")))?;
    let e = parse_decimal_ns(e, unit).ok_or_else(|| t.bad(row, format!("bad end '{e}'")))?;
    Ok(Some((Timestamp(s), Timestamp(e))))
}

type DimReader = Box<dyn Fn(&[String]) -> Option<Dim3>>;

fn dims(t: &Table, prefix: &str) -> Result<DimReader, ImportError> {
    if let Some(x) = t.col(&[&format!("{prefix}X")]) {
        let y = t.require(&[&format!("{prefix}Y")])?;
        let z = t.require(&[&format!("{prefix}Z")])?;
        return Ok(Box::new(move |r: &[String]| {
            Some(Dim3(cell(r, x).parse().ok()?, cell(r, y).parse().ok()?, cell(r, z).parse().ok()?))
        }));
    }
    let c = t
        .col(&[prefix, &format!("{prefix}Dim"), &format!("{prefix}_dim")])
        .ok_or_else(|| ImportError::MissingColumn { table: t.name.clone(), column: prefix.to_string() })?;
    Ok(Box::new(move |r: &[String]| {
        let parts: Vec<u32> = cell(r, c)
            .split(['x', 'X', ',', ' '])
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().ok())
            .collect::<Option<_>>()?;
        match parts.as_slice() {
            [x] => Some(Dim3(*x, 1, 1)),
            [x, y] => Some(Dim3(*x, *y, 1)),
            [x, y, z] => Some(Dim3(*x, *y, *z)),
            _ => None,
        }
    }))
}

pub fn import_profiler_tables(dir: &Path, opts: &ImportOptions) -> Result<(TraceBundle, ImportReport), ImportError> {
    let load = |name: &str| -> Result<Table, ImportError> {
        let path =
            find_table(dir, name).ok_or_else(|| ImportError::MissingTable { dir: dir.into(), table: name.into() })?;
        read_table(&path, name)
    };
    let nvtx = load(NVTX_TABLE)?;
    let runtime = load(RUNTIME_TABLE)?;
    let kernel = load(KERNEL_TABLE)?;
    let strings: BTreeMap<String, String> = match find_table(dir, STRING_TABLE) {
        Some(p) => {
            let t = read_table(&p, STRING_TABLE)?;
            let (id, value) = (t.require(&["id"])?, t.require(&["value"])?);
            t.rows.iter().map(|r| (cell(r, id).to_string(), cell(r, value).to_string())).collect()
        }
        None => BTreeMap::new(),
    };
    let resolve = |v: &str| -> String {
        if !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) {
            if let Some(s) = strings.get(v) {
                return s.clone();
            }
        }
        v.to_string()
    };

    let cols_of = |t: &Table| -> Result<Cols, ImportError> {
        Ok(Cols { start: t.require(&["start"])?, end: t.require(&["end"])? })
    };
    let (nv_c, rt_c, k_c) = (cols_of(&nvtx)?, cols_of(&runtime)?, cols_of(&kernel)?);
    let nv_label = nvtx.require(&["text", "label", "name"])?;
    let nv_tid = nvtx.col(&["globalTid", "tid", "threadId"]);
    let rt_corr = runtime.require(&["correlationId", "correlation"])?;
    let rt_name = runtime.require(&["name", "nameId", "api_name"])?;
    let rt_tid = runtime.col(&["globalTid", "tid", "threadId"]);
    let k_corr = kernel.require(&["correlationId", "correlation"])?;
    let k_name = kernel.require(&["demangledName", "name", "shortName", "kernel_name"])?;
    let k_grid = dims(&kernel, "grid")?;
    let k_block = dims(&kernel, "block")?;
    let k_stream = kernel.col(&["streamId", "stream"]);

    let unit = opts.time_unit.unwrap_or_else(|| {
        let fractional = [(&nvtx, &nv_c), (&runtime, &rt_c), (&kernel, &k_c)]
            .iter()
            .any(|(t, c)| t.rows.iter().any(|r| cell(r, c.start).contains('.') || cell(r, c.end).contains('.')));
        if fractional {
            TimeUnit::Microseconds
        } else {
            TimeUnit::Nanoseconds
        }
    });
    let mut report = ImportReport::new(ImportSourceKind::SystemProfilerTables, Some(unit));
    let mut b = TraceBundle::new(RunMetadata::inferred(1));
    let tid = |r: &[String], c: Option<usize>| ThreadId(c.and_then(|c| cell(r, c).parse().ok()).unwrap_or(0));

    for i in 0..nvtx.rows.len() {
        let Some((start, end)) = time(&nvtx, i, &nv_c, unit)? else {
            report.ignored_events += 1;
            continue;
        };
        let r = &nvtx.rows[i];
        b.nvtx_ranges.push(NvtxRangeEvent { label: resolve(cell(r, nv_label)), start, end, thread: tid(r, nv_tid) });
    }
    for i in 0..runtime.rows.len() {
        let Some((start, end)) = time(&runtime, i, &rt_c, unit)? else {
            report.ignored_events += 1;
            continue;
        };
        let r = &runtime.rows[i];
        let Ok(corr) = cell(r, rt_corr).parse::<u64>() else {
            report.missing_correlation += 1;
            continue;
        };
        b.runtime_calls.push(RuntimeApiEvent {
            api_name: resolve(cell(r, rt_name)),
            start,
            end,
            thread: tid(r, rt_tid),
            correlation: CorrelationId(corr),
        });
    }
    for i in 0..kernel.rows.len() {
        let Some((start, end)) = time(&kernel, i, &k_c, unit)? else {
            report.ignored_events += 1;
            continue;
        };
        let r = &kernel.rows[i];
        let Ok(corr) = cell(r, k_corr).parse::<u64>() else {
            report.missing_correlation += 1;
            continue;
        };
        let grid = k_grid(r).ok_or_else(|| kernel.bad(i, "unreadable grid".into()))?;
        let block = k_block(r).ok_or_else(|| kernel.bad(i, "unreadable block".into()))?;
        b.kernels.push(DeviceKernelEvent {
            raw_name: resolve(cell(r, k_name)),
            start,
            end,
            correlation: CorrelationId(corr),
            grid,
            block,
            stream: StreamId(k_stream.and_then(|c| cell(r, c).parse().ok()).unwrap_or(0)),
        });
    }
    let b = finish(b, opts);
    report.count(&b);
    Ok((b, report))
}
