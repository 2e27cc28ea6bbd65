//! Synthetic trace generation from a ground-truth specification.
//!
//! A [`SynthSpec`] fixes every per-invocation component in integer
//! nanoseconds. [`generate_bundles`] lays those components out as a
//! full-model trace, one replay trace per record and a null-kernel trace,
//! together with the closed-form [`GroundTruth`] the analyzer must
//! recover from them.
//!
//! Layout of one full-trace invocation on the single dispatch thread
//! (offsets from the torch op start `c`, `a = c + t_py`):
//!
//! ```text
//! torch op     [c, e + 100]           e = a + dispatch + launch
//! aten op      [a, e + 50]
//! front end    [a + 1, e + 10]        library records only
//! launch call  [a + dispatch, e]
//! kernel       starts at e, or when the stream frees up
//! ```
//!
//! Replay scopes use the same dispatch and launch offsets from the NVTX
//! scope start.

mod export;
pub mod presets;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{to_trace_events, write_profiler_tables, EXPORT_EPOCH_NS};
pub use presets::{preset, PRESET_NAMES};
pub use verify::{verify_outputs, verify_roundtrip, FieldDiff, RoundtripReport};

use crate::kernel_db::{clean_kernel_name, DedupKey, KernelFamily, OperatorMeta};
use crate::phase1::ITERATION_MARKER_PREFIX;
use crate::phase2::DISPATCH_SCOPE_LABEL;
use crate::phase2::{ManifestEntry, ManifestStatus, ReplayManifest};
use crate::trace::io::bundle_to_string;
use crate::trace::{
    DeviceKernelEvent, Dim3, FrameworkOpEvent, NvtxRangeEvent, Phase, RunMetadata, RuntimeApiEvent, TraceBundle,
};
use crate::Nanos;

const THREAD: u64 = 1;
const OP_TAIL: Nanos = 50;
const OP_GAP: Nanos = 50;
const SCOPE_SYNC: Nanos = 200;
const SCOPE_GAP: Nanos = 1_000;
const NULL_DISPATCH: Nanos = 500;
const MIN_NULL_RUNS: u32 = 10;
pub const FRONTEND_API: &str = "cublasLtMatmul";
pub const LAUNCH_API: &str = "cudaLaunchKernel";
pub const NULL_KERNEL: &str = "null_kernel";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed spec file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Inclusive range of integer nanoseconds; per-invocation values are drawn
/// uniformly from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsRange {
    pub lo: Nanos,
    pub hi: Nanos,
}

impl NsRange {
    pub fn fixed(v: Nanos) -> Self {
        NsRange { lo: v, hi: v }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> Nanos {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSpec {
    /// Must already be in cleaned form; the raw device name decorates it.
    pub cleaned_name: String,
    /// Expected classifier output for `cleaned_name`.
    pub family: KernelFamily,
    pub lib_flag: bool,
    /// Invocations per profiled iteration.
    pub frequency: u64,
    pub op_name: String,
    pub t_py: NsRange,
    pub dispatch: Nanos,
    pub launch: Nanos,
    pub kernel_duration: NsRange,
}

/// Uniform integer jitter in `[-jitter, +jitter]` on every measured replay
/// dispatch and launch sample and on every null-kernel launch gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub jitter: Nanos,
}

impl NoiseSpec {
    /// Standard deviation of the discrete uniform jitter.
    pub fn sigma(self) -> f64 {
        let width = (2 * self.jitter + 1) as f64;
        ((width * width - 1.0) / 12.0).sqrt()
    }
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Metadata of the full trace; `wall_clock_e2e = 0` means "derive from
    /// the generated last iteration".
    pub metadata: RunMetadata,
    pub floor: Nanos,
    /// Explicit null-kernel launch gaps; replaces `floor` repeated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_samples: Option<Vec<Nanos>>,
    pub warmup_runs: u32,
    pub measured_runs: u32,
    pub records: Vec<RecordSpec>,
    /// Rescales the drawn per-invocation T_Py values to this exact total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_py_total: Option<Nanos>,
    /// Rescales the drawn kernel durations to this exact total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_active_total: Option<Nanos>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "one")]
    pub profiled_iterations: u32,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes") + "\n"
    }

    pub fn n_invocations(&self) -> u64 {
        self.records.iter().map(|r| r.frequency).sum()
    }

    /// Null-kernel launch gaps of the measured null runs.
    pub fn null_samples(&self) -> Vec<Nanos> {
        match &self.floor_samples {
            Some(s) => s.clone(),
            None => vec![self.floor; self.measured_runs.max(MIN_NULL_RUNS) as usize],
        }
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.records.is_empty() {
            return bad("no records".into());
        }
        if self.floor == 0 && self.floor_samples.is_none() {
            return bad("floor must be positive".into());
        }
        if let Some(s) = &self.floor_samples {
            if s.len() < MIN_NULL_RUNS as usize || s.contains(&0) {
                return bad(format!("floor_samples needs at least {MIN_NULL_RUNS} positive values"));
            }
        }
        if self.measured_runs == 0 || self.profiled_iterations == 0 {
            return bad("measured_runs and profiled_iterations must be positive".into());
        }
        if self.metadata.phase == Phase::Prefill && self.metadata.output_tokens != 1 {
            return bad("prefill runs generate exactly one token".into());
        }
        if !self.records.iter().any(|r| !r.lib_flag) {
            return bad("at least one framework-native record is required for the dispatch baseline".into());
        }
        let mut names = BTreeSet::new();
        for r in &self.records {
            if clean_kernel_name(&r.cleaned_name) != r.cleaned_name || r.cleaned_name.is_empty() {
                return bad(format!("'{}' is not a cleaned kernel name", r.cleaned_name));
            }
            if !names.insert(r.cleaned_name.as_str()) {
                return bad(format!("duplicate record name '{}'", r.cleaned_name));
            }
            if r.frequency == 0 || r.dispatch < 2 || r.launch == 0 || r.kernel_duration.lo == 0 {
                return bad(format!(
                    "record '{}' needs positive frequency, dispatch >= 2, launch and duration",
                    r.cleaned_name
                ));
            }
            if r.t_py.lo > r.t_py.hi || r.kernel_duration.lo > r.kernel_duration.hi {
                return bad(format!("record '{}' has an empty range", r.cleaned_name));
            }
            if !r.op_name.starts_with("aten::") {
                return bad(format!("record '{}' op name must be an aten op", r.cleaned_name));
            }
        }
        if let Some(noise) = self.noise {
            let smallest =
                self.records.iter().flat_map(|r| [r.dispatch, r.launch]).chain(self.null_samples()).min().unwrap_or(0);
            if noise.jitter >= smallest / 2 {
                return bad("jitter must stay below half of every dispatch, launch and floor value".into());
            }
        }
        if self.device_active_total.is_some_and(|d| d < self.n_invocations()) {
            return bad("device_active_total leaves some kernel without duration".into());
        }
        Ok(())
    }
}

/// Launch geometry of record `i`; distinct per record.
pub fn record_grid(i: usize) -> Dim3 {
    Dim3(i as u32 + 1, 1, 1)
}

pub fn record_block() -> Dim3 {
    Dim3(128, 1, 1)
}

pub fn record_meta(i: usize, r: &RecordSpec) -> OperatorMeta {
    OperatorMeta {
        op_name: r.op_name.clone(),
        input_shapes: vec![vec![i as i64 + 1, 64]],
        dtypes: vec!["float".into()],
        scalar_args: Vec::new(),
    }
}

pub fn record_key(i: usize, r: &RecordSpec) -> DedupKey {
    DedupKey::compute(&record_meta(i, r), &r.cleaned_name, record_grid(i), record_block())
}

pub fn raw_kernel_name(cleaned: &str) -> String {
    format!("void {cleaned}<float, 4>(float*, int)")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub cleaned_name: String,
    pub family: KernelFamily,
    pub lib_flag: bool,
    pub frequency: u64,
    pub dispatch: Nanos,
    pub launch: Nanos,
    pub dct: Nanos,
    pub dkt_fw: Nanos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_invocations: u64,
    pub unique_names: u64,
    pub output_tokens: u32,
    pub floor: Nanos,
    pub dispatch_baseline: Nanos,
    pub sum_t_py: Nanos,
    pub sum_dft: Nanos,
    pub sum_dct: Nanos,
    pub sum_floor_term: Nanos,
    pub t_orchestration: Nanos,
    pub t_device_active: Nanos,
    pub wall_clock_e2e: Nanos,
    pub hdbi: f64,
    pub kernels_per_token: f64,
    pub diversity_ratio: f64,
    pub records: BTreeMap<DedupKey, RecordTruth>,
}

pub struct SynthOutput {
    pub spec: SynthSpec,
    pub full: TraceBundle,
    pub replays: BTreeMap<DedupKey, TraceBundle>,
    pub null: TraceBundle,
    pub manifest: ReplayManifest,
    pub truth: GroundTruth,
}

pub const FULL_FILE: &str = "full.bundle.json";
pub const NULL_FILE: &str = "null.bundle.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const SPEC_FILE: &str = "spec.json";
pub const REPLAY_DIR: &str = "replays";

fn replay_file(key: &DedupKey) -> String {
    format!("{REPLAY_DIR}/{key}.bundle.json")
}

/// Largest-remainder split of `total` proportional to `weights`; ties in the
/// remainder go to the lower index. All weights zero splits evenly.
pub fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    let (weights, sum): (Vec<u128>, u128) = if sum == 0 {
        (vec![1; weights.len()], weights.len() as u128)
    } else {
        (weights.iter().map(|&w| w as u128).collect(), sum)
    };
    let t = total as u128;
    let mut out: Vec<u64> = weights.iter().map(|w| (t * w / sum) as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (t * weights[b] % sum).cmp(&(t * weights[a] % sum)).then(a.cmp(&b)));
    for &i in order.iter().take((total - assigned) as usize) {
        out[i] += 1;
    }
    out
}

fn jitter(rng: &mut ChaCha8Rng, noise: Option<NoiseSpec>, v: Nanos) -> Nanos {
    match noise {
        Some(n) if n.jitter > 0 => {
            let j = n.jitter as i64;
            (v as i64 + rng.gen_range(-j..=j)) as Nanos
        }
        _ => v,
    }
}

struct Ids {
    next: u64,
}

impl Ids {
    fn take(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}

fn aten_op(meta: &OperatorMeta, start: Nanos, end: Nanos) -> FrameworkOpEvent {
    let mut op = FrameworkOpEvent::new(meta.op_name.clone(), start, end, THREAD);
    op.input_shapes = meta.input_shapes.clone();
    op.dtypes = meta.dtypes.clone();
    op.scalar_args = meta.scalar_args.clone();
    op
}

fn kernel(name: &str, start: Nanos, end: Nanos, corr: u64, grid: Dim3, block: Dim3) -> DeviceKernelEvent {
    let mut k = DeviceKernelEvent::new(name, start, end, corr);
    k.grid = grid;
    k.block = block;
    k
}

fn torch_name(op_name: &str) -> String {
    format!("nn.{}", op_name.trim_start_matches("aten::"))
}

struct FullTrace {
    bundle: TraceBundle,
    last_t_py: Vec<Nanos>,
    last_durations: Vec<Nanos>,
}

fn generate_full(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> FullTrace {
    let metas: Vec<OperatorMeta> = spec.records.iter().enumerate().map(|(i, r)| record_meta(i, r)).collect();
    let mut b = TraceBundle::new(spec.metadata.clone());
    let mut ids = Ids { next: 0 };
    let (mut c, mut device) = (0, 0);
    let mut last = (Vec::new(), Vec::new());
    let mut last_span = 0;
    for it in 0..spec.profiled_iterations {
        let mut order: Vec<usize> =
            spec.records.iter().enumerate().flat_map(|(i, r)| std::iter::repeat_n(i, r.frequency as usize)).collect();
        order.shuffle(rng);
        let mut t_py: Vec<Nanos> = order.iter().map(|&i| spec.records[i].t_py.draw(rng)).collect();
        if let Some(total) = spec.t_py_total {
            t_py = apportion(total, &t_py);
        }
        let mut dur: Vec<Nanos> = order.iter().map(|&i| spec.records[i].kernel_duration.draw(rng)).collect();
        if let Some(total) = spec.device_active_total {
            let extra = apportion(total - dur.len() as u64, &dur);
            dur = extra.into_iter().map(|d| d + 1).collect();
        }

        let iter_start = c;
        let mut iter_end = c;
        for (k, &i) in order.iter().enumerate() {
            let r = &spec.records[i];
            let a = c + t_py[k];
            let t_api = a + r.dispatch;
            let e = t_api + r.launch;
            b.framework_ops.push(FrameworkOpEvent::new(torch_name(&r.op_name), c, e + 2 * OP_TAIL, THREAD));
            b.framework_ops.push(aten_op(&metas[i], a, e + OP_TAIL));
            if r.lib_flag {
                b.runtime_calls.push(RuntimeApiEvent::new(FRONTEND_API, a + 1, e + 10, THREAD, ids.take()));
            }
            let corr = ids.take();
            b.runtime_calls.push(RuntimeApiEvent::new(LAUNCH_API, t_api, e, THREAD, corr));
            let ks = device.max(e);
            device = ks + dur[k];
            b.kernels.push(kernel(&raw_kernel_name(&r.cleaned_name), ks, device, corr, record_grid(i), record_block()));
            iter_end = iter_end.max(device);
            c = e + 2 * OP_TAIL + OP_GAP;
        }
        let host_end = c - OP_GAP + 10;
        b.nvtx_ranges.push(NvtxRangeEvent::new(format!("{ITERATION_MARKER_PREFIX}{it}"), iter_start, host_end, THREAD));
        last_span = iter_end.max(host_end) - iter_start;
        c = host_end + SCOPE_GAP;
        last = (t_py, dur);
    }
    if b.metadata.wall_clock_e2e == 0 {
        b.metadata.wall_clock_e2e = last_span;
    }
    b.canonicalize();
    FullTrace { bundle: b, last_t_py: last.0, last_durations: last.1 }
}

/// One dispatch scope: NVTX open, optional operator and front end, launch
/// after `dispatch`, kernel after `launch`.
struct Scope<'a> {
    meta: Option<&'a OperatorMeta>,
    frontend: bool,
    kernel_name: &'a str,
    grid: Dim3,
    block: Dim3,
    duration: Nanos,
}

fn push_scope(b: &mut TraceBundle, s: &Scope<'_>, c: Nanos, dispatch: Nanos, launch: Nanos, ids: &mut Ids) -> Nanos {
    let t_api = c + dispatch;
    let e = t_api + launch;
    if let Some(meta) = s.meta {
        b.framework_ops.push(aten_op(meta, c, e + OP_TAIL));
    }
    if s.frontend {
        b.runtime_calls.push(RuntimeApiEvent::new(FRONTEND_API, c + 1, e + 10, THREAD, ids.take()));
    }
    let corr = ids.take();
    b.runtime_calls.push(RuntimeApiEvent::new(LAUNCH_API, t_api, e, THREAD, corr));
    b.kernels.push(kernel(s.kernel_name, e, e + s.duration, corr, s.grid, s.block));
    let end = (e + s.duration).max(e + OP_TAIL) + SCOPE_SYNC;
    b.nvtx_ranges.push(NvtxRangeEvent::new(DISPATCH_SCOPE_LABEL, c, end, THREAD));
    end + SCOPE_GAP
}

fn replay_metadata(spec: &SynthSpec, measured: u32) -> RunMetadata {
    RunMetadata { warmup_runs: spec.warmup_runs, measured_runs: measured, ..spec.metadata.clone() }
}

fn finish_replay(mut b: TraceBundle) -> TraceBundle {
    b.metadata.wall_clock_e2e = b.span().max(1);
    b.canonicalize();
    b
}

fn generate_replay(spec: &SynthSpec, i: usize, rng: &mut ChaCha8Rng) -> TraceBundle {
    let r = &spec.records[i];
    let meta = record_meta(i, r);
    let raw = raw_kernel_name(&r.cleaned_name);
    let scope = Scope {
        meta: Some(&meta),
        frontend: r.lib_flag,
        kernel_name: &raw,
        grid: record_grid(i),
        block: record_block(),
        duration: r.kernel_duration.lo,
    };
    let mut b = TraceBundle::new(replay_metadata(spec, spec.measured_runs));
    let mut ids = Ids { next: 0 };
    let mut c = 0;
    for j in 0..spec.warmup_runs + spec.measured_runs {
        let (d, l) = if j < spec.warmup_runs {
            (2 * r.dispatch + 100, 2 * r.launch + 100)
        } else {
            (jitter(rng, spec.noise, r.dispatch), jitter(rng, spec.noise, r.launch))
        };
        c = push_scope(&mut b, &scope, c, d, l, &mut ids);
    }
    finish_replay(b)
}

fn generate_null(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> TraceBundle {
    let samples = spec.null_samples();
    let scope = Scope {
        meta: None,
        frontend: false,
        kernel_name: NULL_KERNEL,
        grid: Dim3::ONE,
        block: Dim3::ONE,
        duration: 1_000,
    };
    let mut b = TraceBundle::new(replay_metadata(spec, samples.len() as u32));
    let mut ids = Ids { next: 0 };
    let mut c = 0;
    let warm = 2 * samples[0] + 100;
    for _ in 0..spec.warmup_runs {
        c = push_scope(&mut b, &scope, c, NULL_DISPATCH, warm, &mut ids);
    }
    for &s in &samples {
        c = push_scope(&mut b, &scope, c, NULL_DISPATCH, jitter(rng, spec.noise, s), &mut ids);
    }
    finish_replay(b)
}

/// Closed-form totals over the injected components.
fn ground_truth(spec: &SynthSpec, full: &FullTrace) -> GroundTruth {
    let n = spec.n_invocations();
    let samples = spec.null_samples();
    let total: u64 = samples.iter().sum();
    let k = samples.len() as u64;
    let floor = (2 * total + k) / (2 * k);
    let mut native: Vec<Nanos> = spec.records.iter().filter(|r| !r.lib_flag).map(|r| r.dispatch).collect();
    native.sort_unstable();
    let base = native[native.len().div_ceil(2) - 1];

    let mut records = BTreeMap::new();
    let mut sum_dct = 0;
    for (i, r) in spec.records.iter().enumerate() {
        let dct = if r.lib_flag { r.dispatch.saturating_sub(base) } else { 0 };
        sum_dct += dct * r.frequency;
        records.insert(
            record_key(i, r),
            RecordTruth {
                cleaned_name: r.cleaned_name.clone(),
                family: r.family,
                lib_flag: r.lib_flag,
                frequency: r.frequency,
                dispatch: r.dispatch,
                launch: r.launch,
                dct,
                dkt_fw: r.launch.saturating_sub(floor),
            },
        );
    }
    let sum_t_py: Nanos = full.last_t_py.iter().sum();
    let sum_dft = sum_t_py + n * base;
    let sum_floor_term = n * floor;
    let t_orchestration = sum_dft + sum_dct + sum_floor_term;
    let device: Nanos = full.last_durations.iter().sum();
    let m = spec.metadata.output_tokens;
    GroundTruth {
        n_invocations: n,
        unique_names: spec.records.len() as u64,
        output_tokens: m,
        floor,
        dispatch_baseline: base,
        sum_t_py,
        sum_dft,
        sum_dct,
        sum_floor_term,
        t_orchestration,
        t_device_active: device,
        wall_clock_e2e: full.bundle.metadata.wall_clock_e2e,
        hdbi: device as f64 / (device + t_orchestration) as f64,
        kernels_per_token: n as f64 / m as f64,
        diversity_ratio: spec.records.len() as f64 / n as f64,
        records,
    }
}

/// Deterministic in `spec`: the same spec yields byte-identical bundles.
pub fn generate_bundles(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let full = generate_full(spec, &mut rng);
    let mut replays = BTreeMap::new();
    let mut manifest = ReplayManifest::new();
    manifest.null_replay = Some(NULL_FILE.into());
    for (i, r) in spec.records.iter().enumerate() {
        let key = record_key(i, r);
        replays.insert(key.clone(), generate_replay(spec, i, &mut rng));
        manifest.entries.push(ManifestEntry {
            trace: Some(replay_file(&key)),
            record_key: key,
            status: ManifestStatus::Replayed,
            reason: None,
        });
    }
    manifest.entries.sort_by(|a, b| a.record_key.cmp(&b.record_key));
    let null = generate_null(spec, &mut rng);
    let truth = ground_truth(spec, &full);
    Ok(SynthOutput { spec: spec.clone(), full: full.bundle, replays, null, manifest, truth })
}

impl SynthOutput {
    /// Writes the spec, bundles, manifest and ground truth under `dir`:
    ///
    /// ```text
    /// dir/spec.json  dir/truth.json  dir/manifest.json
    /// dir/full.bundle.json  dir/null.bundle.json  dir/replays/<key>.bundle.json
    /// ```
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        let replay_dir = dir.join(REPLAY_DIR);
        fs::create_dir_all(&replay_dir).map_err(io_err(&replay_dir))?;
        let mut files: Vec<(PathBuf, String)> = vec![
            (dir.join(SPEC_FILE), self.spec.to_json()),
            (dir.join(TRUTH_FILE), serde_json::to_string_pretty(&self.truth).expect("truth serializes") + "\n"),
            (dir.join(MANIFEST_FILE), self.manifest.to_json()),
            (dir.join(FULL_FILE), bundle_to_string(&self.full)),
            (dir.join(NULL_FILE), bundle_to_string(&self.null)),
        ];
        for (key, b) in &self.replays {
            files.push((dir.join(replay_file(key)), bundle_to_string(b)));
        }
        for (path, text) in files {
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(())
    }
}
