use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use taxbreak::config::AnalysisConfig;
use taxbreak::diagnose::{compare_runs, prescribe};
use taxbreak::import::{
    import_any, import_bundle, import_framework_trace, import_profiler_tables, read_metadata, FrameworkMapping,
    ImportOptions, TimeUnit,
};
use taxbreak::kernel_db::{CacheStore, DedupKey};
use taxbreak::phase2::ReplayManifest;
use taxbreak::report::plot::{heatmap_grids, scatter_table, stack_table, GridValue};
use taxbreak::report::{
    analyze, analyze_phase1, invocations_to_tsv, summary_from_json, summary_to_json, AnalyzeError, AnalyzeInputs,
    ProvenanceEntry, ReportDocument,
};
use taxbreak::synth::{self, generate_bundles, verify_outputs, SynthSpec};
use taxbreak::trace::io::write_bundle;
use taxbreak::trace::{validate_bundle, TraceBundle};

const EXIT_INVALID: u8 = 2;
const EXIT_LOW_COVERAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "taxbreak", version, about = "Decompose host-side orchestration overhead of LLM inference traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a profiler output into a canonical bundle.
    Import(ImportArgs),
    /// Check bundles against the trace invariants.
    Validate {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
    },
    /// Run both analysis phases and write the report.
    Analyze(AnalyzeArgs),
    /// Print the diagnosis of a report or run summary.
    Diagnose {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare two runs of the same workload.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate synthetic traces with known ground truth.
    Synth(SynthArgs),
    /// Write plot-ready tables from one or more reports.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Auto,
    TraceEvents,
    Tables,
    Bundle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Ns,
    Us,
}

#[derive(Args)]
struct ImportArgs {
    /// Trace-event file, table directory or bundle.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    format: Format,
    /// Run metadata sidecar (JSON).
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Force the time unit instead of auto-detecting it.
    #[arg(long, value_enum)]
    time_unit: Option<Unit>,
    /// Category and argument mapping for trace-event files (JSON).
    #[arg(long)]
    mapping: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Full-model trace (bundle, trace-event file or table directory).
    #[arg(long)]
    trace: PathBuf,
    /// Metadata sidecar for a full trace that carries none.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Replay manifest; trace paths are relative to its directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Standalone null-kernel replay; overrides the manifest entry.
    #[arg(long)]
    null_replay: Option<PathBuf>,
    /// In-context null-kernel replay; overrides the manifest entry.
    #[arg(long)]
    replay_floor: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Minimum replay coverage in percent (default 95).
    #[arg(long)]
    min_coverage: Option<f64>,
    /// Dedup cache directory; defaults to $TAXBREAK_CACHE_DIR.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Ignore and do not update the dedup cache.
    #[arg(long)]
    no_cache: bool,
    /// Stop after the kernel database and the Python-dispatch samples.
    #[arg(long)]
    phase1_only: bool,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Named preset.
    #[arg(long, conflicts_with = "spec", value_parser = clap::builder::PossibleValuesParser::new(synth::PRESET_NAMES))]
    preset: Option<String>,
    /// Spec file (JSON, the format written as spec.json).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Batch size for the gpt2 preset.
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Also write the full trace as a trace-event file.
    #[arg(long)]
    trace_events: bool,
    /// Also write the null-kernel replay as profiler tables.
    #[arg(long)]
    tables: bool,
    /// Run the generated traces through the pipeline and compare with the
    /// ground truth.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Reports (report.json) or run summaries.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Platform treated as the baseline in the scatter table.
    #[arg(long)]
    baseline_platform: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig> {
    match path {
        Some(p) => Ok(AnalysisConfig::load(p)?),
        None => Ok(AnalysisConfig::default()),
    }
}

fn import_options(metadata: Option<&Path>) -> Result<ImportOptions> {
    let metadata = metadata.map(read_metadata).transpose()?;
    Ok(ImportOptions { metadata, ..ImportOptions::default() })
}

fn load_trace(path: &Path, opts: &ImportOptions) -> Result<(TraceBundle, Vec<u8>)> {
    let (bundle, report) = import_any(path, opts).with_context(|| format!("importing {}", path.display()))?;
    info!("{}: {} events via {}", path.display(), bundle.event_count(), report.source_kind);
    let digest_bytes =
        if path.is_dir() { taxbreak::trace::io::bundle_to_string(&bundle).into_bytes() } else { fs::read(path)? };
    Ok((bundle, digest_bytes))
}

fn cmd_import(args: &ImportArgs) -> Result<ExitCode> {
    let mut opts = import_options(args.metadata.as_deref())?;
    opts.time_unit = args.time_unit.map(|u| match u {
        Unit::Ns => TimeUnit::Nanoseconds,
        Unit::Us => TimeUnit::Microseconds,
    });
    if let Some(m) = &args.mapping {
        opts.mapping = FrameworkMapping::from_json(&read(m)?).with_context(|| format!("parsing {}", m.display()))?;
    }
    let (bundle, report) = match args.format {
        Format::Auto => import_any(&args.input, &opts),
        Format::TraceEvents => import_framework_trace(&args.input, &opts),
        Format::Tables => import_profiler_tables(&args.input, &opts),
        Format::Bundle => import_bundle(&args.input, &opts),
    }
    .with_context(|| format!("importing {}", args.input.display()))?;
    write_bundle(&args.output, &bundle)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let v = validate_bundle(&bundle);
    for violation in &v.violations {
        warn!("{violation}");
    }
    Ok(if v.has_errors() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS })
}

fn cmd_validate(bundles: &[PathBuf]) -> Result<ExitCode> {
    let mut failed = false;
    for path in bundles {
        let (bundle, _) = load_trace(path, &ImportOptions::default())?;
        let report = validate_bundle(&bundle);
        let errors = report.violations.iter().filter(|v| !v.kind.is_warning()).count();
        println!("{}: {} error(s), {} warning(s)", path.display(), errors, report.violations.len() - errors);
        for v in &report.violations {
            println!("  {v}");
        }
        failed |= report.has_errors();
    }
    Ok(if failed { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS })
}

fn cache_store(args: &AnalyzeArgs) -> Option<CacheStore> {
    if args.no_cache {
        return None;
    }
    args.cache_dir.clone().map(CacheStore::new).or_else(CacheStore::from_env)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(c) = args.min_coverage {
        config.min_coverage_pct = c;
    }
    let mut provenance = Vec::new();
    let (full, bytes) = load_trace(&args.trace, &import_options(args.metadata.as_deref())?)?;
    provenance.push(ProvenanceEntry::of_bytes("full-trace", display(&args.trace), &bytes));

    let store = cache_store(args);
    let cache = match &store {
        Some(s) => Some(s.load(&full.metadata.platform_label)?),
        None => None,
    };
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    if args.phase1_only {
        let p1 = match analyze_phase1(&full, &config, cache.as_ref()) {
            Ok(p1) => p1,
            Err(e @ AnalyzeError::Validation { .. }) => {
                eprintln!("error: {e}");
                return Ok(ExitCode::from(EXIT_INVALID));
            }
            Err(e) => return Err(e.into()),
        };
        let cached: BTreeSet<DedupKey> = p1.partition.cache_hits.iter().cloned().collect();
        write(&args.out_dir.join("kernel_db.tsv"), &p1.db.to_tsv(&cached))?;
        write(&args.out_dir.join("phase1.tsv"), &p1.phase1.to_tsv())?;
        println!("{} records, {} to replay, {} cached", p1.db.len(), p1.partition.uncached.len(), cached.len());
        return Ok(ExitCode::SUCCESS);
    }

    let mut inputs = AnalyzeInputs::new(full);
    inputs.config = config.clone();
    inputs.cache = cache;
    let mut null_path = args.null_replay.clone();
    let mut floor_path = args.replay_floor.clone();
    if let Some(mpath) = &args.manifest {
        let text = read(mpath)?;
        provenance.push(ProvenanceEntry::of_bytes("manifest", display(mpath), text.as_bytes()));
        let manifest = ReplayManifest::from_str_at(&text, mpath)?;
        let base = mpath.parent().unwrap_or(Path::new("."));
        null_path = null_path.or_else(|| manifest.null_replay.as_ref().map(|p| base.join(p)));
        floor_path = floor_path.or_else(|| manifest.replay_floor.as_ref().map(|p| base.join(p)));
        let paths: BTreeMap<DedupKey, PathBuf> = manifest.replay_paths(base);
        for (key, path) in paths {
            let (b, bytes) = load_trace(&path, &ImportOptions::default())?;
            provenance.push(ProvenanceEntry::of_bytes(format!("replay {key}"), display(&path), &bytes));
            inputs.replays.insert(key, b);
        }
    }
    if let Some(p) = &null_path {
        let (b, bytes) = load_trace(p, &ImportOptions::default())?;
        provenance.push(ProvenanceEntry::of_bytes("null-replay", display(p), &bytes));
        inputs.null_replay = Some(b);
    }
    if let Some(p) = &floor_path {
        let (b, bytes) = load_trace(p, &ImportOptions::default())?;
        provenance.push(ProvenanceEntry::of_bytes("replay-floor", display(p), &bytes));
        inputs.replay_floor = Some(b);
    }

    let analysis = match analyze(&inputs) {
        Ok(a) => a,
        Err(e @ (AnalyzeError::Validation { .. } | AnalyzeError::MissingFloor)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_INVALID));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(s) = &store {
        let merged = s.store(&analysis.cache_update)?;
        info!("cache {} now holds {} records", s.path_for(&merged.platform_label).display(), merged.entries.len());
    }

    let out = &args.out_dir;
    let doc = ReportDocument::build(&analysis, &config, Some("invocations.tsv".into()), provenance);
    write(&out.join("report.json"), &doc.to_json())?;
    write(&out.join("run.summary"), &summary_to_json(&doc.summary))?;
    write(&out.join("invocations.tsv"), &invocations_to_tsv(&analysis.decomposition.invocations))?;
    let cached: BTreeSet<DedupKey> = analysis.p1.partition.cache_hits.iter().cloned().collect();
    write(&out.join("kernel_db.tsv"), &analysis.p1.db.to_tsv(&cached))?;
    let text = analysis.diagnosis.render_text(&doc.summary);
    write(&out.join("diagnosis.txt"), &text)?;
    print!("{text}");

    let coverage = doc.summary.coverage_pct;
    if coverage < config.min_coverage_pct {
        eprintln!(
            "error: replay coverage {coverage:.2}% is below the minimum {:.2}% ({} unmatched invocations)",
            config.min_coverage_pct, doc.summary.n_unmatched
        );
        return Ok(ExitCode::from(EXIT_LOW_COVERAGE));
    }
    Ok(ExitCode::SUCCESS)
}

/// A report document or a bare run summary.
fn load_summary(path: &Path) -> Result<taxbreak::decompose::RunSummary> {
    let text = read(path)?;
    if let Ok(doc) = ReportDocument::from_json(&text) {
        return Ok(doc.summary);
    }
    summary_from_json(&text).with_context(|| format!("{} is neither a report nor a run summary", path.display()))
}

fn cmd_diagnose(input: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let s = load_summary(input)?;
    print!("{}", prescribe(&s, &cfg.diagnosis).render_text(&s));
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(a: &Path, b: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let report = compare_runs(&load_summary(a)?, &load_summary(b)?, &cfg.diagnosis);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let mut spec = match (&args.preset, &args.spec) {
        (Some(name), None) => synth::preset(name, args.seed)?,
        (None, Some(path)) => SynthSpec::from_json(&read(path)?)?,
        _ => bail!("pass exactly one of --preset or --spec"),
    };
    if let Some(bs) = args.batch_size {
        if args.preset.as_deref().is_some_and(|p| p.starts_with("gpt2")) {
            spec = synth::presets::gpt2(bs);
            spec.seed = args.seed;
        } else {
            bail!("--batch-size applies to the gpt2 presets only");
        }
    }
    let out = generate_bundles(&spec)?;
    out.write_to_dir(&args.out_dir)?;
    if args.trace_events {
        write(&args.out_dir.join("full.trace.json"), &synth::to_trace_events(&out.full))?;
        write(&args.out_dir.join("full.metadata.json"), &serde_json::to_string_pretty(&out.full.metadata)?)?;
    }
    if args.tables {
        synth::write_profiler_tables(&out.null, &args.out_dir.join("null_tables"))?;
        write(&args.out_dir.join("null.metadata.json"), &serde_json::to_string_pretty(&out.null.metadata)?)?;
    }
    let t = &out.truth;
    println!(
        "{} invocations, {} records: t_orchestration {} ns, device-active {} ns, hdbi {:.4}",
        t.n_invocations, t.unique_names, t.t_orchestration, t.t_device_active, t.hdbi
    );
    if args.verify {
        let rep = verify_outputs(&out);
        println!("{rep}");
        if !rep.passed() {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_plotdata(args: &PlotArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let runs = args.inputs.iter().map(|p| load_summary(p)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&args.out_dir)?;
    write(&args.out_dir.join("stack.tsv"), &stack_table(&runs))?;
    for (value, tag) in [(GridValue::Hdbi, "hdbi"), (GridValue::OrchestrationUs, "orchestration_us")] {
        for (name, table) in heatmap_grids(&runs, value) {
            write(&args.out_dir.join(format!("heatmap_{tag}_{name}.tsv")), &table)?;
        }
    }
    let baseline = args.baseline_platform.clone().unwrap_or_else(|| runs[0].platform_label.clone());
    write(&args.out_dir.join("scatter.tsv"), &scatter_table(&runs, &baseline, &cfg.diagnosis))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Import(a) => cmd_import(a),
        Command::Validate { bundles } => cmd_validate(bundles),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Diagnose { input, config } => cmd_diagnose(input, config.as_deref()),
        Command::Compare { a, b, config } => cmd_compare(a, b, config.as_deref()),
        Command::Synth(a) => cmd_synth(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
