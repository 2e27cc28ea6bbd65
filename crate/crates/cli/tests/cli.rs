use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn taxbreak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxbreak"))
        .args(args)
        .env_remove("TAXBREAK_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_gpt2(dir: &Path) -> PathBuf {
    let d = dir.join("gpt2");
    let o = taxbreak(&["synth", "--preset", "gpt2", "-o", s(&d), "--trace-events", "--tables", "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("376 invocations"), "{out}");
    assert!(out.contains("PASS"), "{out}");
    d
}

fn analyze(d: &Path, manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let trace = d.join("full.bundle.json");
    let mut args = vec!["analyze", "--trace", s(&trace), "--manifest", s(manifest), "--no-cache", "-o", s(out)];
    args.extend_from_slice(extra);
    taxbreak(&args)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn edit_manifest(d: &Path, name: &str, f: impl FnOnce(&mut Value)) -> PathBuf {
    let mut m: Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    f(&mut m);
    let path = d.join(name);
    fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
    path
}

#[test]
fn synth_then_analyze_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let manifest = d.join("manifest.json");
    let (r1, r2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    for r in [&r1, &r2] {
        let o = analyze(&d, &manifest, r, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("regime host_bound"));
    }
    for f in ["report.json", "run.summary", "invocations.tsv", "kernel_db.tsv", "diagnosis.txt"] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let rep = report(&r1);
    let truth: Value = serde_json::from_str(&fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    assert_eq!(rep["summary"]["t_orchestration"], truth["t_orchestration"]);
    assert_eq!(rep["summary"]["sum_dct"].as_u64(), Some(0));
}

#[test]
fn profiler_formats_give_the_same_decomposition() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let bundle_run = tmp.path().join("bundle");
    assert!(analyze(&d, &d.join("manifest.json"), &bundle_run, &[]).status.success());

    let imported = tmp.path().join("null.imported.json");
    let o = taxbreak(&[
        "import",
        s(&d.join("null_tables")),
        "--metadata",
        s(&d.join("null.metadata.json")),
        "-o",
        s(&imported),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let native = tmp.path().join("native");
    let o = taxbreak(&[
        "analyze",
        "--trace",
        s(&d.join("full.trace.json")),
        "--metadata",
        s(&d.join("full.metadata.json")),
        "--manifest",
        s(&d.join("manifest.json")),
        "--null-replay",
        s(&imported),
        "--no-cache",
        "-o",
        s(&native),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&bundle_run)["summary"], report(&native)["summary"]);
}

#[test]
fn missing_floor_exits_2_and_names_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let manifest = edit_manifest(&d, "no_null.json", |m| {
        m.as_object_mut().unwrap().remove("null_replay");
    });
    let o = analyze(&d, &manifest, &tmp.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--null-replay"), "{}", stderr(&o));
}

#[test]
fn low_coverage_exits_3_after_writing_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let manifest = edit_manifest(&d, "partial.json", |m| {
        let entries = m["entries"].as_array_mut().unwrap();
        let n = entries.len();
        entries.truncate(n / 2);
    });
    let out = tmp.path().join("r");
    let o = analyze(&d, &manifest, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("coverage"));
    let rep = report(&out);
    assert!(rep["summary"]["n_unmatched"].as_u64().unwrap() > 0);

    let o = analyze(&d, &manifest, &tmp.path().join("r0"), &["--min-coverage", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validate_reports_broken_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let good = d.join("null.bundle.json");
    assert!(taxbreak(&["validate", s(&good)]).status.success());

    let mut b: Value = serde_json::from_str(&fs::read_to_string(&good).unwrap()).unwrap();
    let k = &mut b["kernels"][0];
    let (start, end) = (k["start"].clone(), k["end"].clone());
    k["start"] = end;
    k["end"] = start;
    let bad = tmp.path().join("bad.bundle.json");
    fs::write(&bad, serde_json::to_string(&b).unwrap()).unwrap();
    let o = taxbreak(&["validate", s(&good), s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("bad.bundle.json: 1 error(s)"));
}

#[test]
fn diagnose_compare_and_plotdata_read_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d1 = synth_gpt2(tmp.path());
    let d16 = tmp.path().join("gpt2-bs16");
    assert!(taxbreak(&["synth", "--preset", "gpt2", "--batch-size", "16", "-o", s(&d16)]).status.success());
    let (r1, r16) = (tmp.path().join("r1"), tmp.path().join("r16"));
    assert!(analyze(&d1, &d1.join("manifest.json"), &r1, &[]).status.success());
    let o = analyze(&d16, &d16.join("manifest.json"), &r16, &[]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = taxbreak(&["diagnose", s(&r16.join("report.json"))]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("regime device_bound"));
    let o = taxbreak(&["diagnose", s(&r1.join("run.summary"))]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("regime host_bound"));

    let o = taxbreak(&["compare", s(&r1.join("report.json")), s(&r16.join("report.json"))]);
    assert!(o.status.success());
    let cmp: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cmp["regime_a"], "host_bound");
    assert!(cmp["device_active_delta_pct"].as_f64().unwrap() > 100.0);

    let plots = tmp.path().join("plots");
    let o = taxbreak(&["plotdata", s(&r1.join("report.json")), s(&r16.join("report.json")), "-o", s(&plots)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stack = fs::read_to_string(plots.join("stack.tsv")).unwrap();
    assert_eq!(stack.lines().count(), 3);
    assert!(plots.join("scatter.tsv").exists());
    assert!(fs::read_dir(&plots).unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with("heatmap_hdbi_")));
}

#[test]
fn phase1_only_exports_the_kernel_db() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth_gpt2(tmp.path());
    let out = tmp.path().join("p1");
    let o =
        taxbreak(&["analyze", "--trace", s(&d.join("full.bundle.json")), "--phase1-only", "--no-cache", "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let db = fs::read_to_string(out.join("kernel_db.tsv")).unwrap();
    assert!(db.starts_with("key\tfamily\t"));
    assert_eq!(db.lines().count(), 22);
    assert!(out.join("phase1.tsv").exists());
    assert!(!out.join("report.json").exists());
}

#[test]
fn bad_input_is_an_error_not_a_panic() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = taxbreak(&["analyze", "--trace", s(&missing), "-o", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}
