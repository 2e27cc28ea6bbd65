//! End-to-end check of the analyzer against a spec's ground truth.

use std::fmt::{self, Display};
use std::path::Path;

use serde::Serialize;

use super::{generate_bundles, to_trace_events, SynthOutput, SynthSpec};
use crate::import::{import_framework_trace_str, ImportOptions};
use crate::report::{analyze, AnalyzeInputs};
use crate::trace::io::{bundle_from_str, bundle_to_string};
use crate::trace::TraceBundle;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldDiff {
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl Display for FieldDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, got {}", self.field, self.expected, self.actual)
    }
}

/// Diffs in check order; the first one is the first mismatching field.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RoundtripReport {
    pub checked: usize,
    pub diffs: Vec<FieldDiff>,
}

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn first_diff(&self) -> Option<&FieldDiff> {
        self.diffs.first()
    }

    fn check<T: PartialEq + Display>(&mut self, field: impl Into<String>, expected: T, actual: T) {
        self.checked += 1;
        if expected != actual {
            self.fail(field, expected, actual);
        }
    }

    fn within(&mut self, field: impl Into<String>, expected: f64, actual: f64, tol: f64) {
        self.checked += 1;
        if (expected - actual).abs() > tol {
            self.fail(field, format!("{expected} ± {tol:.3}"), actual);
        }
    }

    fn fail(&mut self, field: impl Into<String>, expected: impl Display, actual: impl Display) {
        self.diffs.push(FieldDiff { field: field.into(), expected: expected.to_string(), actual: actual.to_string() });
    }
}

impl Display for RoundtripReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.first_diff() {
            None => write!(f, "PASS ({} fields)", self.checked),
            Some(d) => {
                write!(f, "FAIL {d}")?;
                if self.diffs.len() > 1 {
                    write!(f, " (+{} more)", self.diffs.len() - 1)?;
                }
                Ok(())
            }
        }
    }
}

fn reimport_bundle(b: &TraceBundle) -> Result<TraceBundle, String> {
    bundle_from_str(&bundle_to_string(b)).map_err(|e| e.to_string())
}

/// Passes the generated bundles through the importers and the full
/// analysis pipeline, then compares every recovered quantity with the
/// ground truth. With noise on, replay-derived quantities are checked for
/// mean recovery within 3σ/√R instead of exactly.
pub fn verify_outputs(out: &SynthOutput) -> RoundtripReport {
    let mut rep = RoundtripReport::default();
    let truth = &out.truth;

    let opts = ImportOptions { metadata: Some(out.full.metadata.clone()), ..ImportOptions::default() };
    let full = match import_framework_trace_str(&to_trace_events(&out.full), Path::new("synth-full.json"), &opts) {
        Ok((b, _)) => b,
        Err(e) => {
            rep.fail("import.full", "ok", e);
            return rep;
        }
    };
    let mut inputs = AnalyzeInputs::new(full);
    for (key, b) in &out.replays {
        match reimport_bundle(b) {
            Ok(b) => {
                inputs.replays.insert(key.clone(), b);
            }
            Err(e) => rep.fail(format!("import.replay.{key}"), "ok", e),
        }
    }
    match reimport_bundle(&out.null) {
        Ok(b) => inputs.null_replay = Some(b),
        Err(e) => rep.fail("import.null", "ok", e),
    }
    if !rep.passed() {
        return rep;
    }

    let a = match analyze(&inputs) {
        Ok(a) => a,
        Err(e) => {
            rep.fail("pipeline", "ok", e);
            return rep;
        }
    };
    let s = &a.decomposition.summary;
    let noisy = out.spec.noise.filter(|n| n.jitter > 0);

    rep.check("n_kernels", truth.n_invocations, s.n_kernels);
    rep.check("n_unmatched", 0, s.n_unmatched);
    rep.check("unique_names", truth.unique_names, s.unique_names);
    rep.check("sum_t_py", truth.sum_t_py, s.sum_t_py);
    rep.check("t_device_active", truth.t_device_active, s.t_device_active);
    rep.check("wall_clock_e2e", truth.wall_clock_e2e, s.wall_clock_e2e);
    rep.check("kernels_per_token", truth.kernels_per_token, s.kernels_per_token);
    rep.check("diversity_ratio", truth.diversity_ratio, s.diversity_ratio);
    match noisy {
        None => {
            rep.check("floor", truth.floor, s.floor);
            rep.check("dispatch_baseline", truth.dispatch_baseline, s.dispatch_baseline);
            rep.check("sum_dft", truth.sum_dft, s.sum_dft);
            rep.check("sum_dct", truth.sum_dct, s.sum_dct);
            rep.check("sum_floor_term", truth.sum_floor_term, s.sum_floor_term);
            rep.check("t_orchestration", truth.t_orchestration, s.t_orchestration);
            rep.check("hdbi", format!("{:.12}", truth.hdbi), format!("{:.12}", s.hdbi));
        }
        Some(n) => {
            let k = out.spec.null_samples().len() as f64;
            let mean = a.floor.standalone.as_ref().map_or(f64::NAN, |f| f.mean);
            rep.within("floor", truth.floor as f64, mean, 3.0 * n.sigma() / k.sqrt() + 0.5);
        }
    }

    rep.check("records", truth.records.len(), a.p1.db.len());
    let tol = noisy.map(|n| 3.0 * n.sigma() / (out.spec.measured_runs as f64).sqrt());
    for (key, t) in &truth.records {
        let Some(r) = a.p1.db.records.get(key) else {
            rep.fail(format!("record.{key}"), &t.cleaned_name, "missing");
            continue;
        };
        rep.check(format!("record.{key}.cleaned_name"), t.cleaned_name.as_str(), r.cleaned_name.as_str());
        rep.check(format!("record.{key}.family"), t.family, r.family);
        rep.check(format!("record.{key}.lib_flag"), t.lib_flag, r.lib_flag);
        rep.check(format!("record.{key}.frequency"), t.frequency, r.frequency);
        let Some(m) = a.measurements.get(key) else {
            rep.fail(format!("record.{key}.measurement"), "present", "missing");
            continue;
        };
        match tol {
            None => {
                rep.check(format!("record.{key}.dispatch"), t.dispatch, m.dispatch_ns());
                rep.check(format!("record.{key}.launch"), t.launch, m.launch_ns());
            }
            Some(tol) => {
                rep.within(format!("record.{key}.dispatch"), t.dispatch as f64, m.t_dispatch_mean, tol);
                rep.within(format!("record.{key}.launch"), t.launch as f64, m.t_launch_mean, tol);
            }
        }
    }
    rep
}

/// Generates the spec's bundles and verifies them. An invalid spec is a
/// failing report, not an error.
pub fn verify_roundtrip(spec: &SynthSpec) -> RoundtripReport {
    match generate_bundles(spec) {
        Ok(out) => verify_outputs(&out),
        Err(e) => {
            let mut rep = RoundtripReport::default();
            rep.fail("spec", "valid", e);
            rep
        }
    }
}
