//! Plot-ready tables: orchestration stacks, heatmap grids and the
//! e2e-gain versus HDBI scatter. All tables are tab separated.

use std::collections::{BTreeMap, BTreeSet};

use crate::decompose::RunSummary;
use crate::diagnose::{compare_runs, DiagnosisConfig};
use crate::trace::Phase;
use crate::Nanos;

/// Four host bands plus the device bar for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackRow {
    pub label: String,
    pub python: Nanos,
    pub dispatch_base: Nanos,
    pub cuda_library: Nanos,
    pub launch_floor: Nanos,
    pub t_orchestration: Nanos,
    pub t_device_active: Nanos,
}

impl StackRow {
    pub fn of(label: impl Into<String>, s: &RunSummary) -> Self {
        let row = StackRow {
            label: label.into(),
            python: s.sum_t_py,
            dispatch_base: s.sum_base_term,
            cuda_library: s.sum_dct,
            launch_floor: s.sum_floor_term,
            t_orchestration: s.t_orchestration,
            t_device_active: s.t_device_active,
        };
        assert!(row.bands_sum() == row.t_orchestration, "stack bands do not sum to t_orchestration");
        row
    }

    pub fn bands_sum(&self) -> Nanos {
        self.python + self.dispatch_base + self.cuda_library + self.launch_floor
    }
}

pub fn run_label(s: &RunSummary) -> String {
    let w = if s.workload_label.is_empty() { "run" } else { &s.workload_label };
    format!("{w}|{}|bs{}|sl{}|{}", s.platform_label, s.batch_size, s.sequence_length, s.phase)
}

pub fn stack_table(runs: &[RunSummary]) -> String {
    let mut out = String::from("label\tpython_ns\tdispatch_base_ns\tcuda_library_ns\tlaunch_floor_ns\tt_orchestration_ns\tt_device_active_ns\thdbi\n");
    for s in runs {
        let r = StackRow::of(run_label(s), s);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\n",
            r.label,
            r.python,
            r.dispatch_base,
            r.cuda_library,
            r.launch_floor,
            r.t_orchestration,
            r.t_device_active,
            s.hdbi
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridValue {
    Hdbi,
    OrchestrationUs,
}

/// One grid per (workload, platform, phase), rows keyed by batch size and
/// columns by sequence length. Returns `(grid name, table)` pairs.
pub fn heatmap_grids(runs: &[RunSummary], value: GridValue) -> Vec<(String, String)> {
    let mut groups: BTreeMap<(String, String, Phase), Vec<&RunSummary>> = BTreeMap::new();
    for s in runs {
        groups.entry((s.workload_label.clone(), s.platform_label.clone(), s.phase)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((w, p, phase), members)| {
            let rows: BTreeSet<u32> = members.iter().map(|s| s.batch_size).collect();
            let cols: BTreeSet<u32> = members.iter().map(|s| s.sequence_length).collect();
            let cell: BTreeMap<(u32, u32), &RunSummary> =
                members.iter().map(|s| ((s.batch_size, s.sequence_length), *s)).collect();
            let mut t = String::from("batch_size");
            for c in &cols {
                t.push_str(&format!("\tsl{c}"));
            }
            t.push('\n');
            for r in &rows {
                t.push_str(&r.to_string());
                for c in &cols {
                    t.push('\t');
                    if let Some(s) = cell.get(&(*r, *c)) {
                        match value {
                            GridValue::Hdbi => t.push_str(&format!("{:.4}", s.hdbi)),
                            GridValue::OrchestrationUs => {
                                t.push_str(&format!("{:.2}", s.t_orchestration as f64 / 1000.0))
                            }
                        }
                    }
                }
                t.push('\n');
            }
            let w = if w.is_empty() { "run".to_string() } else { w };
            (format!("{w}_{p}_{phase}"), t)
        })
        .collect()
}

/// Pairs each run on `baseline_platform` with runs of the same workload and
/// shape on other platforms.
pub fn scatter_table(runs: &[RunSummary], baseline_platform: &str, cfg: &DiagnosisConfig) -> String {
    let mut out = String::from("workload\tbatch_size\tsequence_length\tphase\tplatform_a\tplatform_b\tbaseline_hdbi\te2e_gain_pct\torchestration_delta_pct\tregime_a\n");
    for a in runs.iter().filter(|s| s.platform_label == baseline_platform) {
        for b in runs.iter().filter(|s| {
            s.platform_label != baseline_platform
                && s.workload_label == a.workload_label
                && (s.batch_size, s.sequence_length, s.phase) == (a.batch_size, a.sequence_length, a.phase)
        }) {
            let c = compare_runs(a, b, cfg);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.2}\t{:.2}\t{}\n",
                a.workload_label,
                a.batch_size,
                a.sequence_length,
                a.phase,
                a.platform_label,
                b.platform_label,
                c.baseline_hdbi,
                c.e2e_gain_pct,
                c.orchestration_delta_pct,
                c.regime_a
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnose::tests::summary;

    #[test]
    fn stack_sums_and_zero_library_band() {
        let mut s = summary(3_390_000, 0, 1_693_000, 1_660_000, 0.0, 4_503);
        s.sum_t_py = 500_000;
        s.sum_base_term = 2_890_000;
        let r = StackRow::of("x", &s);
        assert_eq!(r.bands_sum(), s.t_orchestration);
        assert_eq!(r.cuda_library, 0);
        let t = stack_table(&[s]);
        assert!(t.lines().nth(1).unwrap().contains("\t500000\t2890000\t0\t1693000\t"));
    }

    #[test]
    fn single_cell_grid() {
        let s = summary(1, 0, 4_503, 10, 0.0, 4_503);
        let grids = heatmap_grids(&[s], GridValue::Hdbi);
        assert_eq!(grids.len(), 1);
        let lines: Vec<&str> = grids[0].1.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "batch_size\tsl512");
        assert_eq!(lines[1].split('\t').count(), 2);
    }

    #[test]
    fn scatter_pairs_platforms() {
        let mut a = summary(5_000_000, 0, 5_000_000, 1_000_000, 0.0, 5_000);
        a.platform_label = "h100".into();
        a.wall_clock_e2e = 100_000;
        let mut b = a.clone();
        b.platform_label = "h200".into();
        b.wall_clock_e2e = 87_000;
        let t = scatter_table(&[a, b], "h100", &DiagnosisConfig::default());
        let row = t.lines().nth(1).unwrap();
        assert!(row.contains("\th100\th200\t"));
        assert!(row.contains("\t13.00\t"));
    }
}
