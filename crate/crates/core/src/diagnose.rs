//! Boundedness regime, optimization prescriptions and run comparison.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::decompose::RunSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HostBound,
    Balanced,
    DeviceBound,
}

impl Regime {
    /// Higher is more host-bound.
    pub fn severity(self) -> u8 {
        match self {
            Regime::DeviceBound => 0,
            Regime::Balanced => 1,
            Regime::HostBound => 2,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::HostBound => "host_bound",
            Regime::Balanced => "balanced",
            Regime::DeviceBound => "device_bound",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    SoftwareStack,
    LaunchCount,
    LaunchPath,
    DeviceWork,
}

impl Layer {
    pub fn action(self) -> &'static str {
        match self {
            Layer::SoftwareStack => "reduce framework and library dispatch cost: runtime compilation, leaner operator dispatch, library call caching",
            Layer::LaunchCount => "reduce the number of launches: kernel fusion",
            Layer::LaunchPath => "shorten the launch path: graph capture or persistent kernels",
            Layer::DeviceWork => "optimize device-side work: kernel efficiency, precision, batching",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::SoftwareStack => "software_stack",
            Layer::LaunchCount => "launch_count",
            Layer::LaunchPath => "launch_path",
            Layer::DeviceWork => "device_work",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig {
    pub theta_low: f64,
    pub theta_high: f64,
    /// Mean launch excess above `kappa · floor` triggers the launch-path
    /// prescription.
    pub kappa: f64,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        DiagnosisConfig { theta_low: 0.3, theta_high: 0.7, kappa: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub layer: Layer,
    pub action: String,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub regime: Regime,
    pub dominant_layer: Layer,
    pub prescriptions: Vec<Prescription>,
    pub thresholds_used: DiagnosisConfig,
}

pub fn classify_regime(hdbi: f64, cfg: &DiagnosisConfig) -> Regime {
    if hdbi < cfg.theta_low {
        Regime::HostBound
    } else if hdbi > cfg.theta_high {
        Regime::DeviceBound
    } else {
        Regime::Balanced
    }
}

pub fn prescribe(s: &RunSummary, cfg: &DiagnosisConfig) -> Diagnosis {
    let regime = classify_regime(s.hdbi, cfg);
    let software = s.sum_dft as u128 + s.sum_dct as u128;
    let launches = s.sum_floor_term as u128;
    let device = s.t_device_active as u128;
    let path_significant = s.mean_dkt_fw > cfg.kappa * s.floor as f64;

    let evidence = |layer: Layer| {
        match layer {
        Layer::SoftwareStack => format!(
            "sum_dft + sum_dct = {} + {} = {software} ns vs sum_floor_term = {launches} ns; hdbi = {:.4}",
            s.sum_dft, s.sum_dct, s.hdbi
        ),
        Layer::LaunchCount => format!(
            "sum_floor_term = n_kernels * floor = {} * {} = {launches} ns vs sum_dft + sum_dct = {software} ns; kernels_per_token = {:.1}",
            s.n_kernels, s.floor, s.kernels_per_token
        ),
        Layer::LaunchPath => format!(
            "mean_dkt_fw = {:.1} ns > kappa * floor = {} * {} = {:.1} ns",
            s.mean_dkt_fw,
            cfg.kappa,
            s.floor,
            cfg.kappa * s.floor as f64
        ),
        Layer::DeviceWork => format!(
            "t_device_active = {device} ns vs t_orchestration = {} ns; hdbi = {:.4} > theta_high = {}",
            s.t_orchestration, s.hdbi, cfg.theta_high
        ),
    }
    };

    // stable sort keeps the listed order on ties
    let mut ranked: Vec<(Layer, u128)> = match regime {
        Regime::HostBound => vec![(Layer::SoftwareStack, software), (Layer::LaunchCount, launches)],
        Regime::Balanced => {
            vec![(Layer::SoftwareStack, software), (Layer::LaunchCount, launches), (Layer::DeviceWork, device)]
        }
        Regime::DeviceBound => vec![(Layer::DeviceWork, device)],
    };
    ranked.sort_by_key(|&(_, v)| std::cmp::Reverse(v));
    let mut layers: Vec<Layer> = ranked.into_iter().map(|(l, _)| l).collect();
    if path_significant {
        layers.push(Layer::LaunchPath);
    }

    let prescriptions: Vec<Prescription> = layers
        .iter()
        .map(|&layer| Prescription { layer, action: layer.action().to_string(), evidence: evidence(layer) })
        .collect();
    Diagnosis { regime, dominant_layer: layers[0], prescriptions, thresholds_used: *cfg }
}

impl Diagnosis {
    pub fn render_text(&self, s: &RunSummary) -> String {
        let mut out = String::new();
        let label = if s.workload_label.is_empty() { "run" } else { s.workload_label.as_str() };
        let _ = writeln!(
            out,
            "{label} on {} (BS={}, SL={}, {}):",
            s.platform_label, s.batch_size, s.sequence_length, s.phase
        );
        let _ = writeln!(
            out,
            "  regime {} (hdbi {:.4}; thresholds {} / {})",
            self.regime, s.hdbi, self.thresholds_used.theta_low, self.thresholds_used.theta_high
        );
        let _ = writeln!(
            out,
            "  orchestration {:.2} us, device active {:.2} us, {} kernels",
            s.t_orchestration as f64 / 1000.0,
            s.t_device_active as f64 / 1000.0,
            s.n_kernels
        );
        for (i, p) in self.prescriptions.iter().enumerate() {
            let _ = writeln!(out, "  {}. [{}] {}", i + 1, p.layer, p.action);
            let _ = writeln!(out, "     {}", p.evidence);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub workload_a: String,
    pub workload_b: String,
    pub platform_a: String,
    pub platform_b: String,
    pub mismatched_workload: bool,
    /// `(b - a) / a · 100`; negative means `b` is smaller.
    pub orchestration_delta_pct: f64,
    pub device_active_delta_pct: f64,
    pub e2e_delta_pct: f64,
    /// `(a - b) / a · 100` on wall clock; positive means `b` is faster.
    pub e2e_gain_pct: f64,
    pub baseline_hdbi: f64,
    pub regime_a: Regime,
}

fn delta_pct(a: u64, b: u64) -> f64 {
    if a == 0 {
        0.0
    } else {
        (b as f64 - a as f64) / a as f64 * 100.0
    }
}

pub fn compare_runs(a: &RunSummary, b: &RunSummary, cfg: &DiagnosisConfig) -> ComparisonReport {
    let mismatched = a.workload_label != b.workload_label;
    if mismatched {
        log::warn!("comparing different workloads: '{}' vs '{}'", a.workload_label, b.workload_label);
    }
    ComparisonReport {
        workload_a: a.workload_label.clone(),
        workload_b: b.workload_label.clone(),
        platform_a: a.platform_label.clone(),
        platform_b: b.platform_label.clone(),
        mismatched_workload: mismatched,
        orchestration_delta_pct: delta_pct(a.t_orchestration, b.t_orchestration),
        device_active_delta_pct: delta_pct(a.t_device_active, b.t_device_active),
        e2e_delta_pct: delta_pct(a.wall_clock_e2e, b.wall_clock_e2e),
        e2e_gain_pct: -delta_pct(a.wall_clock_e2e, b.wall_clock_e2e),
        baseline_hdbi: a.hdbi,
        regime_a: classify_regime(a.hdbi, cfg),
    }
}
