//! Kernel family and library classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::clean_kernel_name;
use crate::trace::{LinkedLaunch, LinkedTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ScanPrefix,
    ElementwiseUnroll,
    ElementwiseVector,
    ElementwiseGeneric,
    Reduce,
    GemmNvjet,
    GemmCublas,
    Memops,
    Other,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 9] = [
        KernelFamily::ScanPrefix,
        KernelFamily::ElementwiseUnroll,
        KernelFamily::ElementwiseVector,
        KernelFamily::ElementwiseGeneric,
        KernelFamily::Reduce,
        KernelFamily::GemmNvjet,
        KernelFamily::GemmCublas,
        KernelFamily::Memops,
        KernelFamily::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::ScanPrefix => "scan_prefix",
            KernelFamily::ElementwiseUnroll => "elementwise_unroll",
            KernelFamily::ElementwiseVector => "elementwise_vector",
            KernelFamily::ElementwiseGeneric => "elementwise_generic",
            KernelFamily::Reduce => "reduce",
            KernelFamily::GemmNvjet => "gemm_nvjet",
            KernelFamily::GemmCublas => "gemm_cublas",
            KernelFamily::Memops => "memops",
            KernelFamily::Other => "other",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyPattern {
    pub family: KernelFamily,
    /// Lowercase substrings; any hit selects the family.
    pub contains: Vec<String>,
}

/// Ordered pattern table for family classification plus the pattern sets
/// that decide whether a kernel is library-mediated.
///
/// The file form is JSON with the same field names; missing fields take the
/// built-in defaults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternConfig {
    pub version: String,
    /// First matching entry wins; unmatched names are `other`.
    pub families: Vec<FamilyPattern>,
    /// Cleaned-name substrings of vendor-library kernels.
    pub library_name_patterns: Vec<String>,
    /// Substrings of host-side library front-end intervals (runtime calls or
    /// NVTX ranges enclosing the launch).
    pub library_frontend_markers: Vec<String>,
}

impl Default for PatternConfig {
    fn default() -> Self {
        let fam =
            |family, pats: &[&str]| FamilyPattern { family, contains: pats.iter().map(|s| s.to_string()).collect() };
        PatternConfig {
            version: "classifier/1".into(),
            families: vec![
                fam(KernelFamily::Memops, &["memcpy", "memset"]),
                fam(KernelFamily::ScanPrefix, &["scan", "prefix", "cumsum"]),
                fam(KernelFamily::Reduce, &["reduce", "softmax", "argmax", "argmin"]),
                fam(KernelFamily::GemmNvjet, &["nvjet", "gemv2t", "gemv2n"]),
                fam(KernelFamily::GemmCublas, &["cublas", "xmma", "cutlass", "gemm", "gemv"]),
                fam(KernelFamily::ElementwiseUnroll, &["unrolled_elementwise"]),
                fam(KernelFamily::ElementwiseVector, &["vectorized"]),
                fam(KernelFamily::ElementwiseGeneric, &["elementwise"]),
            ],
            library_name_patterns: ["cublas", "cudnn", "xmma", "cusparse", "cufft"].map(String::from).to_vec(),
            library_frontend_markers: ["cublas", "cudnn", "cusparse", "cufft"].map(String::from).to_vec(),
        }
    }
}

impl PatternConfig {
    /// Family of a kernel name. Raw names are cleaned first, so classifying
    /// a raw name and its cleaned form always agree.
    pub fn classify_family(&self, name: &str) -> KernelFamily {
        let cleaned = clean_kernel_name(name);
        self.families
            .iter()
            .find(|f| f.contains.iter().any(|p| cleaned.contains(p.as_str())))
            .map(|f| f.family)
            .unwrap_or(KernelFamily::Other)
    }

    pub fn name_is_library(&self, cleaned_name: &str) -> bool {
        self.library_name_patterns.iter().any(|p| cleaned_name.contains(p.as_str()))
    }

    /// Whether the host-side chain around `launch` contains a library
    /// front-end interval.
    pub fn has_frontend_evidence(&self, trace: &LinkedTrace, launch: &LinkedLaunch) -> bool {
        let hit = |s: &str| {
            let lower = s.to_ascii_lowercase();
            self.library_frontend_markers.iter().any(|m| lower.contains(m.as_str()))
        };
        launch.call_chain.iter().any(|&i| hit(&trace.bundle.runtime_calls[i].api_name))
            || launch.nvtx_chain.iter().any(|&i| hit(&trace.bundle.nvtx_ranges[i].label))
    }
}

pub fn classify_family(name: &str) -> KernelFamily {
    PatternConfig::default().classify_family(name)
}
