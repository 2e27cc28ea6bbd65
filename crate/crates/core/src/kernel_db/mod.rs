//! Per-run kernel database.
//!
//! Every linked invocation maps to a [`KernelRecord`] keyed by a
//! [`DedupKey`] over (operator metadata, cleaned name, grid, block). The same
//! key indexes the persistent replay cache, so repeated analyses only replay
//! kernels they have not seen.

mod cache;
mod classify;
mod clean;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::trace::{Dim3, FrameworkOpEvent, LinkedTrace};

pub use cache::{CacheError, CacheStore, DedupCache, CACHE_VERSION};
pub use classify::{classify_family, FamilyPattern, KernelFamily, PatternConfig};
pub use clean::{clean_kernel_name, CLEANER_VERSION};

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub op_name: String,
    pub input_shapes: Vec<Vec<i64>>,
    pub dtypes: Vec<String>,
    pub scalar_args: Vec<(String, String)>,
}

impl OperatorMeta {
    pub fn from_op(op: &FrameworkOpEvent) -> Self {
        OperatorMeta {
            op_name: op.name.clone(),
            input_shapes: op.input_shapes.clone(),
            dtypes: op.dtypes.clone(),
            scalar_args: op.scalar_args.clone(),
        }
    }

    /// Deterministic text form hashed into the dedup key.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("operator metadata serializes")
    }
}

/// Hex digest identifying one replayable kernel signature.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DedupKey(pub String);

impl DedupKey {
    pub fn compute(meta: &OperatorMeta, cleaned_name: &str, grid: Dim3, block: Dim3) -> DedupKey {
        let mut h = Sha256::new();
        for part in [meta.canonical().as_str(), cleaned_name, &grid.to_string(), &block.to_string()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        DedupKey(hex::encode(&digest[..16]))
    }
}

impl fmt::Display for DedupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub key: DedupKey,
    pub cleaned_name: String,
    pub raw_name: String,
    pub grid: Dim3,
    pub block: Dim3,
    pub aten_meta: OperatorMeta,
    pub frequency: u64,
    pub lib_flag: bool,
    pub family: KernelFamily,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KernelDatabase {
    pub records: BTreeMap<DedupKey, KernelRecord>,
    /// Record key of each linked invocation, aligned with
    /// `LinkedTrace::launches`.
    pub invocation_keys: Vec<DedupKey>,
}

/// Which records still need an isolation replay.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReplayPartition {
    pub uncached: Vec<DedupKey>,
    pub cache_hits: Vec<DedupKey>,
}

pub fn build_kernel_db(trace: &LinkedTrace, patterns: &PatternConfig) -> KernelDatabase {
    let mut db = KernelDatabase::default();
    for launch in &trace.launches {
        let kernel = trace.kernel_of(launch);
        let cleaned = clean_kernel_name(&kernel.raw_name);
        let meta = trace
            .leaf_aten_op(launch)
            .or_else(|| launch.op_chain.first().copied())
            .map(|i| OperatorMeta::from_op(&trace.bundle.framework_ops[i]))
            .unwrap_or_default();
        let key = DedupKey::compute(&meta, &cleaned, kernel.grid, kernel.block);
        let evidence = patterns.has_frontend_evidence(trace, launch);
        let record = db.records.entry(key.clone()).or_insert_with(|| KernelRecord {
            key: key.clone(),
            lib_flag: patterns.name_is_library(&cleaned),
            family: patterns.classify_family(&cleaned),
            cleaned_name: cleaned,
            raw_name: kernel.raw_name.clone(),
            grid: kernel.grid,
            block: kernel.block,
            aten_meta: meta,
            frequency: 0,
        });
        record.frequency += 1;
        record.lib_flag |= evidence;
        db.invocation_keys.push(key);
    }
    db
}

impl KernelDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_frequency(&self) -> u64 {
        self.records.values().map(|r| r.frequency).sum()
    }

    pub fn unique_cleaned_names(&self) -> BTreeSet<&str> {
        self.records.values().map(|r| r.cleaned_name.as_str()).collect()
    }

    pub fn partition(&self, cache: &DedupCache) -> ReplayPartition {
        let mut p = ReplayPartition::default();
        for key in self.records.keys() {
            if cache.entries.contains_key(key) {
                p.cache_hits.push(key.clone());
            } else {
                p.uncached.push(key.clone());
            }
        }
        p
    }

    /// Records ordered by (family, cleaned name, frequency descending, key).
    pub fn ordered(&self) -> Vec<&KernelRecord> {
        let mut v: Vec<&KernelRecord> = self.records.values().collect();
        v.sort_by(|a, b| {
            (a.family, &a.cleaned_name, std::cmp::Reverse(a.frequency), &a.key).cmp(&(
                b.family,
                &b.cleaned_name,
                std::cmp::Reverse(b.frequency),
                &b.key,
            ))
        });
        v
    }

    /// Tab-separated export, one record per row.
    pub fn to_tsv(&self, cached: &BTreeSet<DedupKey>) -> String {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
        w.write_record([
            "key",
            "family",
            "cleaned_name",
            "raw_name",
            "grid",
            "block",
            "op_name",
            "input_shapes",
            "dtypes",
            "scalar_args",
            "frequency",
            "lib_flag",
            "cached",
        ])
        .expect("in-memory write");
        for r in self.ordered() {
            w.write_record([
                r.key.0.as_str(),
                r.family.as_str(),
                &r.cleaned_name,
                &r.raw_name,
                &r.grid.to_string(),
                &r.block.to_string(),
                &r.aten_meta.op_name,
                &serde_json::to_string(&r.aten_meta.input_shapes).unwrap(),
                &serde_json::to_string(&r.aten_meta.dtypes).unwrap(),
                &serde_json::to_string(&r.aten_meta.scalar_args).unwrap(),
                &r.frequency.to_string(),
                if r.lib_flag { "1" } else { "0" },
                if cached.contains(&r.key) { "1" } else { "0" },
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{link_by_correlation, DeviceKernelEvent, RunMetadata, RuntimeApiEvent, TraceBundle};

    fn trace_with(kernels: &[(&str, Dim3)]) -> LinkedTrace {
        let mut b = TraceBundle::new(RunMetadata::inferred(1));
        for (i, (name, block)) in kernels.iter().enumerate() {
            let t = i as u64 * 100;
            let mut op = FrameworkOpEvent::new("aten::mul", t, t + 50, 1);
            op.input_shapes = vec![vec![8, 8]];
            op.dtypes = vec!["float".into()];
            b.framework_ops.push(op);
            b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", t + 10, t + 20, 1, i as u64));
            let mut k = DeviceKernelEvent::new(*name, t + 30, t + 40, i as u64);
            k.block = *block;
            b.kernels.push(k);
        }
        link_by_correlation(&b).unwrap()
    }

    #[test]
    fn identical_invocations_share_a_record() {
        let t = trace_with(&[("k", Dim3(128, 1, 1)); 3]);
        let db = build_kernel_db(&t, &PatternConfig::default());
        assert_eq!(db.len(), 1);
        assert_eq!(db.records.values().next().unwrap().frequency, 3);
        assert_eq!(db.total_frequency(), 3);
    }

    #[test]
    fn launch_config_splits_records() {
        let t = trace_with(&[("k", Dim3(128, 1, 1)), ("k", Dim3(256, 1, 1))]);
        let db = build_kernel_db(&t, &PatternConfig::default());
        assert_eq!(db.len(), 2);
        assert_eq!(db.unique_cleaned_names().len(), 1);
    }

    #[test]
    fn dedup_key_depends_on_every_component() {
        let meta = OperatorMeta { op_name: "aten::mm".into(), ..Default::default() };
        let base = DedupKey::compute(&meta, "k", Dim3::ONE, Dim3::ONE);
        assert_eq!(base, DedupKey::compute(&meta.clone(), "k", Dim3::ONE, Dim3::ONE));
        let other_meta = OperatorMeta { dtypes: vec!["float".into()], ..meta.clone() };
        assert_ne!(base, DedupKey::compute(&other_meta, "k", Dim3::ONE, Dim3::ONE));
        assert_ne!(base, DedupKey::compute(&meta, "k2", Dim3::ONE, Dim3::ONE));
        assert_ne!(base, DedupKey::compute(&meta, "k", Dim3(2, 1, 1), Dim3::ONE));
        assert_ne!(base, DedupKey::compute(&meta, "k", Dim3::ONE, Dim3(2, 1, 1)));
    }

    #[test]
    fn frontend_interval_marks_library_kernel() {
        let mut b = TraceBundle::new(RunMetadata::inferred(1));
        b.framework_ops.push(FrameworkOpEvent::new("aten::addmm", 0, 100, 1));
        b.runtime_calls.push(RuntimeApiEvent::new("cublasLtMatmul", 5, 90, 1, 1));
        b.runtime_calls.push(RuntimeApiEvent::new("cudaLaunchKernel", 40, 50, 1, 2));
        b.kernels.push(DeviceKernelEvent::new("nvjet_tst_64x8", 60, 80, 2));
        let t = link_by_correlation(&b).unwrap();
        let db = build_kernel_db(&t, &PatternConfig::default());
        assert!(db.records.values().next().unwrap().lib_flag);

        let mut native = b.clone();
        native.runtime_calls.remove(0);
        let t = link_by_correlation(&native).unwrap();
        let db = build_kernel_db(&t, &PatternConfig::default());
        assert!(!db.records.values().next().unwrap().lib_flag);
    }

    #[test]
    fn tsv_export_is_ordered() {
        let t = trace_with(&[("b_reduce_kernel", Dim3::ONE), ("a_kernel", Dim3::ONE), ("a_kernel", Dim3::ONE)]);
        let db = build_kernel_db(&t, &PatternConfig::default());
        let tsv = db.to_tsv(&BTreeSet::new());
        let rows: Vec<&str> = tsv.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].contains("\treduce\tb_reduce_kernel\t"));
        assert!(rows[2].contains("\tother\ta_kernel\t"));
    }
}
