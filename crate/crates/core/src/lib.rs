//! Trace-driven decomposition of host-side LLM inference overhead.
//!
//! The analyzer consumes profiler traces of an eager-mode inference run and
//! splits the host cost of every kernel invocation into three parts:
//! framework translation (`dft`), vendor-library translation (`dct`) and the
//! launch-path floor (`dkt`). Run-level aggregates (orchestration time,
//! device-active time, the host/device balance index, idle fraction and
//! fragmentation metrics) feed a small rule engine that names the layer of
//! the stack worth optimizing.
//!
//! Pipeline overview:
//!
//! 1. [`import`] turns framework traces, profiler tables or canonical bundle
//!    files into a [`trace::TraceBundle`].
//! 2. [`trace::link_by_correlation`] pairs launches with kernels and attributes
//!    each launch to its enclosing framework operators.
//! 3. [`kernel_db`] deduplicates kernel signatures and classifies them.
//! 4. [`phase1`] extracts per-invocation Python dispatch time from the full
//!    model trace; [`phase2`] analyzes isolation replays and null-kernel runs.
//! 5. [`decompose`] combines both phases; [`diagnose`] prescribes.
//!
//! [`synth`] generates traces from injected ground truth so the whole chain
//! can be checked exactly without a GPU.

pub mod config;
pub mod decompose;
pub mod diagnose;
pub mod import;
pub mod kernel_db;
pub mod phase1;
pub mod phase2;
pub mod report;
pub mod stats;
pub mod synth;
pub mod trace;

/// Durations are integer nanoseconds throughout the crate.
pub type Nanos = u64;

pub use trace::{LinkedTrace, TraceBundle};
