//! Named specs: a GPT-2-shaped prefill run at any batch size, a dense
//! decode run and an MoE decode run, plus randomized small specs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{apportion, NoiseSpec, NsRange, RecordSpec, SynthError, SynthSpec};
use crate::kernel_db::KernelFamily;
use crate::trace::{Phase, RunMetadata};
use crate::Nanos;

pub const PRESET_NAMES: [&str; 4] = ["gpt2", "gpt2-bs16", "dense", "moe"];

pub fn preset(name: &str, seed: u64) -> Result<SynthSpec, SynthError> {
    let mut spec = match name {
        "gpt2" => gpt2(1),
        "gpt2-bs16" => gpt2(16),
        "dense" => dense(),
        "moe" => moe(),
        other => return Err(SynthError::UnknownPreset(other.into())),
    };
    spec.seed = seed;
    Ok(spec)
}

/// A cleaned name that the default classifier puts in `family`.
pub fn kernel_name(family: KernelFamily, lib: bool, i: usize) -> String {
    match family {
        KernelFamily::ScanPrefix => format!("cub_device_scan_kernel_{i}"),
        KernelFamily::ElementwiseUnroll => format!("unrolled_elementwise_kernel_{i}"),
        KernelFamily::ElementwiseVector => format!("vectorized_elementwise_kernel_{i}"),
        KernelFamily::ElementwiseGeneric => format!("elementwise_kernel_{i}"),
        KernelFamily::Reduce => format!("reduce_kernel_{i}"),
        KernelFamily::GemmNvjet => format!("nvjet_tst_{i}_128x64_v_bz"),
        KernelFamily::GemmCublas if lib => format!("sm90_xmma_gemm_f16f16_{i}"),
        KernelFamily::GemmCublas => format!("triton_gemm_{i}"),
        KernelFamily::Memops => format!("memset_kernel_{i}"),
        KernelFamily::Other => format!("fused_custom_kernel_{i}"),
    }
}

fn op_name(family: KernelFamily) -> &'static str {
    match family {
        KernelFamily::ScanPrefix => "aten::cumsum",
        KernelFamily::ElementwiseUnroll => "aten::add",
        KernelFamily::ElementwiseVector => "aten::mul",
        KernelFamily::ElementwiseGeneric => "aten::copy_",
        KernelFamily::Reduce => "aten::sum",
        KernelFamily::GemmNvjet => "aten::addmm",
        KernelFamily::GemmCublas => "aten::mm",
        KernelFamily::Memops => "aten::fill_",
        KernelFamily::Other => "aten::_fused_op",
    }
}

/// Launch excess over the floor by family, in the shape of the per-family
/// launch-latency table.
fn launch_excess(family: KernelFamily) -> Nanos {
    match family {
        KernelFamily::ScanPrefix => 320,
        KernelFamily::ElementwiseUnroll => 360,
        KernelFamily::ElementwiseVector => 380,
        KernelFamily::Reduce => 550,
        KernelFamily::ElementwiseGeneric => 560,
        KernelFamily::GemmNvjet => 1_180,
        KernelFamily::GemmCublas => 1_880,
        KernelFamily::Memops => 300,
        KernelFamily::Other => 400,
    }
}

/// Frequencies summing to `total`, at least one each, with a fixed uneven
/// profile.
fn frequencies(total: u64, n: usize) -> Vec<u64> {
    let weights: Vec<u64> = (0..n as u64).map(|k| 1 + (k * 37) % 23).collect();
    apportion(total - n as u64, &weights).into_iter().map(|f| f + 1).collect()
}

struct Mix {
    families: Vec<(KernelFamily, bool)>,
}

impl Mix {
    fn of(counts: &[(KernelFamily, bool, usize)]) -> Self {
        Mix { families: counts.iter().flat_map(|&(f, lib, n)| std::iter::repeat_n((f, lib), n)).collect() }
    }
}

fn metadata(workload: &str, platform: &str, gpu: &str, bs: u32, sl: u32, phase: Phase, m: u32) -> RunMetadata {
    RunMetadata {
        workload_label: workload.into(),
        platform_label: platform.into(),
        gpu_label: gpu.into(),
        cpu_label: "synthetic".into(),
        batch_size: bs,
        sequence_length: sl,
        phase,
        output_tokens: m,
        warmup_runs: 0,
        measured_runs: 1,
        wall_clock_e2e: 0,
    }
}

/// GPT-2-shaped prefill at batch size `bs`: 376 launches at BS=1 growing to
/// 394 at BS=16, all framework-native, dispatch baseline 7686 ns, floor
/// 4503 ns, T_Py 0.50 to 0.68 ms and device-active 1.66 to 15.43 ms.
/// Other batch sizes interpolate linearly.
pub fn gpt2(bs: u32) -> SynthSpec {
    let bs = bs.max(1);
    let step = (bs - 1) as u64;
    let n = 376 + (18 * step + 7) / 15;
    let t_py_total = 500_000 + 12_000 * step;
    let device_total = 1_660_000 + (13_770_000 * step) / 15;
    let mix = Mix::of(&[
        (KernelFamily::GemmNvjet, false, 4),
        (KernelFamily::ElementwiseVector, false, 5),
        (KernelFamily::ElementwiseUnroll, false, 3),
        (KernelFamily::ElementwiseGeneric, false, 3),
        (KernelFamily::Reduce, false, 4),
        (KernelFamily::ScanPrefix, false, 1),
        (KernelFamily::Memops, false, 1),
    ]);
    let floor = 4_503;
    let count = mix.families.len();
    let freqs = frequencies(n, count);
    let records = mix
        .families
        .iter()
        .enumerate()
        .map(|(k, &(family, lib))| RecordSpec {
            cleaned_name: kernel_name(family, lib, k),
            family,
            lib_flag: lib,
            frequency: freqs[k],
            op_name: op_name(family).into(),
            t_py: NsRange { lo: 600, hi: 2_000 },
            // symmetric around the middle record, so the median is exact
            dispatch: (7_686 + 40 * k as i64 - 40 * (count as i64 / 2)) as Nanos,
            launch: floor + launch_excess(family),
            kernel_duration: NsRange { lo: 1_000, hi: 8_000 },
        })
        .collect();
    SynthSpec {
        seed: 0,
        metadata: metadata("gpt2", "h200", "H200", bs, 512, Phase::Prefill, 1),
        floor,
        floor_samples: None,
        warmup_runs: 50,
        measured_runs: 150,
        records,
        t_py_total: Some(t_py_total),
        device_active_total: Some(device_total),
        noise: None,
        profiled_iterations: 1,
    }
}

/// Device-active total shared by the dense and MoE presets.
pub const DECODE_DEVICE_ACTIVE: Nanos = 60_000_000;

fn decode_spec(workload: &str, mix: Mix, total: u64) -> SynthSpec {
    let floor = 4_707;
    let freqs = frequencies(total, mix.families.len());
    let records = mix
        .families
        .iter()
        .enumerate()
        .map(|(k, &(family, lib))| {
            let kk = k as u64;
            RecordSpec {
                cleaned_name: kernel_name(family, lib, k),
                family,
                lib_flag: lib,
                frequency: freqs[k],
                op_name: op_name(family).into(),
                t_py: NsRange { lo: 200, hi: 2_000 },
                dispatch: if lib { 12_000 + (kk * 97) % 3_000 } else { 7_000 + (kk * 131) % 2_001 },
                launch: floor + launch_excess(family),
                kernel_duration: NsRange { lo: 2_000, hi: 20_000 },
            }
        })
        .collect();
    SynthSpec {
        seed: 0,
        metadata: metadata(workload, "h100", "H100", 4, 2048, Phase::Decode, 10),
        floor,
        floor_samples: None,
        warmup_runs: 10,
        measured_runs: 30,
        records,
        t_py_total: None,
        device_active_total: Some(DECODE_DEVICE_ACTIVE),
        noise: None,
        profiled_iterations: 1,
    }
}

/// Dense decoder decode: 77 kernel names, 8475 launches over m = 10 tokens.
pub fn dense() -> SynthSpec {
    let mix = Mix::of(&[
        (KernelFamily::GemmNvjet, false, 8),
        (KernelFamily::GemmCublas, true, 6),
        (KernelFamily::ElementwiseVector, false, 15),
        (KernelFamily::ElementwiseUnroll, false, 12),
        (KernelFamily::ElementwiseGeneric, false, 12),
        (KernelFamily::Reduce, false, 10),
        (KernelFamily::ScanPrefix, false, 4),
        (KernelFamily::Memops, false, 4),
        (KernelFamily::Other, false, 6),
    ]);
    decode_spec("dense", mix, 8_475)
}

/// MoE decode: 222 kernel names, 93053 launches over m = 10 tokens.
pub fn moe() -> SynthSpec {
    let mix = Mix::of(&[
        (KernelFamily::GemmNvjet, false, 20),
        (KernelFamily::GemmCublas, true, 30),
        (KernelFamily::ElementwiseVector, false, 40),
        (KernelFamily::ElementwiseUnroll, false, 35),
        (KernelFamily::ElementwiseGeneric, false, 35),
        (KernelFamily::Reduce, false, 30),
        (KernelFamily::ScanPrefix, false, 12),
        (KernelFamily::Memops, false, 8),
        (KernelFamily::Other, false, 12),
    ]);
    decode_spec("moe", mix, 93_053)
}

/// A small random spec with at most `max_n` invocations per iteration.
pub fn random(seed: u64, max_n: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let n_records = rng.gen_range(1..=12usize).min(max_n as usize);
    let n = rng.gen_range(n_records as u64..=max_n.max(n_records as u64));
    let floor = rng.gen_range(3_000..6_000);
    let freqs = apportion(n - n_records as u64, &(0..n_records).map(|_| rng.gen_range(0..10)).collect::<Vec<_>>());
    let native_at = rng.gen_range(0..n_records);
    let records = (0..n_records)
        .map(|k| {
            let family = KernelFamily::ALL[rng.gen_range(0..KernelFamily::ALL.len())];
            let lib = k != native_at && rng.gen_bool(0.3);
            let lo = rng.gen_range(0..3_000);
            let d_lo = rng.gen_range(1..20_000);
            RecordSpec {
                cleaned_name: kernel_name(family, lib, k),
                family,
                lib_flag: lib,
                frequency: freqs[k] + 1,
                op_name: op_name(family).into(),
                t_py: NsRange { lo, hi: lo + rng.gen_range(0..2_000) },
                dispatch: rng.gen_range(200..20_000),
                launch: rng.gen_range(1_000..10_000),
                kernel_duration: NsRange { lo: d_lo, hi: d_lo + rng.gen_range(0..50_000) },
            }
        })
        .collect();
    let decode = rng.gen_bool(0.5);
    let m = if decode { rng.gen_range(1..=16) } else { 1 };
    let phase = if decode { Phase::Decode } else { Phase::Prefill };
    let t_py_total = rng.gen_bool(0.3).then(|| rng.gen_range(0..2_000_000));
    let device_active_total = rng.gen_bool(0.3).then(|| rng.gen_range(n..50_000_000));
    let floor_samples =
        rng.gen_bool(0.3).then(|| (0..rng.gen_range(10..20)).map(|_| floor + rng.gen_range(0..500)).collect());
    SynthSpec {
        seed,
        metadata: metadata("random", "synthetic", "none", rng.gen_range(1..=32), rng.gen_range(1..=4096), phase, m),
        floor,
        floor_samples,
        warmup_runs: rng.gen_range(0..=3),
        measured_runs: rng.gen_range(1..=6),
        records,
        t_py_total,
        device_active_total,
        noise: None,
        profiled_iterations: rng.gen_range(1..=3),
    }
}

/// [`random`] with launch-gap jitter switched on.
pub fn random_noisy(seed: u64, max_n: u64, jitter: Nanos) -> SynthSpec {
    let mut spec = random(seed, max_n);
    spec.measured_runs = spec.measured_runs.max(30);
    spec.noise = Some(NoiseSpec { jitter });
    spec
}
