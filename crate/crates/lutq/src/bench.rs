//! Latency measurement and sweep records.

use std::time::Instant;

use crate::bcq::BcqTensor;
use crate::dense::DenseVector;
use crate::error::{Error, Result};
use crate::lut::{build_luts, lut_gemv, KernelConfig};
use crate::reference::{bcq_gemv_naive, dense_gemv, dequant_gemv};

/// Kernels the bench harness can time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Table-based quantized GEMV (table build included in the timing,
    /// matching the cost model's build + read accounting).
    Lut,
    /// Dequantize-then-GEMV baseline.
    Dequant,
    /// Dense GEMV on a pre-materialized matrix.
    Dense,
    /// Per-bit sign/add oracle.
    Naive,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Lut => "lut",
            Self::Dequant => "dequant",
            Self::Dense => "dense",
            Self::Naive => "naive",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lut" => Ok(Self::Lut),
            "dequant" => Ok(Self::Dequant),
            "dense" => Ok(Self::Dense),
            "naive" => Ok(Self::Naive),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Latency percentiles over the timed repetitions, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyStats {
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
}

fn percentile(sorted: &[u64], p: usize) -> u64 {
    let idx = (p * sorted.len() / 100).min(sorted.len() - 1);
    sorted[idx]
}

/// Run `warmup` untimed and `reps` timed invocations; report median and
/// p10/p90 (nearest rank). Latencies are clamped to at least 1 ns.
pub fn measure_latency(reps: usize, warmup: usize, mut f: impl FnMut()) -> Result<LatencyStats> {
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one timed repetition required".into()));
    }
    for _ in 0..warmup {
        f();
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f();
        samples.push((start.elapsed().as_nanos() as u64).max(1));
    }
    samples.sort_unstable();
    Ok(LatencyStats {
        median_ns: percentile(&samples, 50),
        p10_ns: percentile(&samples, 10),
        p90_ns: percentile(&samples, 90),
    })
}

/// Run `f` inside a dedicated rayon pool of `threads` workers
/// (0 = current pool). Building a pool costs far more than one kernel
/// call, so benchmarks install the pool once around their rep loop.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Refuse dense materialization beyond this size; the other kernels
/// never expand the weights.
const MAX_DENSE_BYTES: u64 = 2 << 30;

/// Time one kernel. For `Dense` the matrix is materialized before the
/// clock starts; for `Lut` every repetition rebuilds the table bank so
/// timings include construction.
pub fn bench_kernel(
    t: &BcqTensor,
    x: &DenseVector,
    kernel: KernelKind,
    cfg: &KernelConfig,
    reps: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    match kernel {
        KernelKind::Lut => measure_latency(reps, warmup, || {
            let bank = build_luts(x, cfg.mu).expect("bench inputs validated");
            std::hint::black_box(lut_gemv(t, &bank, cfg).expect("bench inputs validated"));
        }),
        KernelKind::Dequant => measure_latency(reps, warmup, || {
            std::hint::black_box(dequant_gemv(t, x).expect("bench inputs validated"));
        }),
        KernelKind::Naive => measure_latency(reps, warmup, || {
            std::hint::black_box(bcq_gemv_naive(t, x, cfg.mu).expect("bench inputs validated"));
        }),
        KernelKind::Dense => {
            let bytes = t.rows() as u64 * t.cols() as u64 * 4;
            if bytes > MAX_DENSE_BYTES {
                return Err(Error::InvalidArgument(format!(
                    "dense kernel would materialize {bytes} bytes; refusing (limit {MAX_DENSE_BYTES})"
                )));
            }
            let w = t.dequantize();
            measure_latency(reps, warmup, || {
                std::hint::black_box(dense_gemv(&w, x).expect("bench inputs validated"));
            })
        }
    }
}

/// One measurement row of a benchmark or sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub q: usize,
    pub g: usize,
    pub mu: usize,
    pub method: String,
    pub kernel: String,
    /// Footprint in model bits (16-bit scale accounting).
    pub footprint_bits: u64,
    /// Bytes of the as-built representation.
    pub as_built_bytes: u64,
    pub compression_ratio: f64,
    /// Reconstruction error; absent when no reference matrix exists.
    pub rel_fro_error: Option<f32>,
    pub median_latency_ns: u64,
    pub p10_latency_ns: u64,
    pub p90_latency_ns: u64,
}

pub const CSV_HEADER: &str = "q,g,mu,method,kernel,footprint_bits,as_built_bytes,\
compression_ratio,rel_fro_error,median_latency_ns,p10_latency_ns,p90_latency_ns";

impl SweepRecord {
    pub fn to_csv_row(&self) -> String {
        let rel = match self.rel_fro_error {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.q,
            self.g,
            self.mu,
            self.method,
            self.kernel,
            self.footprint_bits,
            self.as_built_bytes,
            self.compression_ratio,
            rel,
            self.median_latency_ns,
            self.p10_latency_ns,
            self.p90_latency_ns
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vector, synthetic_bcq};

    #[test]
    fn zero_reps_is_an_error() {
        assert!(measure_latency(0, 0, || {}).is_err());
    }

    #[test]
    fn latencies_positive_and_ordered() {
        let stats = measure_latency(9, 1, || {
            std::hint::black_box((0..500).sum::<u64>());
        })
        .unwrap();
        assert!(stats.p10_ns >= 1);
        assert!(stats.p10_ns <= stats.median_ns);
        assert!(stats.median_ns <= stats.p90_ns);
    }

    #[test]
    fn bench_runs_every_kernel() {
        let t = synthetic_bcq(24, 64, 2, 16, false, 5);
        let x = gaussian_vector(64, 6);
        let cfg = KernelConfig::with_mu(8);
        for kernel in [KernelKind::Lut, KernelKind::Dequant, KernelKind::Dense, KernelKind::Naive]
        {
            let stats = bench_kernel(&t, &x, kernel, &cfg, 3, 1).unwrap();
            assert!(stats.median_ns >= 1, "{kernel}");
        }
    }

    #[test]
    fn csv_row_field_count_matches_header() {
        let rec = SweepRecord {
            q: 3,
            g: 128,
            mu: 8,
            method: "greedy".into(),
            kernel: "lut".into(),
            footprint_bits: 123,
            as_built_bytes: 456,
            compression_ratio: 5.33,
            rel_fro_error: None,
            median_latency_ns: 10,
            p10_latency_ns: 9,
            p90_latency_ns: 11,
        };
        assert_eq!(
            rec.to_csv_row().split(',').count(),
            CSV_HEADER.split(',').count()
        );
    }
}
