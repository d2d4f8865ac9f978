//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or format
//! error (including unreadable or malformed files).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{bench_kernel, with_threads, KernelKind, SweepRecord, CSV_HEADER};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::io::{qtensor_file_len, read_denm, read_qtensor, write_qtensor};
use crate::lut::{build_luts, lut_gemv, KernelConfig};
use crate::perf::memory_footprint;
use crate::quant::{quantization_error, quantize, QuantMethod};
use crate::reference::{bcq_gemv_naive, dequant_gemv};
use crate::rng::{gaussian_matrix, gaussian_vector, synthetic_bcq};

#[derive(Parser)]
#[command(
    name = "lutq",
    version,
    about = "Quantize weight matrices and run LUT-based quantized GEMV kernels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Quantize a dense matrix and write a LUTQ tensor file.
    Quantize(QuantizeArgs),
    /// Check a tensor file against the reference kernels.
    Verify(VerifyArgs),
    /// Time one kernel on a synthetic tensor; prints a CSV row.
    Bench(BenchArgs),
    /// Quantize and measure a full (bits x group) grid; prints CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rtn,
    Greedy,
    Alternating,
}

impl MethodArg {
    fn to_method(self, iters: usize) -> QuantMethod {
        match self {
            Self::Rtn => QuantMethod::RtnUniform,
            Self::Greedy => QuantMethod::BcqGreedy,
            Self::Alternating => QuantMethod::BcqAlternating { iters },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Lut,
    Dequant,
    Dense,
    Naive,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Lut => KernelKind::Lut,
            KernelArg::Dequant => KernelKind::Dequant,
            KernelArg::Dense => KernelKind::Dense,
            KernelArg::Naive => KernelKind::Naive,
        }
    }
}

#[derive(Args)]
pub struct QuantizeArgs {
    /// Input dense matrix (DENM file).
    #[arg(long = "in", value_name = "FILE", conflicts_with = "random",
          required_unless_present = "random")]
    pub input: Option<PathBuf>,
    /// Synthetic Gaussian input: M N SEED.
    #[arg(long, num_args = 3, value_names = ["M", "N", "SEED"])]
    pub random: Option<Vec<u64>>,
    /// Quantization bits per weight.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub bits: u8,
    /// Columns per scaling group; 0 = row-wise.
    #[arg(long, default_value_t = 0)]
    pub group_size: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    pub method: MethodArg,
    /// Refinement iterations (alternating method only).
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    /// Output tensor file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Tensor file to check.
    #[arg(long, value_name = "FILE")]
    pub qtensor: PathBuf,
    /// Random activation vectors to test.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: u32,
    /// Sub-vector length for the table kernel.
    #[arg(long, default_value_t = 8)]
    pub mu: usize,
    /// Seed for the activation vectors.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub bits: u8,
    #[arg(long, default_value_t = 0)]
    pub group_size: usize,
    #[arg(long, default_value_t = 8)]
    pub mu: usize,
    /// Worker threads; 0 = one per logical CPU.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    /// Timed repetitions.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    /// Untimed warmup repetitions.
    #[arg(long, default_value_t = 3)]
    pub warmup: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Comma-separated bit widths, e.g. 1,2,3,4.
    #[arg(long = "bits-list", value_delimiter = ',', required = true,
          value_parser = clap::value_parser!(u8).range(1..=8))]
    pub bits_list: Vec<u8>,
    /// Comma-separated group sizes (0 = row-wise).
    #[arg(long = "group-list", value_delimiter = ',', required = true)]
    pub group_list: Vec<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub mu: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    #[arg(long, default_value_t = 2)]
    pub warmup: u32,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// CSV output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Parse argv and dispatch. Returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Quantize(args) => cmd_quantize(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_or_generate(input: &Option<PathBuf>, random: &Option<Vec<u64>>) -> Result<DenseMatrix> {
    match (input, random) {
        (Some(path), None) => read_denm(path),
        (None, Some(spec)) => {
            let (m, n, seed) = (spec[0] as usize, spec[1] as usize, spec[2]);
            if m == 0 || n == 0 {
                return Err(Error::InvalidArgument("--random dimensions must be positive".into()));
            }
            Ok(gaussian_matrix(m, n, seed))
        }
        _ => Err(Error::InvalidArgument("exactly one of --in or --random is required".into())),
    }
}

pub fn cmd_quantize(args: &QuantizeArgs) -> Result<i32> {
    let w = load_or_generate(&args.input, &args.random)?;
    let method = args.method.to_method(args.iters);
    let t = quantize(&w, method, args.bits as usize, args.group_size)?;
    write_qtensor(&args.out, &t)?;
    let err = quantization_error(&w, &t)?;
    let fp = memory_footprint(w.rows(), w.cols(), args.bits as usize, args.group_size, t.has_bias())?;
    let report = serde_json::json!({
        "rows": w.rows(),
        "cols": w.cols(),
        "bits": args.bits,
        "group_size": args.group_size,
        "method": method.to_string(),
        "bias": t.has_bias(),
        "error": {
            "mse": err.mse,
            "rel_fro": err.rel_fro,
            "max_abs": err.max_abs,
        },
        "footprint": {
            "binary_bits": fp.binary_bits,
            "scale_bits": fp.scale_bits,
            "total_bits": fp.total_bits,
            "bytes": fp.bytes,
            "compression_ratio": fp.compression_ratio,
            "asymptotic_ratio": fp.asymptotic_ratio,
            "as_built_bytes": fp.as_built_bytes,
        },
        "file": args.out.display().to_string(),
        "file_bytes": qtensor_file_len(w.rows(), w.cols(), args.bits as usize,
                                        args.group_size, t.has_bias()),
    });
    println!("{report:#}");
    Ok(0)
}

/// Vector-level relative deviation: max |a - b| over max |b|.
fn max_rel_deviation(a: &[f32], b: &[f32]) -> f64 {
    let mut max_diff = 0f64;
    let mut max_ref = 0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        max_diff = max_diff.max((*x as f64 - *y as f64).abs());
        max_ref = max_ref.max((*y as f64).abs());
    }
    max_diff / max_ref.max(f64::MIN_POSITIVE)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let t = read_qtensor(&args.qtensor)?;
    let cfg = KernelConfig::with_mu(args.mu);
    let mut max_dequant_rel = 0f64;
    for trial in 0..args.trials as u64 {
        let x = gaussian_vector(t.cols(), args.seed.wrapping_add(trial));
        let bank = build_luts(&x, args.mu)?;
        let y_lut = lut_gemv(&t, &bank, &cfg)?;
        let y_naive = bcq_gemv_naive(&t, &x, args.mu)?;
        for (i, (a, b)) in y_lut.as_slice().iter().zip(y_naive.as_slice()).enumerate() {
            if a.to_bits() != b.to_bits() {
                println!(
                    "FAIL trial {trial} (seed {}): row {i}: lut {a} != naive {b}",
                    args.seed.wrapping_add(trial)
                );
                return Ok(1);
            }
        }
        let y_deq = dequant_gemv(&t, &x)?;
        let rel = max_rel_deviation(y_lut.as_slice(), y_deq.as_slice());
        max_dequant_rel = max_dequant_rel.max(rel);
        if rel > 1e-4 {
            println!(
                "FAIL trial {trial} (seed {}): relative deviation {rel:.3e} vs dequant kernel",
                args.seed.wrapping_add(trial)
            );
            return Ok(1);
        }
    }
    println!(
        "ok: {} trials; lut == naive bit-identically; max relative deviation vs dequant {max_dequant_rel:.3e}",
        args.trials
    );
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    if args.m == 0 || args.n == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let t = synthetic_bcq(args.m, args.n, args.bits as usize, args.group_size, false, args.seed);
    let x = gaussian_vector(args.n, args.seed.wrapping_add(1));
    let cfg = KernelConfig::with_mu(args.mu);
    let kernel: KernelKind = args.kernel.into();
    let stats = with_threads(args.threads, || {
        bench_kernel(&t, &x, kernel, &cfg, args.reps as usize, args.warmup as usize)
    })??;
    let fp = memory_footprint(args.m, args.n, args.bits as usize, args.group_size, false)?;
    let rec = SweepRecord {
        q: args.bits as usize,
        g: args.group_size,
        mu: args.mu,
        method: "synthetic".into(),
        kernel: kernel.to_string(),
        footprint_bits: fp.total_bits,
        as_built_bytes: fp.as_built_bytes,
        compression_ratio: fp.compression_ratio,
        rel_fro_error: None,
        median_latency_ns: stats.median_ns,
        p10_latency_ns: stats.p10_ns,
        p90_latency_ns: stats.p90_ns,
    };
    println!("{CSV_HEADER}");
    println!("{}", rec.to_csv_row());
    Ok(0)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    if args.m == 0 || args.n == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if args.bits_list.is_empty() || args.group_list.is_empty() {
        return Err(Error::InvalidArgument("bit and group lists must be non-empty".into()));
    }
    let w = gaussian_matrix(args.m, args.n, args.seed);
    let x = gaussian_vector(args.n, args.seed.wrapping_add(1));
    let cfg = KernelConfig::with_mu(args.mu);
    let mut records = Vec::new();
    with_threads(args.threads, || -> Result<()> {
        for &bits in &args.bits_list {
            for &g in &args.group_list {
                let method = args.method.to_method(args.iters);
                let t = quantize(&w, method, bits as usize, g)?;
                let err = quantization_error(&w, &t)?;
                let fp = memory_footprint(args.m, args.n, bits as usize, g, t.has_bias())?;
                let stats = bench_kernel(
                    &t,
                    &x,
                    KernelKind::Lut,
                    &cfg,
                    args.reps as usize,
                    args.warmup as usize,
                )?;
                records.push(SweepRecord {
                    q: bits as usize,
                    g,
                    mu: args.mu,
                    method: method.to_string(),
                    kernel: "lut".into(),
                    footprint_bits: fp.total_bits,
                    as_built_bytes: fp.as_built_bytes,
                    compression_ratio: fp.compression_ratio,
                    rel_fro_error: Some(err.rel_fro),
                    median_latency_ns: stats.median_ns,
                    p10_latency_ns: stats.p10_ns,
                    p90_latency_ns: stats.p90_ns,
                });
            }
        }
        Ok(())
    })??;
    records.sort_by(|a, b| a.compression_ratio.total_cmp(&b.compression_ratio));
    let mut out = String::with_capacity(records.len() * 96 + CSV_HEADER.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(0)
}
