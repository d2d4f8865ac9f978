//! Lookup-table GEMV over binary-coding-quantized weights.
//!
//! Weight matrices are stored as a small number of packed ±1 bit planes
//! with group-wise scaling factors (and an optional bias that makes
//! asymmetric uniform quantization exactly representable). Matrix-vector
//! products are then computed without dequantizing: all 2^mu signed
//! combinations of each length-mu activation sub-vector are tabulated
//! once, and plane bits become table keys.
//!
//! The crate provides:
//!
//! * [`bcq`] — the quantized tensor type, bit-plane packing, and
//!   dequantization;
//! * [`quant`] — round-to-nearest uniform quantization plus its exact
//!   conversion to sign planes, greedy fitting, and alternating
//!   least-squares refinement;
//! * [`lut`] — table construction and the tiled, multi-threaded,
//!   bit-reproducible GEMV kernel;
//! * [`reference`] — dense, dequantize-then-multiply, and naive per-bit
//!   kernels used as baselines and oracles;
//! * [`perf`] — analytic footprint/cost models and compression ratios;
//! * [`bench`] — latency harness and CSV sweep records;
//! * [`io`] — the `LUTQ` tensor file format and `DENM` dense matrices;
//! * [`cli`] — the `lutq` binary's subcommands
//!   (`quantize`, `verify`, `bench`, `sweep`).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability.

pub mod bcq;
pub mod bench;
pub mod cli;
pub mod dense;
pub mod error;
pub mod io;
pub mod lut;
pub mod perf;
pub mod quant;
pub mod reference;
pub mod rng;

pub use bcq::{pack_planes, unpack_planes, BcqTensor};
pub use dense::{DenseMatrix, DenseVector};
pub use error::{Error, Result};
pub use lut::{
    build_luts, lut_gemv, lut_gemv_into, lut_gemv_with_stats, op_counts, KernelConfig,
    KernelStats, LutBank, OpCounts,
};
pub use perf::{cost_model, memory_footprint, CostReport, FootprintReport};
pub use quant::{
    quantization_error, quantize, quantize_bcq_alternating, quantize_bcq_greedy, quantize_rtn,
    uniform_to_bcq, ErrorReport, QuantMethod, UniformQuant,
};
pub use reference::{bcq_gemv_naive, dense_gemv, dequant_gemv};
