//! Seeded random generators for synthetic inputs.
//!
//! Everything here is built on a splitmix-style 64-bit state so that
//! sweeps and tests reproduce bit-for-bit across platforms. Normal
//! variates are drawn as a sum of twelve uniforms (Irwin-Hall) rather
//! than Box-Muller: the sum uses only IEEE arithmetic, so the stream is
//! identical on any conforming platform.

use crate::bcq::BcqTensor;
use crate::dense::{DenseMatrix, DenseVector};

/// Splitmix64 generator. Small, fast, and good enough for synthetic
/// weight matrices and activation vectors.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Modulo bias is irrelevant for test-fixture bounds (<< 2^64).
        self.next_u64() % bound
    }

    /// Standard normal variate via the Irwin-Hall sum of 12 uniforms.
    /// Bounded to [-6, 6]; exact-arithmetic only, so platform-stable.
    pub fn next_gaussian(&mut self) -> f64 {
        let mut acc = 0.0f64;
        for _ in 0..12 {
            acc += self.next_unit();
        }
        acc - 6.0
    }

    pub fn next_gaussian_f32(&mut self) -> f32 {
        self.next_gaussian() as f32
    }
}

/// Row-major matrix of standard-normal entries.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = SplitMix64::new(seed);
    let data: Vec<f32> = (0..rows * cols).map(|_| rng.next_gaussian_f32()).collect();
    DenseMatrix::new(rows, cols, data).expect("generated shape is consistent")
}

/// Vector of standard-normal entries.
pub fn gaussian_vector(len: usize, seed: u64) -> DenseVector {
    let mut rng = SplitMix64::new(seed);
    DenseVector::new((0..len).map(|_| rng.next_gaussian_f32()).collect())
}

/// Random quantized tensor: uniformly random bit planes, Gaussian scales,
/// and (optionally) Gaussian biases. Used as a benchmark fixture where the
/// latency depends only on (m, n, q, g), not on the values themselves.
pub fn synthetic_bcq(
    rows: usize,
    cols: usize,
    bits: usize,
    group_size: usize,
    with_bias: bool,
    seed: u64,
) -> BcqTensor {
    let mut rng = SplitMix64::new(seed);
    let wpr = cols.div_ceil(32);
    let planes: Vec<Vec<u32>> = (0..bits)
        .map(|_| (0..rows * wpr).map(|_| rng.next_u32()).collect())
        .collect();
    let groups = cols.div_ceil(if group_size == 0 { cols } else { group_size });
    let scales: Vec<f32> = (0..rows * groups * bits)
        .map(|_| rng.next_gaussian_f32())
        .collect();
    let biases = if with_bias {
        Some((0..rows * groups).map(|_| rng.next_gaussian_f32()).collect())
    } else {
        None
    };
    BcqTensor::new(rows, cols, bits, group_size, planes, scales, biases)
        .expect("generated tensor is consistent")
}
