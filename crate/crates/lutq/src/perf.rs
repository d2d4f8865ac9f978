//! Analytic memory-footprint and computation-cost models.
//!
//! The footprint model accounts scaling factors at 16 bits per value
//! (the accounting the compression ratios in the literature use) while
//! the artifact itself stores 32-bit reals; reports expose both the
//! model bytes and the as-built bytes.

use crate::error::{Error, Result};

/// Memory footprint of a quantized (m x n) matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintReport {
    /// Packed sign-plane bits: `m * n * q`.
    pub binary_bits: u64,
    /// Scaling-factor bits at 16-bit accounting, including the optional
    /// bias column: `16 * m * ceil(n/g) * q (+ 16 * m * ceil(n/g))`.
    pub scale_bits: u64,
    /// `binary_bits + scale_bits`.
    pub total_bits: u64,
    /// Model bytes, `ceil(total_bits / 8)`.
    pub bytes: u64,
    /// 16-bit dense size over `total_bits`.
    pub compression_ratio: f64,
    /// Ratio with the scale overhead amortized away: `16 / q`.
    pub asymptotic_ratio: f64,
    /// Bytes the in-memory/on-disk representation actually uses:
    /// word-padded planes plus 32-bit scales and biases.
    pub as_built_bytes: u64,
}

/// Evaluate the footprint model. `g = 0` means row-wise grouping.
pub fn memory_footprint(
    m: usize,
    n: usize,
    q: usize,
    g: usize,
    bias_present: bool,
) -> Result<FootprintReport> {
    if m == 0 || n == 0 || q == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if g > n {
        return Err(Error::InvalidArgument(format!(
            "group size {g} exceeds column count {n}"
        )));
    }
    let g_eff = if g == 0 { n } else { g };
    let groups = n.div_ceil(g_eff) as u64;
    let m = m as u64;
    let n = n as u64;
    let q = q as u64;

    let binary_bits = m * n * q;
    let mut scale_bits = 16 * m * groups * q;
    if bias_present {
        scale_bits += 16 * m * groups;
    }
    let total_bits = binary_bits + scale_bits;

    let words_per_row = n.div_ceil(32);
    let mut as_built_bytes = q * m * words_per_row * 4 + 4 * m * groups * q;
    if bias_present {
        as_built_bytes += 4 * m * groups;
    }

    Ok(FootprintReport {
        binary_bits,
        scale_bits,
        total_bits,
        bytes: total_bits.div_ceil(8),
        compression_ratio: (16 * m * n) as f64 / total_bits as f64,
        asymptotic_ratio: 16.0 / q as f64,
        as_built_bytes,
    })
}

/// Computation cost of one (m x n) GEMV with q planes and tables of
/// width mu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Table-construction additions: `2^mu * ceil(n/mu)`.
    pub c_build: u64,
    /// Table reads: `m * ceil(n/mu) * q`.
    pub c_read: u64,
    /// Multiply-accumulates of the dense kernel: `m * n`.
    pub dense_macs: u64,
    /// `dense_macs / c_read`; equals `mu / q` when mu divides n.
    pub reduction_factor: f64,
}

pub fn cost_model(m: usize, n: usize, q: usize, mu: usize) -> Result<CostReport> {
    if m == 0 || n == 0 || q == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if mu == 0 || mu > crate::lut::MAX_MU {
        return Err(Error::InvalidArgument(format!(
            "mu must be in [1, {}], got {mu}",
            crate::lut::MAX_MU
        )));
    }
    let chunks = n.div_ceil(mu) as u64;
    let c_build = (1u64 << mu) * chunks;
    let c_read = m as u64 * chunks * q as u64;
    let dense_macs = (m * n) as u64;
    Ok(CostReport {
        c_build,
        c_read,
        dense_macs,
        reduction_factor: dense_macs as f64 / c_read as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_wise_ratios_approach_sixteen_over_q() {
        let n = 1 << 20;
        let r3 = memory_footprint(1024, n, 3, 0, false).unwrap();
        assert!((r3.compression_ratio - 16.0 / 3.0).abs() < 1e-3, "{}", r3.compression_ratio);
        assert_eq!(r3.asymptotic_ratio, 16.0 / 3.0);
        let r4 = memory_footprint(1024, n, 4, 0, false).unwrap();
        assert!((r4.compression_ratio - 4.0).abs() < 1e-3);
        assert_eq!(r4.asymptotic_ratio, 4.0);
    }

    #[test]
    fn small_group_case() {
        let r = memory_footprint(4, 8, 2, 4, false).unwrap();
        assert_eq!(r.binary_bits, 64);
        assert_eq!(r.scale_bits, 16 * 4 * 2 * 2);
        assert_eq!(r.total_bits, 64 + 256);
    }

    #[test]
    fn bias_adds_one_scale_column() {
        let without = memory_footprint(8, 64, 3, 16, false).unwrap();
        let with = memory_footprint(8, 64, 3, 16, true).unwrap();
        assert_eq!(with.scale_bits - without.scale_bits, 16 * 8 * 4);
        assert_eq!(with.as_built_bytes - without.as_built_bytes, 4 * 8 * 4);
    }

    #[test]
    fn footprint_nonincreasing_in_group_size() {
        let n = 4096;
        let mut prev = u64::MAX;
        for g in [16usize, 32, 64, 128, 256, 0] {
            let s = memory_footprint(256, n, 3, g, false).unwrap().total_bits;
            assert!(s <= prev, "footprint grew at g={g}");
            prev = s;
        }
    }

    #[test]
    fn footprint_bounded_for_groups_of_sixteen_plus() {
        // The 2*m*n*q bound holds exactly when groups tile the columns;
        // a ragged last group can push the scale overhead past it.
        for n in [16usize, 96, 128, 1024, 4096] {
            for g in [16usize, 32, 64] {
                if g > n || n % g != 0 {
                    continue;
                }
                let r = memory_footprint(64, n, 3, g, false).unwrap();
                assert!(
                    r.total_bits <= 2 * 64 * n as u64 * 3,
                    "n={n} g={g}: {} bits",
                    r.total_bits
                );
            }
        }
    }

    #[test]
    fn binary_bits_equal_asymptote() {
        // Row-wise footprint exceeds the scale-free asymptote only by
        // the scale bits.
        let r = memory_footprint(128, 2048, 3, 0, false).unwrap();
        assert_eq!(r.binary_bits, 128 * 2048 * 3);
        assert!(r.total_bits >= r.binary_bits);
        assert_eq!(r.total_bits - r.binary_bits, r.scale_bits);
    }

    #[test]
    fn cost_reduction_examples() {
        let r = cost_model(12288, 12288, 3, 8).unwrap();
        assert_eq!(r.c_read, 56_623_104);
        assert_eq!(r.dense_macs, 150_994_944);
        assert!((r.reduction_factor - 8.0 / 3.0).abs() < 1e-9);

        let even = cost_model(64, 64, 4, 4).unwrap();
        assert!((even.reduction_factor - 1.0).abs() < 1e-12);

        // Build cost is negligible next to reads when m*q >> 2^mu.
        let big = cost_model(12288, 12288, 1, 8).unwrap();
        assert_eq!(big.c_build, 256 * 1536);
        assert_eq!(big.c_read, 18_874_368);
        assert!(big.c_build * 10 < big.c_read);
    }

    #[test]
    fn rejects_bad_group() {
        assert!(memory_footprint(4, 8, 2, 9, false).is_err());
    }
}
