//! Reference and baseline kernels.
//!
//! * [`dense_gemv`] — plain dense GEMV with fixed ascending-column
//!   accumulation.
//! * [`dequant_gemv`] — the dequantize-then-multiply baseline: expands
//!   the tensor tile by tile (the full matrix is never materialized)
//!   and runs the dense kernel on each tile. Bit-identical to
//!   `dense_gemv(t.dequantize(), x)`.
//! * [`bcq_gemv_naive`] — per-bit sign/add evaluation of the quantized
//!   product with the same chunked accumulation order as the LUT
//!   kernel; the bit-exact oracle for `lut_gemv`.

use rayon::prelude::*;

use crate::bcq::BcqTensor;
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::lut::{chunk_key, geometry, MAX_KERNEL_BITS, MAX_MU};

/// Rows dequantized per tile in the baseline kernel.
const DEQUANT_TILE_ROWS: usize = 64;

/// y[r] = sum_c W[r][c] * x[c], accumulated in ascending column order.
pub fn dense_gemv(w: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    if w.cols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, vector has {} entries",
            w.cols(),
            x.len()
        )));
    }
    let xs = x.as_slice();
    let mut out = DenseVector::zeros(w.rows());
    out.data.par_iter_mut().enumerate().for_each(|(r, slot)| {
        *slot = dot_ascending(w.row(r), xs);
    });
    Ok(out)
}

#[inline]
fn dot_ascending(row: &[f32], xs: &[f32]) -> f32 {
    let mut acc = 0.0f64;
    for (w, v) in row.iter().zip(xs.iter()) {
        acc += (*w as f64) * (*v as f64);
    }
    acc as f32
}

/// Dequantize-then-GEMV baseline. Weights are expanded 64 rows at a
/// time, mirroring kernels that dequantize on the fly instead of
/// holding a full-precision copy.
pub fn dequant_gemv(t: &BcqTensor, x: &DenseVector) -> Result<DenseVector> {
    if t.cols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {} columns, vector has {} entries",
            t.cols(),
            x.len()
        )));
    }
    let cols = t.cols();
    let xs = x.as_slice();
    let mut out = DenseVector::zeros(t.rows());
    out.data
        .par_chunks_mut(DEQUANT_TILE_ROWS)
        .enumerate()
        .for_each(|(tile, slots)| {
            let row0 = tile * DEQUANT_TILE_ROWS;
            let mut buf = vec![0f32; slots.len() * cols];
            for ri in 0..slots.len() {
                t.dequantize_row_into(row0 + ri, &mut buf[ri * cols..(ri + 1) * cols]);
            }
            for (ri, slot) in slots.iter_mut().enumerate() {
                *slot = dot_ascending(&buf[ri * cols..(ri + 1) * cols], xs);
            }
        });
    Ok(out)
}

/// Naive quantized GEMV: reads sign bits directly and accumulates
/// sign * x products chunk by chunk in exactly the order the LUT kernel
/// folds its table reads, making the two kernels bit-identical.
pub fn bcq_gemv_naive(t: &BcqTensor, x: &DenseVector, mu: usize) -> Result<DenseVector> {
    if t.cols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {} columns, vector has {} entries",
            t.cols(),
            x.len()
        )));
    }
    if mu == 0 || mu > MAX_MU {
        return Err(Error::InvalidArgument(format!("mu must be in [1, {MAX_MU}], got {mu}")));
    }
    if t.bits() > MAX_KERNEL_BITS {
        return Err(Error::InvalidArgument(format!(
            "kernel supports at most {MAX_KERNEL_BITS} planes, tensor has {}",
            t.bits()
        )));
    }
    let geom = geometry(t, mu)?;
    let xs = x.as_slice();
    let n = t.cols();
    let bits = t.bits();
    let groups = geom.groups;
    let wpr = t.words_per_row();
    let mask = ((1u64 << mu) - 1) as u32;
    let scales = t.scales();
    let biases = t.biases();

    let fetch = |idx: usize| if idx < n { xs[idx] } else { 0.0 };

    // Chunk fold with all signs positive: the bias term's group sums.
    let chunk_sums: Vec<f32> = (0..geom.chunks)
        .map(|c| {
            let mut p = fetch(c * mu);
            for j in 1..mu {
                p += fetch(c * mu + j);
            }
            p
        })
        .collect();
    let gsums: Vec<f32> = if t.has_bias() {
        (0..groups)
            .map(|j| {
                let lo = j * geom.chunk_stride;
                let hi = (lo + geom.chunk_stride).min(geom.chunks);
                let mut v = chunk_sums[lo];
                for &s in &chunk_sums[lo + 1..hi] {
                    v += s;
                }
                v
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut out = DenseVector::zeros(t.rows());
    out.data.par_iter_mut().enumerate().for_each(|(r, slot)| {
        let mut acc = [0f32; MAX_KERNEL_BITS];
        let mut acc_bias = 0f32;
        for j in 0..groups {
            let lo = j * geom.chunk_stride;
            let hi = (lo + geom.chunk_stride).min(geom.chunks);
            for (i, acc_i) in acc.iter_mut().enumerate().take(bits) {
                let words = &t.plane(i)[r * wpr..(r + 1) * wpr];
                let mut partial = 0.0f32;
                for c in lo..hi {
                    let key = chunk_key(words, c, mu, mask);
                    let base = c * mu;
                    let x0 = fetch(base);
                    let mut p = if key & 1 == 1 { x0 } else { -x0 };
                    for bit in 1..mu {
                        let v = fetch(base + bit);
                        p += if (key >> bit) & 1 == 1 { v } else { -v };
                    }
                    if c == lo {
                        partial = p;
                    } else {
                        partial += p;
                    }
                }
                *acc_i += scales[(r * groups + j) * bits + i] * partial;
            }
            if let Some(b) = biases {
                acc_bias += b[r * groups + j] * gsums[j];
            }
        }
        let mut v = acc[0];
        for &ai in &acc[1..bits] {
            v += ai;
        }
        if biases.is_some() {
            v += acc_bias;
        }
        *slot = v;
    });
    Ok(out)
}
