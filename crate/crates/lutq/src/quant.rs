//! Weight quantizers.
//!
//! Three constructors produce [`BcqTensor`]s:
//!
//! * round-to-nearest asymmetric uniform quantization ([`quantize_rtn`])
//!   followed by the exact uniform-to-sign-plane conversion
//!   ([`uniform_to_bcq`]),
//! * greedy residual fitting ([`quantize_bcq_greedy`]),
//! * alternating least squares refinement ([`quantize_bcq_alternating`]).
//!
//! All quantizers work group by group within a row and are deterministic:
//! `sign(0)` is +1 everywhere, and parallelism never reorders the
//! per-group arithmetic.

use rayon::prelude::*;

use crate::bcq::BcqTensor;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Quantization method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMethod {
    /// Asymmetric min-max round-to-nearest, converted to sign planes.
    RtnUniform,
    /// Greedy residual fitting.
    BcqGreedy,
    /// Greedy init plus alternating least-squares refinement.
    BcqAlternating { iters: usize },
}

impl std::fmt::Display for QuantMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::RtnUniform => write!(f, "rtn"),
            Self::BcqGreedy => write!(f, "greedy"),
            Self::BcqAlternating { .. } => write!(f, "alternating"),
        }
    }
}

/// Asymmetric uniformly quantized matrix: integer codes plus per-group
/// scale `s` and zero offset, dequantizing as `s * code + zero_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformQuant {
    rows: usize,
    cols: usize,
    bits: usize,
    group_size: usize,
    /// Codes in [0, 2^bits - 1], row-major.
    pub(crate) codes: Vec<u8>,
    /// Scale per [row][group].
    pub(crate) scale: Vec<f32>,
    /// Zero offset per [row][group].
    pub(crate) zero_offset: Vec<f32>,
}

impl UniformQuant {
    pub fn new(
        rows: usize,
        cols: usize,
        bits: usize,
        group_size: usize,
        codes: Vec<u8>,
        scale: Vec<f32>,
        zero_offset: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(1..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!(
                "uniform bit count must be in [1, 8], got {bits}"
            )));
        }
        if group_size > cols {
            return Err(Error::InvalidArgument(format!(
                "group size {group_size} exceeds column count {cols}"
            )));
        }
        if codes.len() != rows * cols {
            return Err(Error::DimensionMismatch("code array shape mismatch".into()));
        }
        let limit = ((1u16 << bits) - 1) as u8;
        if codes.iter().any(|&c| c > limit) {
            return Err(Error::InvalidArgument(format!("codes must be <= {limit}")));
        }
        let groups = cols.div_ceil(if group_size == 0 { cols } else { group_size });
        if scale.len() != rows * groups || zero_offset.len() != rows * groups {
            return Err(Error::DimensionMismatch("scale/zero array shape mismatch".into()));
        }
        Ok(Self { rows, cols, bits, group_size, codes, scale, zero_offset })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn effective_group_size(&self) -> usize {
        if self.group_size == 0 {
            self.cols
        } else {
            self.group_size
        }
    }

    pub fn num_groups(&self) -> usize {
        self.cols.div_ceil(self.effective_group_size())
    }

    pub fn code_at(&self, r: usize, c: usize) -> u8 {
        self.codes[r * self.cols + c]
    }

    /// Dequantized value of element (r, c): `s * code + zero_offset`.
    pub fn dequant_value(&self, r: usize, c: usize) -> f32 {
        let grp = c / self.effective_group_size();
        let idx = r * self.num_groups() + grp;
        self.scale[idx] * self.codes[r * self.cols + c] as f32 + self.zero_offset[idx]
    }

    pub fn dequantize(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |r, c| self.dequant_value(r, c))
    }
}

fn check_group_size(g: usize, cols: usize) -> Result<usize> {
    if g > cols {
        return Err(Error::InvalidArgument(format!(
            "group size {g} exceeds column count {cols}"
        )));
    }
    Ok(if g == 0 { cols } else { g })
}

/// Asymmetric min-max round-to-nearest quantization.
///
/// Per (row, group): `s = (max - min) / (2^q - 1)`, `z = min`,
/// `code = round((w - z) / s)` clamped to the code range. A degenerate
/// group (`max == min`) stores `s = 1, codes = 0, z = min` so its
/// dequantization is exact.
pub fn quantize_rtn(w: &DenseMatrix, bits: usize, group_size: usize) -> Result<UniformQuant> {
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "rtn bit count must be in [1, 8], got {bits}"
        )));
    }
    let g = check_group_size(group_size, w.cols())?;
    let rows = w.rows();
    let cols = w.cols();
    let groups = cols.div_ceil(g);
    let levels = ((1u32 << bits) - 1) as f32;

    let mut codes = vec![0u8; rows * cols];
    let mut scale = vec![0f32; rows * groups];
    let mut zero = vec![0f32; rows * groups];

    codes
        .par_chunks_mut(cols)
        .zip(scale.par_chunks_mut(groups))
        .zip(zero.par_chunks_mut(groups))
        .enumerate()
        .for_each(|(r, ((code_row, scale_row), zero_row))| {
            let row = w.row(r);
            for grp in 0..groups {
                let lo = grp * g;
                let hi = (lo + g).min(cols);
                let vals = &row[lo..hi];
                let mut min = vals[0];
                let mut max = vals[0];
                for &v in &vals[1..] {
                    min = min.min(v);
                    max = max.max(v);
                }
                if max == min {
                    scale_row[grp] = 1.0;
                    zero_row[grp] = min;
                    // codes stay 0
                    continue;
                }
                let s = (max - min) / levels;
                scale_row[grp] = s;
                zero_row[grp] = min;
                for (c, &v) in vals.iter().enumerate() {
                    let q = ((v - min) / s).round().clamp(0.0, levels);
                    code_row[lo + c] = q as u8;
                }
            }
        });

    UniformQuant::new(rows, cols, bits, group_size, codes, scale, zero)
}

/// Convert asymmetric uniform quantization into sign-plane form.
///
/// Per (row, group): `alpha_i = 2^(i-1) * s`, `bias = sum_i alpha_i + z`,
/// and plane `i` holds bit `i` of the code. The result dequantizes to
/// `s * code + z` exactly in exact arithmetic.
pub fn uniform_to_bcq(u: &UniformQuant) -> BcqTensor {
    let rows = u.rows;
    let cols = u.cols;
    let bits = u.bits;
    let groups = u.num_groups();
    let wpr = cols.div_ceil(32);

    let mut planes = vec![vec![0u32; rows * wpr]; bits];
    for r in 0..rows {
        for c in 0..cols {
            let code = u.codes[r * cols + c];
            for (i, plane) in planes.iter_mut().enumerate() {
                if (code >> i) & 1 == 1 {
                    plane[r * wpr + c / 32] |= 1 << (c % 32);
                }
            }
        }
    }

    let mut scales = vec![0f32; rows * groups * bits];
    let mut biases = vec![0f32; rows * groups];
    for r in 0..rows {
        for grp in 0..groups {
            let s = u.scale[r * groups + grp];
            let z = u.zero_offset[r * groups + grp];
            let base = (r * groups + grp) * bits;
            let mut alpha_sum = 0.0f32;
            for i in 0..bits {
                // 2^(i-1) * s: exact power-of-two scaling.
                let a = s * ((1u32 << i) as f32) * 0.5;
                scales[base + i] = a;
                alpha_sum += a;
            }
            biases[r * groups + grp] = alpha_sum + z;
        }
    }

    BcqTensor::new(rows, cols, bits, u.group_size, planes, scales, Some(biases))
        .expect("conversion preserves shape")
}

/// Greedy residual fitting: per (row, group), repeatedly take the sign
/// of the residual (sign(0) = +1) with the mean absolute residual as the
/// scale, then subtract. No bias term is produced.
pub fn quantize_bcq_greedy(w: &DenseMatrix, bits: usize, group_size: usize) -> Result<BcqTensor> {
    if bits == 0 {
        return Err(Error::InvalidArgument("bit count must be at least 1".into()));
    }
    let g = check_group_size(group_size, w.cols())?;
    let rows = w.rows();
    let cols = w.cols();
    let groups = cols.div_ceil(g);
    let wpr = cols.div_ceil(32);

    let mut planes = vec![vec![0u32; rows * wpr]; bits];
    let mut scales = vec![0f32; rows * groups * bits];

    // Rows are independent; split every output buffer by row.
    let plane_rows: Vec<Vec<&mut [u32]>> = planes
        .iter_mut()
        .map(|p| p.chunks_mut(wpr).collect())
        .collect();
    let mut row_views: Vec<(usize, Vec<&mut [u32]>, &mut [f32])> = Vec::with_capacity(rows);
    {
        let mut scale_rest: &mut [f32] = &mut scales;
        let mut plane_iters: Vec<_> = plane_rows.into_iter().map(|v| v.into_iter()).collect();
        for r in 0..rows {
            let (s_row, rest) = scale_rest.split_at_mut(groups * bits);
            scale_rest = rest;
            let p_rows: Vec<&mut [u32]> =
                plane_iters.iter_mut().map(|it| it.next().unwrap()).collect();
            row_views.push((r, p_rows, s_row));
        }
    }

    row_views.par_iter_mut().for_each(|(r, p_rows, s_row)| {
        let row = w.row(*r);
        let mut resid = vec![0f32; g];
        for grp in 0..groups {
            let lo = grp * g;
            let hi = (lo + g).min(cols);
            let len = hi - lo;
            resid[..len].copy_from_slice(&row[lo..hi]);
            for i in 0..bits {
                let mut abs_sum = 0.0f32;
                for &v in &resid[..len] {
                    abs_sum += v.abs();
                }
                let alpha = abs_sum / len as f32;
                s_row[grp * bits + i] = alpha;
                for (c, v) in resid[..len].iter_mut().enumerate() {
                    let positive = *v >= 0.0; // sign(0) = +1
                    if positive {
                        let col = lo + c;
                        p_rows[i][col / 32] |= 1 << (col % 32);
                    }
                    *v -= if positive { alpha } else { -alpha };
                }
            }
        }
    });

    BcqTensor::new(rows, cols, bits, group_size, planes, scales, None)
}

/// Solve the q x q normal equations `BtB * alpha = Btw` by Gaussian
/// elimination with partial pivoting, in f64. Returns `None` when the
/// system is singular or too ill-conditioned (pivot ratio above 1e12).
fn solve_normal_equations(btb: &mut [f64], btw: &mut [f64], q: usize) -> Option<Vec<f64>> {
    let mut max_pivot = 0.0f64;
    for col in 0..q {
        let mut best = col;
        for r in col + 1..q {
            if btb[r * q + col].abs() > btb[best * q + col].abs() {
                best = r;
            }
        }
        if best != col {
            for c in 0..q {
                btb.swap(col * q + c, best * q + c);
            }
            btw.swap(col, best);
        }
        let pivot = btb[col * q + col];
        let pabs = pivot.abs();
        max_pivot = max_pivot.max(pabs);
        if pabs == 0.0 || max_pivot / pabs > 1e12 {
            return None;
        }
        for r in col + 1..q {
            let f = btb[r * q + col] / pivot;
            if f == 0.0 {
                continue;
            }
            for c in col..q {
                btb[r * q + c] -= f * btb[col * q + c];
            }
            btw[r] -= f * btw[col];
        }
    }
    let mut x = vec![0f64; q];
    for col in (0..q).rev() {
        let mut v = btw[col];
        for c in col + 1..q {
            v -= btb[col * q + c] * x[c];
        }
        x[col] = v / btb[col * q + col];
    }
    Some(x)
}

fn group_mse(vals: &[f32], signs: &[u8], alphas: &[f64], bits: usize) -> f64 {
    let mut err = 0.0f64;
    for (c, &v) in vals.iter().enumerate() {
        let mut recon = 0.0f64;
        for (i, &a) in alphas.iter().enumerate().take(bits) {
            recon += if (signs[c] >> i) & 1 == 1 { a } else { -a };
        }
        let d = v as f64 - recon;
        err += d * d;
    }
    err / vals.len() as f64
}

/// Greedy initialization followed by alternating refinement: fix the
/// sign planes and solve the scales by least squares, then fix the
/// scales and re-pick each element's sign pattern exhaustively over the
/// 2^q candidates. The best iterate (by group MSE) is kept, so the
/// result never does worse than the greedy start.
pub fn quantize_bcq_alternating(
    w: &DenseMatrix,
    bits: usize,
    group_size: usize,
    iters: usize,
) -> Result<BcqTensor> {
    if bits == 0 {
        return Err(Error::InvalidArgument("bit count must be at least 1".into()));
    }
    if bits > 12 {
        return Err(Error::InvalidArgument(
            "alternating refinement supports at most 12 bits".into(),
        ));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    let g = check_group_size(group_size, w.cols())?;
    let rows = w.rows();
    let cols = w.cols();
    let groups = cols.div_ceil(g);
    let wpr = cols.div_ceil(32);
    let patterns = 1usize << bits;

    let greedy = quantize_bcq_greedy(w, bits, group_size)?;

    let mut planes = vec![vec![0u32; rows * wpr]; bits];
    let mut scales = vec![0f32; rows * groups * bits];

    struct RowResult {
        signs: Vec<u8>,
        scales: Vec<f32>,
    }

    let results: Vec<RowResult> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let row = w.row(r);
            let mut signs = vec![0u8; cols];
            let mut out_scales = vec![0f32; groups * bits];
            // Seed from the greedy solution.
            for c in 0..cols {
                let mut s = 0u8;
                for i in 0..bits {
                    if greedy.sign_at(i, r, c) > 0.0 {
                        s |= 1 << i;
                    }
                }
                signs[c] = s;
            }
            let mut recon = vec![0f64; patterns];
            for grp in 0..groups {
                let lo = grp * g;
                let hi = (lo + g).min(cols);
                let vals = &row[lo..hi];
                let len = hi - lo;
                let gsigns = &mut signs[lo..hi];
                let mut alphas: Vec<f64> = (0..bits)
                    .map(|i| greedy.scale_at(r, grp, i) as f64)
                    .collect();
                let mut best_alphas = alphas.clone();
                let mut best_signs = gsigns.to_vec();
                let mut best_mse = group_mse(vals, gsigns, &alphas, bits);

                for _ in 0..iters {
                    // (a) fix signs, least-squares scales.
                    let mut btb = vec![0f64; bits * bits];
                    let mut btw = vec![0f64; bits];
                    for (c, &v) in vals.iter().enumerate() {
                        let s = gsigns[c];
                        for i in 0..bits {
                            let si = if (s >> i) & 1 == 1 { 1.0 } else { -1.0 };
                            btw[i] += si * v as f64;
                            for j in 0..bits {
                                let sj = if (s >> j) & 1 == 1 { 1.0 } else { -1.0 };
                                btb[i * bits + j] += si * sj;
                            }
                        }
                    }
                    if let Some(sol) = solve_normal_equations(&mut btb, &mut btw, bits) {
                        alphas = sol;
                    }
                    // (b) fix scales, exhaustive per-element sign pattern.
                    for (k, slot) in recon.iter_mut().enumerate() {
                        let mut v = 0.0f64;
                        for (i, &a) in alphas.iter().enumerate() {
                            v += if (k >> i) & 1 == 1 { a } else { -a };
                        }
                        *slot = v;
                    }
                    for (c, &v) in vals.iter().enumerate() {
                        let mut best_k = 0usize;
                        let mut best_d = (v as f64 - recon[0]).abs();
                        for (k, &rv) in recon.iter().enumerate().skip(1) {
                            let d = (v as f64 - rv).abs();
                            if d < best_d {
                                best_d = d;
                                best_k = k;
                            }
                        }
                        gsigns[c] = best_k as u8;
                    }
                    let mse = group_mse(vals, gsigns, &alphas, bits);
                    if mse < best_mse {
                        best_mse = mse;
                        best_alphas = alphas.clone();
                        best_signs = gsigns.to_vec();
                    }
                }
                gsigns.copy_from_slice(&best_signs);
                let _ = len;
                for i in 0..bits {
                    out_scales[grp * bits + i] = best_alphas[i] as f32;
                }
            }
            RowResult { signs, scales: out_scales }
        })
        .collect();

    for (r, res) in results.iter().enumerate() {
        for c in 0..cols {
            let s = res.signs[c];
            for (i, plane) in planes.iter_mut().enumerate() {
                if (s >> i) & 1 == 1 {
                    plane[r * wpr + c / 32] |= 1 << (c % 32);
                }
            }
        }
        scales[r * groups * bits..(r + 1) * groups * bits].copy_from_slice(&res.scales);
    }

    BcqTensor::new(rows, cols, bits, group_size, planes, scales, None)
}

/// Dispatch helper used by the CLI and sweeps.
pub fn quantize(w: &DenseMatrix, method: QuantMethod, bits: usize, group_size: usize) -> Result<BcqTensor> {
    match method {
        QuantMethod::RtnUniform => Ok(uniform_to_bcq(&quantize_rtn(w, bits, group_size)?)),
        QuantMethod::BcqGreedy => quantize_bcq_greedy(w, bits, group_size),
        QuantMethod::BcqAlternating { iters } => {
            quantize_bcq_alternating(w, bits, group_size, iters)
        }
    }
}

/// Reconstruction error metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Mean squared error.
    pub mse: f32,
    /// Frobenius norm of the error over the Frobenius norm of `w`.
    pub rel_fro: f32,
    /// Largest absolute elementwise deviation.
    pub max_abs: f32,
}

/// Compare a matrix against the dequantization of a tensor.
pub fn quantization_error(w: &DenseMatrix, t: &BcqTensor) -> Result<ErrorReport> {
    if w.rows() != t.rows() || w.cols() != t.cols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, tensor is {}x{}",
            w.rows(),
            w.cols(),
            t.rows(),
            t.cols()
        )));
    }
    let wh = t.dequantize();
    let mut sq = 0.0f64;
    let mut ref_sq = 0.0f64;
    let mut max_abs = 0.0f32;
    for (a, b) in w.data().iter().zip(wh.data().iter()) {
        let d = a - b;
        sq += (d as f64) * (d as f64);
        ref_sq += (*a as f64) * (*a as f64);
        max_abs = max_abs.max(d.abs());
    }
    let count = (w.rows() * w.cols()) as f64;
    let rel_fro = if sq == 0.0 {
        0.0
    } else {
        (sq / ref_sq).sqrt() as f32
    };
    Ok(ErrorReport { mse: (sq / count) as f32, rel_fro, max_abs })
}
