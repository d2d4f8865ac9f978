//! Binary-coding-quantized weight tensors.
//!
//! A weight matrix is stored as `q` packed sign planes plus group-wise
//! scaling factors and an optional group-wise bias:
//!
//! ```text
//! w[r][c] ~= sum_i scales[r][grp(c)][i] * sign_i(r, c)  +  bias[r][grp(c)]
//! ```
//!
//! Sign planes use one bit per element, packed row-major into 32-bit
//! words: bit `j` of word `w` in a row covers column `32*w + j`, with
//! bit value 1 meaning +1 and 0 meaning -1. Rows are padded to a whole
//! word and padding bits are always stored as zero.
//!
//! `group_size == 0` is the row-wise sentinel (one group spanning all
//! columns). The last group of a row may be short when the column count
//! is not a multiple of the group size; its scales apply only to the
//! columns that exist.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Quantized weight matrix in sign-plane form.
#[derive(Debug, Clone, PartialEq)]
pub struct BcqTensor {
    rows: usize,
    cols: usize,
    bits: usize,
    group_size: usize,
    /// One packed plane per bit, each `rows * words_per_row` words.
    pub(crate) planes: Vec<Vec<u32>>,
    /// Scaling factors in `[row][group][bit]` order.
    pub(crate) scales: Vec<f32>,
    /// Optional bias in `[row][group]` order.
    pub(crate) biases: Option<Vec<f32>>,
}

impl BcqTensor {
    pub fn new(
        rows: usize,
        cols: usize,
        bits: usize,
        group_size: usize,
        mut planes: Vec<Vec<u32>>,
        scales: Vec<f32>,
        biases: Option<Vec<f32>>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if bits == 0 {
            return Err(Error::InvalidArgument("bit count must be at least 1".into()));
        }
        if group_size > cols {
            return Err(Error::InvalidArgument(format!(
                "group size {group_size} exceeds column count {cols}"
            )));
        }
        let wpr = cols.div_ceil(32);
        if planes.len() != bits {
            return Err(Error::DimensionMismatch(format!(
                "expected {bits} planes, got {}",
                planes.len()
            )));
        }
        for (i, p) in planes.iter().enumerate() {
            if p.len() != rows * wpr {
                return Err(Error::DimensionMismatch(format!(
                    "plane {i}: expected {} words, got {}",
                    rows * wpr,
                    p.len()
                )));
            }
        }
        let groups = cols.div_ceil(if group_size == 0 { cols } else { group_size });
        if scales.len() != rows * groups * bits {
            return Err(Error::DimensionMismatch(format!(
                "expected {} scales, got {}",
                rows * groups * bits,
                scales.len()
            )));
        }
        if scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scales must be finite".into()));
        }
        if let Some(b) = &biases {
            if b.len() != rows * groups {
                return Err(Error::DimensionMismatch(format!(
                    "expected {} biases, got {}",
                    rows * groups,
                    b.len()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("biases must be finite".into()));
            }
        }
        // Normalize padding so that bits beyond the last column are zero.
        let tail_bits = cols % 32;
        if tail_bits != 0 {
            let mask = (1u32 << tail_bits) - 1;
            for p in &mut planes {
                for r in 0..rows {
                    p[r * wpr + wpr - 1] &= mask;
                }
            }
        }
        Ok(Self { rows, cols, bits, group_size, planes, scales, biases })
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

    /// Raw group size; 0 means row-wise.
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Group size with the row-wise sentinel resolved.
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

    pub fn words_per_row(&self) -> usize {
        self.cols.div_ceil(32)
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    pub fn plane(&self, i: usize) -> &[u32] {
        &self.planes[i]
    }

    pub fn plane_row(&self, i: usize, r: usize) -> &[u32] {
        let wpr = self.words_per_row();
        &self.planes[i][r * wpr..(r + 1) * wpr]
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn biases(&self) -> Option<&[f32]> {
        self.biases.as_deref()
    }

    pub fn scale_at(&self, r: usize, group: usize, bit: usize) -> f32 {
        self.scales[(r * self.num_groups() + group) * self.bits + bit]
    }

    pub fn bias_at(&self, r: usize, group: usize) -> f32 {
        match &self.biases {
            Some(b) => b[r * self.num_groups() + group],
            None => 0.0,
        }
    }

    /// Sign of element (r, c) in plane `i`: +1.0 or -1.0.
    pub fn sign_at(&self, i: usize, r: usize, c: usize) -> f32 {
        let wpr = self.words_per_row();
        let word = self.planes[i][r * wpr + c / 32];
        if (word >> (c % 32)) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Reconstruct one row into `out` (length `cols`). Padding bits never
    /// contribute: only bits for columns < `cols` are read. Per element
    /// the fold is plane-ascending, then the bias.
    pub(crate) fn dequantize_row_into(&self, r: usize, out: &mut [f32]) {
        let bits = self.bits;
        let groups = self.num_groups();
        let g = self.effective_group_size();
        let wpr = self.words_per_row();
        let scale_row = &self.scales[r * groups * bits..(r + 1) * groups * bits];
        let bias_row = self.biases.as_ref().map(|b| &b[r * groups..(r + 1) * groups]);
        const WORD_CACHE: usize = 16;
        let mut words = [0u32; WORD_CACHE];
        for grp in 0..groups {
            let lo = grp * g;
            let hi = (lo + g).min(self.cols);
            let sg = &scale_row[grp * bits..(grp + 1) * bits];
            let z = bias_row.map(|b| b[grp]);
            let mut c = lo;
            while c < hi {
                let wi = c >> 5;
                let end = ((wi + 1) << 5).min(hi);
                if bits <= WORD_CACHE {
                    for (i, slot) in words.iter_mut().enumerate().take(bits) {
                        *slot = self.planes[i][r * wpr + wi];
                    }
                    for cc in c..end {
                        let sh = cc & 31;
                        let mut v = 0.0f32;
                        for i in 0..bits {
                            let a = sg[i];
                            v += if (words[i] >> sh) & 1 == 1 { a } else { -a };
                        }
                        if let Some(z) = z {
                            v += z;
                        }
                        out[cc] = v;
                    }
                } else {
                    for cc in c..end {
                        let sh = cc & 31;
                        let mut v = 0.0f32;
                        for (i, a) in sg.iter().enumerate() {
                            let set = (self.planes[i][r * wpr + wi] >> sh) & 1 == 1;
                            v += if set { *a } else { -a };
                        }
                        if let Some(z) = z {
                            v += z;
                        }
                        out[cc] = v;
                    }
                }
                c = end;
            }
        }
    }

    /// Expand back to a dense matrix.
    pub fn dequantize(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let cols = self.cols;
        out.data
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(r, row_out)| self.dequantize_row_into(r, row_out));
        out
    }
}

/// Pack sign planes (elements exactly +1 or -1) into bit planes.
/// Bit `j` of word `w` in a row is set iff the element at column
/// `32*w + j` is +1; padding bits come out zero.
pub fn pack_planes(rows: usize, cols: usize, sign_planes: &[Vec<i8>]) -> Result<Vec<Vec<u32>>> {
    if sign_planes.is_empty() {
        return Err(Error::InvalidArgument("at least one sign plane required".into()));
    }
    for (i, p) in sign_planes.iter().enumerate() {
        if p.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "plane {i}: expected {} elements, got {}",
                rows * cols,
                p.len()
            )));
        }
        if p.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(format!(
                "plane {i}: elements must be exactly +1 or -1"
            )));
        }
    }
    let wpr = cols.div_ceil(32);
    let mut packed = Vec::with_capacity(sign_planes.len());
    for plane in sign_planes {
        let mut words = vec![0u32; rows * wpr];
        for r in 0..rows {
            for c in 0..cols {
                if plane[r * cols + c] == 1 {
                    words[r * wpr + c / 32] |= 1 << (c % 32);
                }
            }
        }
        packed.push(words);
    }
    Ok(packed)
}

/// Inverse of [`pack_planes`]; returns +1/-1 elements.
pub fn unpack_planes(rows: usize, cols: usize, packed: &[Vec<u32>]) -> Vec<Vec<i8>> {
    let wpr = cols.div_ceil(32);
    packed
        .iter()
        .map(|words| {
            let mut plane = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    let set = (words[r * wpr + c / 32] >> (c % 32)) & 1 == 1;
                    plane.push(if set { 1 } else { -1 });
                }
            }
            plane
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn pack_single_row_pattern() {
        // [+1,+1,-1,-1,-1,+1] -> low bits 0b100011.
        let plane = vec![vec![1i8, 1, -1, -1, -1, 1]];
        let packed = pack_planes(1, 6, &plane).unwrap();
        assert_eq!(packed[0], vec![0x23]);
    }

    #[test]
    fn pack_all_plus_full_word() {
        let plane = vec![vec![1i8; 32]];
        let packed = pack_planes(1, 32, &plane).unwrap();
        assert_eq!(packed[0], vec![0xFFFF_FFFF]);
    }

    #[test]
    fn pack_unpack_roundtrip_exhaustive_small() {
        for n in 1..=8usize {
            for pattern in 0..(1u32 << n) {
                let plane: Vec<i8> =
                    (0..n).map(|c| if (pattern >> c) & 1 == 1 { 1 } else { -1 }).collect();
                let packed = pack_planes(1, n, &[plane.clone()]).unwrap();
                let back = unpack_planes(1, n, &packed);
                assert_eq!(back[0], plane, "n={n} pattern={pattern:#b}");
            }
        }
    }

    #[test]
    fn pack_unpack_roundtrip_random() {
        let mut rng = SplitMix64::new(42);
        for _ in 0..50 {
            let rows = 1 + rng.next_below(6) as usize;
            let cols = 1 + rng.next_below(100) as usize;
            let q = 1 + rng.next_below(3) as usize;
            let planes: Vec<Vec<i8>> = (0..q)
                .map(|_| {
                    (0..rows * cols)
                        .map(|_| if rng.next_u64() & 1 == 1 { 1 } else { -1 })
                        .collect()
                })
                .collect();
            let packed = pack_planes(rows, cols, &planes).unwrap();
            assert_eq!(unpack_planes(rows, cols, &packed), planes);
        }
    }

    #[test]
    fn pack_rejects_bad_input() {
        assert!(pack_planes(1, 3, &[vec![1i8, 0, -1]]).is_err());
        assert!(pack_planes(2, 3, &[vec![1i8; 5]]).is_err());
    }

    #[test]
    fn dequantize_one_bit() {
        let planes = pack_planes(1, 2, &[vec![1i8, -1]]).unwrap();
        let t = BcqTensor::new(1, 2, 1, 0, planes, vec![1.0], None).unwrap();
        let w = t.dequantize();
        assert_eq!(w.row(0), &[1.0, -1.0]);
    }

    #[test]
    fn dequantize_with_bias() {
        // alpha = [0.25, 0.5], z = 0.75.
        let planes = pack_planes(1, 2, &[vec![1i8, -1], vec![1i8, -1]]).unwrap();
        let t = BcqTensor::new(1, 2, 2, 0, planes, vec![0.25, 0.5], Some(vec![0.75])).unwrap();
        let w = t.dequantize();
        // signs [+1,+1] -> 0.25 + 0.5 + 0.75 = 1.5
        assert_eq!(w.get(0, 0), 1.5);
        // signs [-1,-1] -> -0.75 + 0.75 = 0.0: zero is reachable only
        // through the bias term.
        assert_eq!(w.get(0, 1), 0.0);
    }

    #[test]
    fn dequantize_is_linear_in_scales() {
        let mut rng = SplitMix64::new(7);
        let rows = 5;
        let cols = 37;
        let q = 3;
        let planes: Vec<Vec<i8>> = (0..q)
            .map(|_| {
                (0..rows * cols).map(|_| if rng.next_u64() & 1 == 1 { 1 } else { -1 }).collect()
            })
            .collect();
        let packed = pack_planes(rows, cols, &planes).unwrap();
        let groups = cols.div_ceil(8);
        let scales: Vec<f32> =
            (0..rows * groups * q).map(|_| rng.next_gaussian_f32()).collect();
        let biases: Vec<f32> = (0..rows * groups).map(|_| rng.next_gaussian_f32()).collect();
        let c = 3.0f32;
        let t1 = BcqTensor::new(rows, cols, q, 8, packed.clone(), scales.clone(), Some(biases.clone()))
            .unwrap();
        let t2 = BcqTensor::new(
            rows,
            cols,
            q,
            8,
            packed,
            scales.iter().map(|s| s * c).collect(),
            Some(biases.iter().map(|b| b * c).collect()),
        )
        .unwrap();
        let w1 = t1.dequantize();
        let w2 = t2.dequantize();
        // Relative to the tensor's magnitude: individual entries may
        // cancel to near zero while their rounding error does not.
        let scale = w1.data().iter().fold(0f32, |m, v| m.max(v.abs())) * c;
        for (a, b) in w1.data().iter().zip(w2.data().iter()) {
            let want = a * c;
            assert!(
                (b - want).abs() <= 1e-6 * want.abs().max(scale),
                "expected {want}, got {b}"
            );
        }
    }

    #[test]
    fn padding_is_masked() {
        // Two tensors equal on real columns must dequantize identically
        // even if one has garbage in the padding bits.
        let planes = pack_planes(2, 5, &[vec![1i8, -1, 1, 1, -1, -1, 1, -1, -1, 1]]).unwrap();
        let t_clean = BcqTensor::new(2, 5, 1, 0, planes.clone(), vec![1.5, -0.5], None).unwrap();
        let mut dirty = planes;
        dirty[0][0] |= 0xFFFF_FFE0; // bits 5..31 are padding for n=5
        dirty[0][1] |= 0xABCD_0000 | 0xE0;
        let t_dirty = BcqTensor::new(2, 5, 1, 0, dirty, vec![1.5, -0.5], None).unwrap();
        assert_eq!(t_clean.dequantize(), t_dirty.dequantize());
    }

    #[test]
    fn short_last_group_scales_apply_only_there() {
        // cols=3, g=2: second group has a single column.
        let planes = pack_planes(1, 3, &[vec![1i8, 1, 1]]).unwrap();
        let t = BcqTensor::new(1, 3, 1, 2, planes, vec![2.0, 5.0], None).unwrap();
        assert_eq!(t.dequantize().row(0), &[2.0, 2.0, 5.0]);
    }
}
