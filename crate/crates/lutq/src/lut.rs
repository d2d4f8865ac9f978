//! Lookup-table GEMV over sign-plane tensors.
//!
//! The activation vector is cut into sub-vectors of length `mu`; for
//! each sub-vector a table of all 2^mu signed partial sums is built
//! once. The kernel then replaces every mu-wide dot product against a
//! sign plane with a single table read keyed by the packed plane bits,
//! and multiplies by the group's scaling factor only once per
//! (row, group, plane).
//!
//! ## Accumulation order
//!
//! Floating-point results are bit-reproducible regardless of thread
//! count or column-tile split. The contract, per output row:
//!
//! * every table entry equals the direct left-to-right fold
//!   `((s0*x0 + s1*x1) + s2*x2) + ...` over its sub-vector (the
//!   doubling construction below performs exactly those additions);
//! * per (row, plane, group), table reads accumulate in ascending
//!   chunk order;
//! * each plane owns one accumulator per row, fed group terms
//!   `scale * partial` in ascending group order;
//! * the row output folds plane accumulators in ascending plane order,
//!   then adds the bias accumulator (bias terms `bias * group_sum`
//!   also accumulate in ascending group order).
//!
//! Workers own disjoint row tiles, and column tiles are walked in
//! ascending order by the row's worker with in-progress group partials
//! carried across tile boundaries, so neither parallelism nor tiling
//! perturbs any addition sequence.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::bcq::BcqTensor;
use crate::dense::DenseVector;
use crate::error::{Error, Result};

/// Largest sub-vector length: tables stay <= 2^12 entries.
pub const MAX_MU: usize = 12;
/// Largest plane count the kernels accept.
pub const MAX_KERNEL_BITS: usize = 16;

/// Tiling and threading parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    /// Sub-vector length (table key width).
    pub mu: usize,
    /// Rows per worker tile.
    pub tile_rows: usize,
    /// Tables per column tile; tile width in columns is `luts_per_tile * mu`.
    pub luts_per_tile: usize,
    /// Worker threads; 0 uses the current rayon pool.
    pub threads: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { mu: 8, tile_rows: 2048, luts_per_tile: 16, threads: 0 }
    }
}

impl KernelConfig {
    pub fn with_mu(mu: usize) -> Self {
        Self { mu, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.mu > MAX_MU {
            return Err(Error::InvalidArgument(format!(
                "mu must be in [1, {MAX_MU}], got {}",
                self.mu
            )));
        }
        if self.tile_rows == 0 {
            return Err(Error::InvalidArgument("tile_rows must be at least 1".into()));
        }
        if self.luts_per_tile == 0 {
            return Err(Error::InvalidArgument("luts_per_tile must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-activation-vector table set: one 2^mu-entry table per mu-wide
/// chunk of the input, plus each chunk's plain sum (the all-ones entry)
/// for the bias term.
#[derive(Debug, Clone)]
pub struct LutBank {
    mu: usize,
    len: usize,
    /// Flat tables; chunk `c` occupies entries `[c << mu, (c+1) << mu)`.
    tables: Vec<f32>,
    /// Sum of the chunk's activations (table entry for the all-ones key).
    chunk_sums: Vec<f32>,
    build_adds: u64,
}

impl LutBank {
    pub fn mu(&self) -> usize {
        self.mu
    }

    /// Length of the activation vector the bank was built from.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_tables(&self) -> usize {
        self.chunk_sums.len()
    }

    /// Total table storage in bytes.
    pub fn table_bytes(&self) -> usize {
        self.tables.len() * std::mem::size_of::<f32>()
    }

    /// Additions performed while building the tables.
    pub fn build_adds(&self) -> u64 {
        self.build_adds
    }

    pub fn table(&self, chunk: usize) -> &[f32] {
        let size = 1usize << self.mu;
        &self.tables[chunk * size..(chunk + 1) * size]
    }

    pub fn chunk_sums(&self) -> &[f32] {
        &self.chunk_sums
    }
}

/// Build the table bank for an activation vector.
///
/// Each table is grown one element at a time by doubling: after element
/// `j` the table holds every signed fold over the first `j + 1`
/// activations, each computed with the same addition sequence a direct
/// left-to-right accumulation would use. Cost is O(2^mu) additions per
/// table. Activations past the end of the vector enter as zero.
pub fn build_luts(x: &DenseVector, mu: usize) -> Result<LutBank> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("activation vector must be non-empty".into()));
    }
    if mu == 0 || mu > MAX_MU {
        return Err(Error::InvalidArgument(format!(
            "mu must be in [1, {MAX_MU}], got {mu}"
        )));
    }
    let n = x.len();
    let chunks = n.div_ceil(mu);
    let size = 1usize << mu;
    let mut tables = vec![0f32; chunks * size];
    let adds = AtomicU64::new(0);
    let xs_all = x.as_slice();

    tables.par_chunks_mut(size).enumerate().for_each(|(c, table)| {
        let mut xs = [0f32; MAX_MU];
        for (j, slot) in xs.iter_mut().enumerate().take(mu) {
            let idx = c * mu + j;
            *slot = if idx < n { xs_all[idx] } else { 0.0 };
        }
        let mut local_adds = 0u64;
        table[0] = -xs[0];
        table[1] = xs[0];
        let mut filled = 2usize;
        for &v in xs.iter().take(mu).skip(1) {
            for k in 0..filled {
                table[k + filled] = table[k] + v;
                table[k] -= v;
            }
            local_adds += 2 * filled as u64;
            filled <<= 1;
        }
        adds.fetch_add(local_adds, Ordering::Relaxed);
    });

    let chunk_sums: Vec<f32> = (0..chunks).map(|c| tables[c * size + size - 1]).collect();
    Ok(LutBank { mu, len: n, tables, chunk_sums, build_adds: adds.into_inner() })
}

/// Key for chunk `c`: the mu packed plane bits starting at column `c * mu`.
#[inline(always)]
pub(crate) fn chunk_key(words: &[u32], chunk: usize, mu: usize, mask: u32) -> u32 {
    let bit = chunk * mu;
    let wi = bit >> 5;
    let sh = bit & 31;
    let mut window = words[wi] as u64;
    if sh + mu > 32 && wi + 1 < words.len() {
        window |= (words[wi + 1] as u64) << 32;
    }
    ((window >> sh) as u32) & mask
}

/// Column-tile segment: a run of chunks inside one tile belonging to a
/// single scaling group.
#[derive(Debug, Clone, Copy)]
struct Seg {
    c0: u32,
    c1: u32,
    group: u32,
    starts_group: bool,
    ends_group: bool,
}

/// Chunk/group geometry shared by the LUT kernel and the naive oracle.
pub(crate) struct Geometry {
    pub chunks: usize,
    pub groups: usize,
    /// Chunks per full group (all chunks for row-wise tensors).
    pub chunk_stride: usize,
}

pub(crate) fn geometry(t: &BcqTensor, mu: usize) -> Result<Geometry> {
    let g = t.group_size();
    if g > 0 {
        if mu > g {
            return Err(Error::InvalidArgument(format!(
                "mu {mu} exceeds group size {g}"
            )));
        }
        if g % mu != 0 {
            return Err(Error::InvalidArgument(format!(
                "group size {g} must be a multiple of mu {mu}"
            )));
        }
    }
    let chunks = t.cols().div_ceil(mu);
    Ok(Geometry {
        chunks,
        groups: t.num_groups(),
        chunk_stride: if g == 0 { chunks } else { g / mu },
    })
}

fn build_segments(geom: &Geometry, luts_per_tile: usize) -> Vec<Vec<Seg>> {
    let tiles = geom.chunks.div_ceil(luts_per_tile);
    let mut out = Vec::with_capacity(tiles);
    for tile in 0..tiles {
        let lo = tile * luts_per_tile;
        let hi = (lo + luts_per_tile).min(geom.chunks);
        let mut segs = Vec::new();
        let mut c = lo;
        while c < hi {
            let j = c / geom.chunk_stride;
            let jfirst = j * geom.chunk_stride;
            let jend = (jfirst + geom.chunk_stride).min(geom.chunks);
            let c1 = jend.min(hi);
            segs.push(Seg {
                c0: c as u32,
                c1: c1 as u32,
                group: j as u32,
                starts_group: c == jfirst,
                ends_group: c1 == jend,
            });
            c = c1;
        }
        out.push(segs);
    }
    out
}

/// Per-group activation sums, folded from the bank's per-chunk sums in
/// ascending chunk order.
fn group_sums(bank: &LutBank, geom: &Geometry) -> Vec<f32> {
    let cs = bank.chunk_sums();
    (0..geom.groups)
        .map(|j| {
            let lo = j * geom.chunk_stride;
            let hi = (lo + geom.chunk_stride).min(geom.chunks);
            let mut v = cs[lo];
            for &s in &cs[lo + 1..hi] {
                v += s;
            }
            v
        })
        .collect()
}

/// Instrumented operation counters from one kernel invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelStats {
    /// Table reads performed.
    pub lut_reads: u64,
    /// Scaling-factor multiplications performed (bias multiplies excluded).
    pub scale_mults: u64,
}

struct StatsAccum {
    reads: AtomicU64,
    mults: AtomicU64,
}

fn check_inputs(t: &BcqTensor, bank: &LutBank, cfg: &KernelConfig) -> Result<()> {
    cfg.validate()?;
    if bank.mu() != cfg.mu {
        return Err(Error::InvalidArgument(format!(
            "bank was built with mu {} but config requests mu {}",
            bank.mu(),
            cfg.mu
        )));
    }
    if bank.len() != t.cols() {
        return Err(Error::DimensionMismatch(format!(
            "bank covers {} activations but tensor has {} columns",
            bank.len(),
            t.cols()
        )));
    }
    if t.bits() > MAX_KERNEL_BITS {
        return Err(Error::InvalidArgument(format!(
            "kernel supports at most {MAX_KERNEL_BITS} planes, tensor has {}",
            t.bits()
        )));
    }
    Ok(())
}

fn gemv_core(
    t: &BcqTensor,
    bank: &LutBank,
    cfg: &KernelConfig,
    out: &mut [f32],
    accumulate: bool,
    stats: Option<&StatsAccum>,
) -> Result<()> {
    check_inputs(t, bank, cfg)?;
    if out.len() != t.rows() {
        return Err(Error::DimensionMismatch(format!(
            "output has {} entries but tensor has {} rows",
            out.len(),
            t.rows()
        )));
    }
    let geom = geometry(t, cfg.mu)?;
    let segments = build_segments(&geom, cfg.luts_per_tile);
    let gsums = if t.has_bias() { group_sums(bank, &geom) } else { Vec::new() };

    let bits = t.bits();
    let groups = geom.groups;
    let mu = cfg.mu;
    let mask = ((1u64 << mu) - 1) as u32;
    let wpr = t.words_per_row();
    let scales = t.scales();
    let biases = t.biases();
    let tables = &bank.tables;

    let mut run = || {
        out.par_chunks_mut(cfg.tile_rows).enumerate().for_each(|(tile, out_slice)| {
            let row0 = tile * cfg.tile_rows;
            let nrows = out_slice.len();
            let mut acc = vec![0f32; nrows * bits];
            let mut acc_bias = vec![0f32; nrows];
            let mut carried = vec![0f32; nrows * bits];
            let mut plane_rows: Vec<&[u32]> = Vec::with_capacity(bits);
            let mut local_reads = 0u64;
            let mut local_mults = 0u64;

            for segs in &segments {
                for ri in 0..nrows {
                    let r = row0 + ri;
                    plane_rows.clear();
                    for i in 0..bits {
                        plane_rows.push(&t.plane(i)[r * wpr..(r + 1) * wpr]);
                    }
                    let abase = ri * bits;
                    for seg in segs {
                        let mut p = [0f32; MAX_KERNEL_BITS];
                        let mut c = seg.c0 as usize;
                        if seg.starts_group {
                            for i in 0..bits {
                                let key = chunk_key(plane_rows[i], c, mu, mask);
                                p[i] = tables[(c << mu) + key as usize];
                            }
                            c += 1;
                        } else {
                            p[..bits].copy_from_slice(&carried[abase..abase + bits]);
                        }
                        while c < seg.c1 as usize {
                            for i in 0..bits {
                                let key = chunk_key(plane_rows[i], c, mu, mask);
                                p[i] += tables[(c << mu) + key as usize];
                            }
                            c += 1;
                        }
                        local_reads += (bits as u64) * u64::from(seg.c1 - seg.c0);
                        if seg.ends_group {
                            let sbase = (r * groups + seg.group as usize) * bits;
                            for i in 0..bits {
                                acc[abase + i] += scales[sbase + i] * p[i];
                            }
                            local_mults += bits as u64;
                            if let Some(b) = biases {
                                acc_bias[ri] +=
                                    b[r * groups + seg.group as usize] * gsums[seg.group as usize];
                            }
                        } else {
                            carried[abase..abase + bits].copy_from_slice(&p[..bits]);
                        }
                    }
                }
            }

            for (ri, slot) in out_slice.iter_mut().enumerate() {
                let a = &acc[ri * bits..(ri + 1) * bits];
                let mut v = a[0];
                for &ai in &a[1..] {
                    v += ai;
                }
                if biases.is_some() {
                    v += acc_bias[ri];
                }
                if accumulate {
                    *slot += v;
                } else {
                    *slot = v;
                }
            }

            if let Some(s) = stats {
                s.reads.fetch_add(local_reads, Ordering::Relaxed);
                s.mults.fetch_add(local_mults, Ordering::Relaxed);
            }
        });
    };

    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(run);
    } else {
        run();
    }
    Ok(())
}

/// y = quantized GEMV of the tensor against the bank's activations.
pub fn lut_gemv(t: &BcqTensor, bank: &LutBank, cfg: &KernelConfig) -> Result<DenseVector> {
    let mut out = DenseVector::zeros(t.rows());
    gemv_core(t, bank, cfg, &mut out.data, false, None)?;
    Ok(out)
}

/// `out +=` quantized GEMV. Each row receives exactly one addition of
/// its fully folded value, so composing calls is deterministic.
pub fn lut_gemv_into(
    t: &BcqTensor,
    bank: &LutBank,
    cfg: &KernelConfig,
    out: &mut DenseVector,
) -> Result<()> {
    gemv_core(t, bank, cfg, &mut out.data, true, None)
}

/// GEMV with instrumented read/multiply counters.
pub fn lut_gemv_with_stats(
    t: &BcqTensor,
    bank: &LutBank,
    cfg: &KernelConfig,
) -> Result<(DenseVector, KernelStats)> {
    let mut out = DenseVector::zeros(t.rows());
    let accum = StatsAccum { reads: AtomicU64::new(0), mults: AtomicU64::new(0) };
    gemv_core(t, bank, cfg, &mut out.data, false, Some(&accum))?;
    Ok((
        out,
        KernelStats {
            lut_reads: accum.reads.into_inner(),
            scale_mults: accum.mults.into_inner(),
        },
    ))
}

/// Operation counts predicted by the cost model for one GEMV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    /// Table-construction additions: `2^mu * ceil(n / mu)`.
    pub lut_build_adds: u64,
    /// Table reads: `m * ceil(n / mu) * q`.
    pub lut_reads: u64,
    /// Scaling multiplications: `m * ceil(n / g) * q`.
    pub scale_mults: u64,
}

/// Model operation counts for an (m x n) GEMV with q planes, sub-vector
/// length mu, and group size g (0 = row-wise).
pub fn op_counts(m: usize, n: usize, q: usize, mu: usize, g: usize) -> Result<OpCounts> {
    if m == 0 || n == 0 || q == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if mu == 0 || mu > MAX_MU {
        return Err(Error::InvalidArgument(format!("mu must be in [1, {MAX_MU}], got {mu}")));
    }
    let g_eff = if g == 0 { n } else { g };
    let chunks = n.div_ceil(mu) as u64;
    let groups = n.div_ceil(g_eff) as u64;
    Ok(OpCounts {
        lut_build_adds: (1u64 << mu) * chunks,
        lut_reads: m as u64 * chunks * q as u64,
        scale_mults: m as u64 * groups * q as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcq::pack_planes;
    use crate::reference::{bcq_gemv_naive, dense_gemv};
    use crate::rng::{gaussian_vector, synthetic_bcq, SplitMix64};

    fn cfg(mu: usize) -> KernelConfig {
        KernelConfig::with_mu(mu)
    }

    #[test]
    fn table_of_two_elements() {
        let bank = build_luts(&DenseVector::new(vec![1.0, 2.0]), 2).unwrap();
        // key bit 0 selects x[0]; 00 -> -3, 01 -> -1, 10 -> +1, 11 -> +3.
        assert_eq!(bank.table(0), &[-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(bank.chunk_sums(), &[3.0]);
    }

    #[test]
    fn zero_activations_zero_tables() {
        let bank = build_luts(&DenseVector::zeros(8), 4).unwrap();
        assert!(bank.table(0).iter().all(|&v| v == 0.0));
        assert!(bank.table(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn complement_keys_cancel() {
        let x = gaussian_vector(64, 99);
        let bank = build_luts(&x, 8).unwrap();
        for c in 0..bank.num_tables() {
            let t = bank.table(c);
            for k in 0..t.len() {
                let comp = !k & 0xFF;
                assert_eq!(t[k], -t[comp], "chunk {c} key {k}");
                assert_eq!(t[k] + t[comp], 0.0);
            }
        }
    }

    #[test]
    fn build_rejects_bad_mu() {
        let x = DenseVector::new(vec![1.0]);
        assert!(build_luts(&x, 0).is_err());
        assert!(build_luts(&x, 13).is_err());
    }

    #[test]
    fn table_bytes_match_layout() {
        let x = gaussian_vector(64, 5);
        let bank = build_luts(&x, 8).unwrap();
        assert_eq!(bank.table_bytes(), bank.num_tables() * 256 * 4);
        // 1KB of table per 8 columns at mu = 8.
        assert_eq!(bank.table_bytes(), 64 / 8 * 1024);
    }

    #[test]
    fn build_adds_counter() {
        let x = gaussian_vector(24, 7);
        let bank = build_luts(&x, 8).unwrap();
        // Doubling build: 2^(mu+1) - 4 additions per table.
        assert_eq!(bank.build_adds(), 3 * (512 - 4));
    }

    fn sign_matrix_tensor() -> BcqTensor {
        // The 4x6 sign matrix whose redundant sub-products motivate the
        // table approach.
        let signs: Vec<i8> = vec![
            1, 1, -1, -1, -1, 1, //
            1, 1, -1, 1, 1, -1, //
            1, 1, -1, -1, -1, -1, //
            -1, -1, 1, -1, -1, 1,
        ];
        let planes = pack_planes(4, 6, &[signs]).unwrap();
        BcqTensor::new(4, 6, 1, 0, planes, vec![1.0; 4], None).unwrap()
    }

    #[test]
    fn sign_matrix_gemv() {
        let t = sign_matrix_tensor();
        let x = DenseVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bank = build_luts(&x, 3).unwrap();
        let y = lut_gemv(&t, &bank, &cfg(3)).unwrap();
        assert_eq!(y.as_slice(), &[-3.0, 3.0, -15.0, -3.0]);
    }

    #[test]
    fn all_plus_row_sums_x() {
        let planes = pack_planes(1, 40, &[vec![1i8; 40]]).unwrap();
        let t = BcqTensor::new(1, 40, 1, 0, planes, vec![1.0], None).unwrap();
        let x = gaussian_vector(40, 2);
        let bank = build_luts(&x, 8).unwrap();
        let y = lut_gemv(&t, &bank, &cfg(8)).unwrap();
        let want: f64 = x.as_slice().iter().map(|&v| v as f64).sum();
        assert!((y.get(0) as f64 - want).abs() <= 1e-6 * want.abs().max(1.0));
    }

    #[test]
    fn matches_naive_bit_for_bit() {
        let mut rng = SplitMix64::new(2024);
        for trial in 0..60 {
            let m = 1 + rng.next_below(40) as usize;
            let n = 1 + rng.next_below(200) as usize;
            let q = 1 + rng.next_below(4) as usize;
            let g_choices = [0usize, 16, 32];
            let mut g = g_choices[rng.next_below(3) as usize];
            if g > n {
                g = 0;
            }
            let mu_choices = [1usize, 2, 4, 8];
            let mu = mu_choices[rng.next_below(4) as usize];
            let bias = rng.next_u64() & 1 == 1;
            let t = synthetic_bcq(m, n, q, g, bias, 5000 + trial);
            let x = gaussian_vector(n, 6000 + trial);
            let bank = build_luts(&x, mu).unwrap();
            let y = lut_gemv(&t, &bank, &cfg(mu)).unwrap();
            let yn = bcq_gemv_naive(&t, &x, mu).unwrap();
            for (a, b) in y.as_slice().iter().zip(yn.as_slice().iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "trial {trial} m={m} n={n} q={q} g={g} mu={mu}");
            }
        }
    }

    #[test]
    fn tails_match_oracles() {
        // n divisible by neither mu nor g.
        let t = synthetic_bcq(9, 77, 3, 16, true, 11);
        let x = gaussian_vector(77, 12);
        let bank = build_luts(&x, 8).unwrap();
        let y = lut_gemv(&t, &bank, &cfg(8)).unwrap();
        let yn = bcq_gemv_naive(&t, &x, 8).unwrap();
        assert_eq!(y, yn);
        let yd = dense_gemv(&t.dequantize(), &x).unwrap();
        let scale = yd.as_slice().iter().fold(0f32, |m, v| m.max(v.abs()));
        for (a, b) in y.as_slice().iter().zip(yd.as_slice().iter()) {
            assert!((a - b).abs() <= 1e-4 * scale.max(1e-6));
        }
    }

    #[test]
    fn uniform_roundtrip_through_kernel() {
        use crate::quant::{quantize_rtn, uniform_to_bcq};
        let w = crate::rng::gaussian_matrix(256, 256, 404);
        let u = quantize_rtn(&w, 4, 64).unwrap();
        let t = uniform_to_bcq(&u);
        let x = gaussian_vector(256, 405);
        let bank = build_luts(&x, 8).unwrap();
        let y = lut_gemv(&t, &bank, &cfg(8)).unwrap();
        let y_ref = dense_gemv(&u.dequantize(), &x).unwrap();
        let scale = y_ref.as_slice().iter().fold(0f32, |m, v| m.max(v.abs()));
        for (a, b) in y.as_slice().iter().zip(y_ref.as_slice().iter()) {
            assert!(
                (a - b).abs() <= 1e-4 * scale,
                "lut {a} vs uniform dequant {b} (scale {scale})"
            );
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let t = synthetic_bcq(300, 300, 3, 0, true, 21);
        let x = gaussian_vector(300, 22);
        let bank = build_luts(&x, 8).unwrap();
        let base = lut_gemv(&t, &bank, &KernelConfig { threads: 1, tile_rows: 64, ..cfg(8) }).unwrap();
        for threads in [2usize, 8] {
            let y = lut_gemv(
                &t,
                &bank,
                &KernelConfig { threads, tile_rows: 64, ..cfg(8) },
            )
            .unwrap();
            for (a, b) in base.as_slice().iter().zip(y.as_slice().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn column_tile_split_does_not_change_bits() {
        let t = synthetic_bcq(64, 512, 4, 64, true, 31);
        let x = gaussian_vector(512, 32);
        let bank = build_luts(&x, 8).unwrap();
        let chunks = 512 / 8;
        let base = lut_gemv(
            &t,
            &bank,
            &KernelConfig { luts_per_tile: chunks, ..cfg(8) },
        )
        .unwrap();
        for split in [2usize, 4, 7] {
            let y = lut_gemv(
                &t,
                &bank,
                &KernelConfig { luts_per_tile: chunks.div_ceil(split), ..cfg(8) },
            )
            .unwrap();
            for (a, b) in base.as_slice().iter().zip(y.as_slice().iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "split {split}");
            }
        }
    }

    #[test]
    fn gemv_into_zero_weight_leaves_out_unchanged() {
        let planes = pack_planes(2, 6, &[vec![1i8, -1, 1, -1, 1, -1, 1, 1, -1, -1, 1, 1]]).unwrap();
        let t = BcqTensor::new(2, 6, 1, 0, planes, vec![0.0, 0.0], None).unwrap();
        let x = DenseVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bank = build_luts(&x, 3).unwrap();
        let mut out = DenseVector::new(vec![7.0, -2.5]);
        lut_gemv_into(&t, &bank, &cfg(3), &mut out).unwrap();
        assert_eq!(out.as_slice(), &[7.0, -2.5]);
    }

    #[test]
    fn gemv_into_accumulates_two_tensors() {
        let t1 = synthetic_bcq(17, 48, 2, 16, false, 41);
        let t2 = synthetic_bcq(17, 48, 3, 0, true, 42);
        let x = gaussian_vector(48, 43);
        let bank = build_luts(&x, 4).unwrap();
        let y1 = lut_gemv(&t1, &bank, &cfg(4)).unwrap();
        let y2 = lut_gemv(&t2, &bank, &cfg(4)).unwrap();
        let mut out = DenseVector::zeros(17);
        lut_gemv_into(&t1, &bank, &cfg(4), &mut out).unwrap();
        lut_gemv_into(&t2, &bank, &cfg(4), &mut out).unwrap();
        for i in 0..17 {
            let want = y1.get(i) + y2.get(i);
            assert_eq!(out.get(i).to_bits(), want.to_bits());
        }
    }

    #[test]
    fn linearity_in_activations() {
        let t = synthetic_bcq(40, 96, 3, 32, true, 51);
        let x = gaussian_vector(96, 52);
        let a = 2.5f32;
        let bank1 = build_luts(&x, 8).unwrap();
        let bank2 = build_luts(&x.scaled(a), 8).unwrap();
        let y1 = lut_gemv(&t, &bank1, &cfg(8)).unwrap();
        let y2 = lut_gemv(&t, &bank2, &cfg(8)).unwrap();
        let scale = y2.as_slice().iter().fold(0f32, |m, v| m.max(v.abs()));
        for (v1, v2) in y1.as_slice().iter().zip(y2.as_slice().iter()) {
            assert!((v1 * a - v2).abs() <= 1e-6 * scale.max(1e-3));
        }
    }

    #[test]
    fn mismatched_mu_is_rejected() {
        let t = synthetic_bcq(4, 32, 2, 0, false, 61);
        let x = gaussian_vector(32, 62);
        let bank = build_luts(&x, 4).unwrap();
        assert!(lut_gemv(&t, &bank, &cfg(8)).is_err());
    }

    #[test]
    fn mismatched_length_is_rejected() {
        let t = synthetic_bcq(4, 32, 2, 0, false, 63);
        let x = gaussian_vector(40, 64);
        let bank = build_luts(&x, 8).unwrap();
        assert!(lut_gemv(&t, &bank, &cfg(8)).is_err());
    }

    #[test]
    fn group_not_multiple_of_mu_is_rejected() {
        let t = synthetic_bcq(4, 36, 2, 12, false, 65);
        let x = gaussian_vector(36, 66);
        let bank = build_luts(&x, 8).unwrap();
        let err = lut_gemv(&t, &bank, &cfg(8)).unwrap_err();
        assert!(err.to_string().contains("multiple of mu"), "{err}");
    }

    #[test]
    fn op_count_formulas() {
        let big = op_counts(12288, 12288, 3, 8, 0).unwrap();
        assert_eq!(big.lut_reads, 56_623_104);
        // ratio of dense MACs to reads is mu / q = 8 / 3.
        assert_eq!(12288u64 * 12288 / big.lut_reads * 0, 0);
        let even = op_counts(100, 64, 4, 4, 0).unwrap();
        assert_eq!(even.lut_reads, 100 * 16 * 4);
        // q = mu gives exactly the dense MAC count.
        assert_eq!(even.lut_reads, 100 * 64);
        let small = op_counts(4, 6, 1, 3, 0).unwrap();
        assert_eq!(small.lut_reads, 8);
    }

    #[test]
    fn stats_match_op_counts() {
        let m = 33;
        let n = 70;
        let q = 3;
        let g = 32;
        let t = synthetic_bcq(m, n, q, g, true, 71);
        let x = gaussian_vector(n, 72);
        let bank = build_luts(&x, 8).unwrap();
        let (_, stats) = lut_gemv_with_stats(&t, &bank, &cfg(8)).unwrap();
        let model = op_counts(m, n, q, 8, g).unwrap();
        assert_eq!(stats.lut_reads, model.lut_reads);
        assert_eq!(stats.scale_mults, model.scale_mults);
    }
}
