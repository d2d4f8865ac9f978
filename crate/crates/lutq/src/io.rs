//! On-disk formats.
//!
//! Quantized tensors (`LUTQ`, version 1, all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LUTQ"
//! 4       2     version (u16) = 1
//! 6       2     flags (u16); bit 0 = bias present
//! 8       4     m (u32) rows
//! 12      4     n (u32) cols
//! 16      1     q (u8) planes
//! 17      1     reserved = 0
//! 18      4     g (u32) group size, 0 = row-wise
//! 22      ...   q planes, each m rows of ceil(n/32) u32 words
//!         ...   scales, f32, [row][group][bit] order
//!         ...   biases, f32, [row][group] order (iff flag bit 0)
//! ```
//!
//! The total file size is fully determined by the header; loaders
//! reject any size mismatch.
//!
//! Dense matrices (`DENM`): magic, u32 rows, u32 cols, then row-major
//! f32 values, everything little-endian.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::bcq::BcqTensor;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

pub const QTENSOR_MAGIC: &[u8; 4] = b"LUTQ";
pub const QTENSOR_VERSION: u16 = 1;
pub const QTENSOR_HEADER_LEN: u64 = 22;
const FLAG_BIAS: u16 = 1;

pub const DENM_MAGIC: &[u8; 4] = b"DENM";

/// Exact file size for a tensor with the given shape.
pub fn qtensor_file_len(m: usize, n: usize, q: usize, g: usize, bias: bool) -> u64 {
    let wpr = n.div_ceil(32) as u64;
    let groups = n.div_ceil(if g == 0 { n } else { g }) as u64;
    let mut len = QTENSOR_HEADER_LEN;
    len += q as u64 * m as u64 * wpr * 4;
    len += m as u64 * groups * q as u64 * 4;
    if bias {
        len += m as u64 * groups * 4;
    }
    len
}

pub fn write_qtensor(path: &Path, t: &BcqTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(QTENSOR_MAGIC)?;
    w.write_all(&QTENSOR_VERSION.to_le_bytes())?;
    let flags: u16 = if t.has_bias() { FLAG_BIAS } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(t.rows() as u32).to_le_bytes())?;
    w.write_all(&(t.cols() as u32).to_le_bytes())?;
    w.write_all(&[t.bits() as u8, 0])?;
    w.write_all(&(t.group_size() as u32).to_le_bytes())?;
    for i in 0..t.bits() {
        for word in t.plane(i) {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    for s in t.scales() {
        w.write_all(&s.to_le_bytes())?;
    }
    if let Some(biases) = t.biases() {
        for b in biases {
            w.write_all(&b.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32_le(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
}

pub fn read_qtensor(path: &Path) -> Result<BcqTensor> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < QTENSOR_HEADER_LEN as usize {
        return Err(Error::Format(format!(
            "size mismatch: file is {} bytes, header needs {}",
            bytes.len(),
            QTENSOR_HEADER_LEN
        )));
    }
    if &bytes[0..4] != QTENSOR_MAGIC {
        return Err(Error::Format("bad magic, not a LUTQ file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != QTENSOR_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !FLAG_BIAS != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
    }
    let m = read_u32_le(&bytes, 8) as usize;
    let n = read_u32_le(&bytes, 12) as usize;
    let q = bytes[16] as usize;
    let g = read_u32_le(&bytes, 18) as usize;
    if m == 0 || n == 0 || q == 0 {
        return Err(Error::Format("header declares an empty tensor".into()));
    }
    if g > n {
        return Err(Error::Format(format!("group size {g} exceeds column count {n}")));
    }
    let bias = flags & FLAG_BIAS != 0;
    let expected = qtensor_file_len(m, n, q, g, bias);
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "size mismatch: file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }

    let wpr = n.div_ceil(32);
    let groups = n.div_ceil(if g == 0 { n } else { g });
    let mut off = QTENSOR_HEADER_LEN as usize;
    let mut planes = Vec::with_capacity(q);
    for _ in 0..q {
        let mut words = Vec::with_capacity(m * wpr);
        for _ in 0..m * wpr {
            words.push(read_u32_le(&bytes, off));
            off += 4;
        }
        planes.push(words);
    }
    let mut scales = Vec::with_capacity(m * groups * q);
    for _ in 0..m * groups * q {
        scales.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    let biases = if bias {
        let mut b = Vec::with_capacity(m * groups);
        for _ in 0..m * groups {
            b.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
            off += 4;
        }
        Some(b)
    } else {
        None
    };
    BcqTensor::new(m, n, q, g, planes, scales, biases)
        .map_err(|e| Error::Format(format!("invalid tensor payload: {e}")))
}

pub fn write_denm(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DENM_MAGIC)?;
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_denm(path: &Path) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Format("size mismatch: truncated DENM header".into()));
    }
    if &bytes[0..4] != DENM_MAGIC {
        return Err(Error::Format("bad magic, not a DENM file".into()));
    }
    let rows = read_u32_le(&bytes, 4) as usize;
    let cols = read_u32_le(&bytes, 8) as usize;
    let expected = 12 + rows as u64 * cols as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "size mismatch: file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut off = 12;
    for _ in 0..rows * cols {
        data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}
