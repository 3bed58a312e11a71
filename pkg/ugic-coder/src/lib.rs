//! Carry-less byte-oriented range coder and the unified bitstream container.
//!
//! The coder state is 64-bit with 16-bit frequency precision. When the
//! interval straddles a top-byte boundary and gets too small, the range is
//! clamped to the boundary instead of propagating a carry, so emitted bytes
//! are final. The arithmetic is masked u64 throughout and byte-identical to
//! the Python fallback shipped with the primary package.

use thiserror::Error;

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION_BITS;
const TOP: u64 = 1 << 56;
const BOT: u64 = 1 << 48;

#[derive(Debug, Error)]
pub enum CoderError {
    #[error("symbol {0} out of range for alphabet of {1}")]
    SymbolOutOfRange(i32, usize),
    #[error("cdf table index {0} out of range")]
    BadTableIndex(i32),
    #[error("corrupt stream: {0}")]
    CorruptStream(&'static str),
    #[error("invalid cdf table: {0}")]
    BadCdf(&'static str),
}

/// Per-table quantized cumulative frequencies: `alphabet + 1` entries,
/// starting at 0, ending at `TOTAL`, every symbol frequency >= 1.
pub struct CdfSet {
    rows: Vec<Vec<u32>>,
}

impl CdfSet {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self, CoderError> {
        for row in &rows {
            if row.len() < 2 {
                return Err(CoderError::BadCdf("row shorter than 2 entries"));
            }
            if row[0] != 0 {
                return Err(CoderError::BadCdf("row does not start at 0"));
            }
            if *row.last().unwrap() != TOTAL {
                return Err(CoderError::BadCdf("row does not end at 2^16"));
            }
            if row.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CoderError::BadCdf("zero-frequency symbol"));
            }
        }
        Ok(CdfSet { rows })
    }

    pub fn alphabet(&self) -> usize {
        self.rows[0].len() - 1
    }

    fn row(&self, table: i32) -> Result<&[u32], CoderError> {
        self.rows
            .get(table as usize)
            .map(|r| r.as_slice())
            .ok_or(CoderError::BadTableIndex(table))
    }
}

pub fn range_encode(
    symbols: &[i32],
    cdfs: &CdfSet,
    index: &[i32],
) -> Result<Vec<u8>, CoderError> {
    if symbols.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(symbols.len());
    let mut low: u64 = 0;
    let mut rng: u64 = u64::MAX;
    for (&s, &t) in symbols.iter().zip(index) {
        let row = cdfs.row(t)?;
        if s < 0 || (s as usize) + 1 >= row.len() {
            return Err(CoderError::SymbolOutOfRange(s, row.len() - 1));
        }
        let c_lo = row[s as usize] as u64;
        let c_hi = row[s as usize + 1] as u64;
        let r = rng >> PRECISION_BITS;
        low = low.wrapping_add(r.wrapping_mul(c_lo));
        rng = r * (c_hi - c_lo);
        loop {
            if (low ^ low.wrapping_add(rng)) < TOP {
                // top byte settled
            } else if rng < BOT {
                rng = low.wrapping_neg() & (BOT - 1); // carry-less clamp
            } else {
                break;
            }
            out.push((low >> 56) as u8);
            low <<= 8;
            rng <<= 8;
        }
    }
    for _ in 0..8 {
        out.push((low >> 56) as u8);
        low <<= 8;
    }
    Ok(out)
}

pub fn range_decode(
    data: &[u8],
    cdfs: &CdfSet,
    index: &[i32],
    count: usize,
) -> Result<Vec<i32>, CoderError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut pos = 0usize;
    let mut code: u64 = 0;
    for _ in 0..8 {
        let byte = *data
            .get(pos)
            .ok_or(CoderError::CorruptStream("payload shorter than coder state"))?;
        code = (code << 8) | byte as u64;
        pos += 1;
    }
    let mut low: u64 = 0;
    let mut rng: u64 = u64::MAX;
    let mut symbols = Vec::with_capacity(count);
    for i in 0..count {
        let row = cdfs.row(index[i])?;
        let r = rng >> PRECISION_BITS;
        let cum = code.wrapping_sub(low) / r;
        if cum >= TOTAL as u64 {
            return Err(CoderError::CorruptStream(
                "decoded cumulative frequency out of range",
            ));
        }
        let s = row.partition_point(|&v| (v as u64) <= cum) - 1;
        let c_lo = row[s] as u64;
        let c_hi = row[s + 1] as u64;
        symbols.push(s as i32);
        low = low.wrapping_add(r.wrapping_mul(c_lo));
        rng = r * (c_hi - c_lo);
        loop {
            if (low ^ low.wrapping_add(rng)) < TOP {
            } else if rng < BOT {
                rng = low.wrapping_neg() & (BOT - 1);
            } else {
                break;
            }
            let byte = *data
                .get(pos)
                .ok_or(CoderError::CorruptStream("truncated payload"))?;
            code = (code << 8) | byte as u64;
            pos += 1;
            low <<= 8;
            rng <<= 8;
        }
    }
    Ok(symbols)
}

// -- unified bitstream container --------------------------------------------

pub const MAGIC: &[u8; 4] = b"UGIC";
pub const VERSION: u16 = 1;

/// Fixed header of the unified stream; the preference condition is
/// deliberately absent (one stream serves every decode variant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub orig_h: u32,
    pub orig_w: u32,
    pub padded_h: u32,
    pub padded_w: u32,
    pub config_digest: [u8; 16],
    pub z_support: u16,
    pub y_support: u16,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("length mismatch: {0}")]
    LengthMismatch(&'static str),
}

pub fn pack_bitstream(header: &StreamHeader, segments: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&header.orig_h.to_le_bytes());
    out.extend_from_slice(&header.orig_w.to_le_bytes());
    out.extend_from_slice(&header.padded_h.to_le_bytes());
    out.extend_from_slice(&header.padded_w.to_le_bytes());
    out.extend_from_slice(&header.config_digest);
    out.extend_from_slice(&header.z_support.to_le_bytes());
    out.extend_from_slice(&header.y_support.to_le_bytes());
    out.extend_from_slice(&(segments.len() as u16).to_le_bytes());
    for seg in segments {
        out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
    }
    for seg in segments {
        out.extend_from_slice(seg);
    }
    out
}

pub fn unpack_bitstream(data: &[u8]) -> Result<(StreamHeader, Vec<Vec<u8>>), StreamError> {
    const FIXED: usize = 4 + 2 + 4 * 4 + 16 + 2 + 2 + 2;
    if data.len() < FIXED {
        return Err(StreamError::LengthMismatch("shorter than fixed header"));
    }
    if &data[0..4] != MAGIC {
        return Err(StreamError::BadMagic);
    }
    let u16_at = |o: usize| u16::from_le_bytes([data[o], data[o + 1]]);
    let u32_at =
        |o: usize| u32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(StreamError::UnsupportedVersion(version));
    }
    let mut digest = [0u8; 16];
    digest.copy_from_slice(&data[22..38]);
    let header = StreamHeader {
        version,
        orig_h: u32_at(6),
        orig_w: u32_at(10),
        padded_h: u32_at(14),
        padded_w: u32_at(18),
        config_digest: digest,
        z_support: u16_at(38),
        y_support: u16_at(40),
    };
    let n_seg = u16_at(42) as usize;
    let mut off = FIXED;
    if data.len() < off + 4 * n_seg {
        return Err(StreamError::LengthMismatch("truncated segment-length table"));
    }
    let lengths: Vec<usize> = (0..n_seg)
        .map(|i| u32_at(off + 4 * i) as usize)
        .collect();
    off += 4 * n_seg;
    if data.len() != off + lengths.iter().sum::<usize>() {
        return Err(StreamError::LengthMismatch("declared payload size mismatch"));
    }
    let mut segments = Vec::with_capacity(n_seg);
    for len in lengths {
        segments.push(data[off..off + len].to_vec());
        off += len;
    }
    Ok((header, segments))
}
