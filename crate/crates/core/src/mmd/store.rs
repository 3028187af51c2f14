//! `DMTV` feature-matrix files.
//!
//! ```text
//! "DMTV"  u32 version (=1)  u64 K  u64 D  u64 m  u64 n
//! f32 V[K][D]
//! optional: "DMTG" f64 G[K][K]
//! ```
//!
//! All little-endian. The loader requires `K = m + n + 1`. Single vectors
//! (traversal coefficients, traversed features) use the same layout with
//! `K = 1`, `m = n = 0`.

use std::io::{Read, Write};

use super::{FeatureMatrix, Gram};
use crate::error::{Error, Result};

pub const FEATURES_MAGIC: &[u8; 4] = b"DMTV";
pub const GRAM_MAGIC: &[u8; 4] = b"DMTG";
pub const FEATURES_VERSION: u32 = 1;

fn write_header<W: Write>(w: &mut W, k: usize, d: usize, m: usize, n: usize) -> Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    w.write_all(&FEATURES_VERSION.to_le_bytes())?;
    for v in [k, d, m, n] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    Ok(())
}

/// Write `V` (as f32) and, when `include_gram` is set and a Gram matrix is
/// present, the `DMTG` section.
pub fn write_features<W: Write>(mut w: W, features: &FeatureMatrix, include_gram: bool) -> Result<()> {
    write_header(&mut w, features.k(), features.d(), features.m(), features.n())?;
    let mut buf = Vec::with_capacity(features.rows().len() * 4);
    for &v in features.rows() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    if include_gram {
        if let Some(g) = features.gram() {
            write_gram_section(&mut w, g)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gram_section<W: Write>(mut w: W, gram: &Gram) -> Result<()> {
    w.write_all(GRAM_MAGIC)?;
    let mut buf = Vec::with_capacity(gram.data().len() * 8);
    for &v in gram.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!("truncated file while reading {field}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, field: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, field)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::format(format!("{field} {v} too large")))
    }
}

/// Parsed file contents plus the byte length of the header and `V` data.
pub(crate) struct RawFeatures {
    pub features: FeatureMatrix,
    pub v_section_len: usize,
}

pub(crate) fn parse_features(buf: &[u8]) -> Result<RawFeatures> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != FEATURES_MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != FEATURES_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let k = r.u64("K")?;
    let d = r.u64("D")?;
    let m = r.u64("m")?;
    let n = r.u64("n")?;
    if m.checked_add(n).and_then(|s| s.checked_add(1)) != Some(k) {
        return Err(Error::format(format!("K = {k} does not equal m + n + 1 = {m} + {n} + 1")));
    }
    if d == 0 {
        return Err(Error::format("D is zero"));
    }
    let count = k
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::format("K*D overflows"))?;
    let data = r.take(count, "V data")?;
    let rows: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let v_section_len = r.pos;
    let mut features = FeatureMatrix::from_rows(rows, d, m, n).map_err(|e| Error::format(e.to_string()))?;
    if r.pos < buf.len() {
        if r.take(4, "Gram magic")? != GRAM_MAGIC {
            return Err(Error::format("bad Gram section magic"));
        }
        let bytes = r.take(k * k * 8, "Gram data")?;
        let g: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        features.set_gram(Gram::from_data(k, g).map_err(|e| Error::format(e.to_string()))?)?;
        if r.pos != buf.len() {
            return Err(Error::format(format!("{} trailing bytes", buf.len() - r.pos)));
        }
    }
    Ok(RawFeatures {
        features,
        v_section_len,
    })
}

/// Length in bytes of the header plus `V` data, i.e. where a Gram section
/// starts.
pub fn features_section_len(buf: &[u8]) -> Result<usize> {
    Ok(parse_features(buf)?.v_section_len)
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(parse_features(&buf)?.features)
}

pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    let fm = FeatureMatrix::from_rows(v.to_vec(), v.len(), 0, 0)?;
    write_features(&mut w, &fm, false)
}

pub fn read_vector<R: Read>(r: R) -> Result<Vec<f64>> {
    let fm = read_features(r)?;
    if fm.k() != 1 {
        return Err(Error::format(format!("expected a single vector, file holds {} rows", fm.k())));
    }
    Ok(fm.rows().to_vec())
}
