//! `SFFM` binary layout, all little-endian:
//!
//! ```text
//! magic "SFFM" | version u16 | kind u8 | K u32 | W u32 | pad_columns u32
//! K*W f64 values, row-major | K f64 bin frequencies | W f64 column times
//! ```

use std::io::{Read, Write};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFFM";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_feature_matrix<W: Write>(m: &FeatureMatrix, mut w: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(19 + 8 * (m.values.len() + m.rows() + m.width()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(m.kind.code());
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.pad_columns as u32).to_le_bytes());
    for v in m
        .values
        .iter()
        .chain(&m.bin_freqs_hz)
        .chain(&m.column_times_s)
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_feature_matrix<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("feature matrix: {e}")))?;
    let bad = |msg: &str| Error::Format(format!("feature matrix: {msg}"));
    if bytes.len() < 19 || &bytes[..4] != MAGIC {
        return Err(bad("missing SFFM header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = FeatureKind::from_code(bytes[6]).ok_or_else(|| bad("unknown kind"))?;
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, width, pad) = (u32_at(7), u32_at(11), u32_at(15));
    let count = rows * width + rows + width;
    if bytes.len() != 19 + 8 * count {
        return Err(bad(&format!(
            "expected {} bytes for {rows} x {width}, found {}",
            19 + 8 * count,
            bytes.len()
        )));
    }
    if width == 0 || pad >= width {
        return Err(bad(&format!("{pad} pad columns in width {width}")));
    }
    let mut floats = bytes[19..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let values: Vec<f64> = floats.by_ref().take(rows * width).collect();
    let bin_freqs_hz: Vec<f64> = floats.by_ref().take(rows).collect();
    let column_times_s: Vec<f64> = floats.collect();
    Ok(FeatureMatrix {
        values,
        kind,
        bin_freqs_hz,
        column_times_s,
        pad_columns: pad,
    })
}

impl FeatureMatrix {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_feature_matrix(self, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_feature_matrix(std::io::BufReader::new(file))
    }
}
