//! `SFFN` checkpoint layout, all little-endian:
//!
//! ```text
//! magic "SFFN" | version u16 | config digest [32] | config len u32 | config JSON
//! adam step u64 | tensor count u32
//! per tensor: name len u16 | name | ndim u8 | dims u32 * ndim | f64 data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{ModelConfig, ModelState};
use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFFN";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(state: &ModelState, mut w: W) -> std::io::Result<()> {
    let json = state.config().to_json();
    let tensors = state.named_tensors();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&Sha256::digest(&json));
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&state.adam().t.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelState> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("checkpoint: missing SFFN header".into()));
    }
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint: unsupported version {version}"
        )));
    }
    let digest: [u8; 32] = c.take(32)?.try_into().unwrap();
    let json_len = c.u32()? as usize;
    let json = c.take(json_len)?;
    if Sha256::digest(json).as_slice() != digest {
        return Err(Error::Format("checkpoint: config digest mismatch".into()));
    }
    let config: ModelConfig = serde_json::from_slice(json)?;
    let t = c.u64()?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::Format("checkpoint: tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = c.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("checkpoint: tensor {name} too large")))?;
        let data = c
            .take(n)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let tensor = Tensor::from_vec(&dims, data)
            .map_err(|e| Error::Format(format!("checkpoint: tensor {name}: {e}")))?;
        tensors.push((name, tensor));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("checkpoint: trailing bytes".into()));
    }
    ModelState::from_parts(config, tensors, t)
}

impl ModelState {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(self, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(std::io::BufReader::new(file))
    }
}
