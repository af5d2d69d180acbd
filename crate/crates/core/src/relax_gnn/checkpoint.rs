//! Binary checkpoint codec (`*.relax.bin`).
//!
//! Layout, all little-endian: magic `RLXM`, u16 version, hyperparameters
//! (u32 labels, hidden, layers, heads; f64 cost scale), training metadata
//! (u32 epoch, f64 loss), u32 slice count followed by one
//! `(u16 name length, name, u32 rows, u32 cols)` record per slice, u64
//! parameter count, the f64 payload, then a CRC32 of everything before it.

use std::io::{self, ErrorKind};
use std::path::Path;

use super::{ModelConfig, ModelError, RelaxModel};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"RLXM";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RelaxModel,
    pub epoch: u32,
    pub loss: f64,
}

impl Checkpoint {
    pub fn new(model: RelaxModel) -> Self {
        Self { model, epoch: 0, loss: f64::NAN }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.model.config();
        let mut out = Vec::with_capacity(64 + self.model.param_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [cfg.labels, cfg.hidden, cfg.layers, cfg.heads] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&cfg.cost_scale.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.loss.to_le_bytes());
        out.extend_from_slice(&(self.model.layout().len() as u32).to_le_bytes());
        for s in self.model.layout() {
            out.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&(s.rows as u32).to_le_bytes());
            out.extend_from_slice(&(s.cols as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.model.param_count() as u64).to_le_bytes());
        for p in self.model.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(invalid("bad magic"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let labels = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let heads = r.u32()? as usize;
        let cost_scale = r.f64()?;
        let epoch = r.u32()?;
        let loss = r.f64()?;
        let config = ModelConfig { labels, hidden, layers, heads, cost_scale };
        config.validate()?;
        let expected = super::param_layout(&config);
        let n_slices = r.u32()? as usize;
        if n_slices != expected.len() {
            return Err(invalid("slice table does not match hyperparameters"));
        }
        for s in &expected {
            let len = r.u16()? as usize;
            let name = r.take(len)?;
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if name != s.name.as_bytes() || rows != s.rows || cols != s.cols {
                return Err(invalid("slice table does not match hyperparameters"));
            }
        }
        let count = r.u64()? as usize;
        let total = expected.last().map_or(0, |s| s.offset + s.len());
        if count != total {
            return Err(invalid("parameter count does not match hyperparameters"));
        }
        let payload = r.take(count.checked_mul(8).ok_or_else(|| invalid("parameter count overflow"))?)?;
        let params: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let body_end = r.pos;
        let crc = r.u32()?;
        if crc != crc32fast::hash(&bytes[..body_end]) {
            return Err(invalid("checksum mismatch"));
        }
        if r.pos != bytes.len() {
            return Err(invalid("trailing bytes after checksum"));
        }
        Ok(Self { model: RelaxModel::from_parts(config, params)?, epoch, loss })
    }
}

fn invalid(msg: &str) -> ModelError {
    ModelError::Io(io::Error::new(ErrorKind::InvalidData, msg.to_string()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Io(io::Error::new(ErrorKind::UnexpectedEof, "checkpoint is truncated")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_model(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), ModelError> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
