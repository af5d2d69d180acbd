//! SMAP v1 binary map format.
//!
//! Layout (little-endian): magic `SMAP`, u32 width, u32 height, f32 resolution,
//! u8 label count M, then M entries of (u8 name length, UTF-8 name, u8 class code),
//! then width*height label bytes.

use std::fs;
use std::path::Path;

use super::{LabelInfo, MapError, RegionClass, SemanticGrid};

pub const MAGIC: &[u8; 4] = b"SMAP";

pub fn encode_map(grid: &SemanticGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + grid.label_count() * 16 + grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&grid.resolution_f32().to_le_bytes());
    out.push(grid.label_count() as u8);
    for info in grid.label_table() {
        let name = info.name.as_bytes();
        assert!(name.len() <= 255, "label name longer than 255 bytes");
        out.push(name.len() as u8);
        out.extend_from_slice(name);
        out.push(info.class.code());
    }
    out.extend_from_slice(grid.labels());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MapError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            MapError::Format(format!("truncated payload while reading {what}"))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, MapError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, MapError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_map(bytes: &[u8]) -> Result<SemanticGrid, MapError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(MapError::Format("bad magic, expected SMAP".into()));
    }
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let resolution = f32::from_le_bytes(r.take(4, "resolution")?.try_into().unwrap());
    let m = r.u8("label count")? as usize;
    if m == 0 {
        return Err(MapError::Format("label table is empty".into()));
    }
    let mut table = Vec::with_capacity(m);
    for _ in 0..m {
        let len = r.u8("label name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "label name")?)
            .map_err(|_| MapError::Format("label name is not UTF-8".into()))?
            .to_owned();
        let code = r.u8("class code")?;
        let class = RegionClass::from_code(code)
            .ok_or_else(|| MapError::Format(format!("unknown class code {code}")))?;
        table.push(LabelInfo { name, class });
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| MapError::Format("grid dimensions overflow".into()))?;
    let labels = r.take(n, "label payload")?.to_vec();
    if r.pos != bytes.len() {
        return Err(MapError::Format(format!(
            "{} trailing bytes after label payload",
            bytes.len() - r.pos
        )));
    }
    SemanticGrid::new(width, height, resolution, labels, table).map_err(|e| match e {
        MapError::Invalid(msg) => MapError::Format(msg),
        other => other,
    })
}

pub fn load_map(path: impl AsRef<Path>) -> Result<SemanticGrid, MapError> {
    decode_map(&fs::read(path)?)
}

pub fn save_map(grid: &SemanticGrid, path: impl AsRef<Path>) -> Result<(), MapError> {
    fs::write(path, encode_map(grid))?;
    Ok(())
}
