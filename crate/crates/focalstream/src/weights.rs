//! Weight files.
//!
//! ```text
//! magic    b"FCSW"
//! version  u16 LE (1)
//! config   u32 LE byte length, then the key=value config text (UTF-8)
//! count    u32 LE number of tensors
//! tensor   u16 LE name length, name (UTF-8), u8 rank, rank x u32 LE dims,
//!          prod(dims) x f32 LE values
//! ```
//!
//! Tensors are written in parameter traversal order and loaded by name.

use std::collections::BTreeMap;
use std::path::Path;

use focalstream_core::distill::Teacher;
use focalstream_core::params::{load_named, named_params, Parameters};
use focalstream_core::{Codec, CodecConfig, Tensor};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"FCSW";
pub const VERSION: u16 = 1;

pub fn to_bytes<P: Parameters + ?Sized>(config: &CodecConfig, model: &P) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let params = named_params(model);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Model("weight file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CliError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn text(&mut self, n: usize) -> Result<&'a str, CliError> {
        std::str::from_utf8(self.take(n)?).map_err(|_| CliError::Model("weight file has non-UTF-8 text".into()))
    }
}

/// Parsed weight file: its config and tensors by name.
pub struct WeightFile {
    pub config: CodecConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

pub fn from_bytes(bytes: &[u8]) -> Result<WeightFile, CliError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(CliError::Model("not a weight file (bad magic)".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(CliError::Model(format!("unsupported weight file version {version}")));
    }
    let len = c.u32()? as usize;
    let config = CodecConfig::from_text(c.text(len)?).map_err(|e| CliError::Model(format!("embedded config: {e}")))?;
    let count = c.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = c.text(len)?.to_string();
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| CliError::Model(format!("tensor `{name}` is too large")))?;
        let raw = c.take(n.checked_mul(4).ok_or_else(|| CliError::Model("weight file truncated".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::new(&shape, data).map_err(|e| CliError::Model(e.to_string()))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(CliError::Model(format!("tensor `{name}` appears twice")));
        }
    }
    if c.pos != bytes.len() {
        return Err(CliError::Model("trailing bytes after the last tensor".into()));
    }
    Ok(WeightFile { config, tensors })
}

impl WeightFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
        from_bytes(&bytes)
    }

    pub fn into_codec(self) -> Result<Codec, CliError> {
        let mut codec = Codec::new(self.config, 0).map_err(|e| CliError::Model(e.to_string()))?;
        load_named(&mut codec, &self.tensors).map_err(|e| CliError::Model(e.to_string()))?;
        Ok(codec)
    }

    pub fn into_teacher(self) -> Result<Teacher, CliError> {
        let mut teacher = Teacher::new(&self.config, 0).map_err(|e| CliError::Model(e.to_string()))?;
        load_named(&mut teacher, &self.tensors).map_err(|e| CliError::Model(e.to_string()))?;
        Ok(teacher)
    }
}

pub fn save<P: Parameters + ?Sized>(path: &Path, config: &CodecConfig, model: &P) -> Result<(), CliError> {
    std::fs::write(path, to_bytes(config, model))?;
    Ok(())
}

pub fn load_codec(path: &Path) -> Result<Codec, CliError> {
    WeightFile::read(path)?.into_codec()
}
