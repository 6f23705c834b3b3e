//! Versioned binary container shared by all trained models.
//!
//! Layout: 4-byte magic `RPVM`, `u32` format version, `u8` model-type tag,
//! then a model-specific payload. All integers and floats are little-endian;
//! matrices are written row-major as 64-bit floats, so a save/load cycle is
//! bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RPVM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Sdae = 1,
    Dbow = 2,
    Classifier = 3,
}

impl ModelKind {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Sdae),
            2 => Ok(ModelKind::Dbow),
            3 => Ok(ModelKind::Classifier),
            other => Err(Error::Container(format!("unknown model-type tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sdae => "sdae",
            ModelKind::Dbow => "doc2vec",
            ModelKind::Classifier => "classifier",
        }
    }
}

/// Implemented by every model that can live in a container.
pub trait Persist: Sized {
    const KIND: ModelKind;

    fn write_payload(&self, w: &mut Writer);
    fn read_payload(r: &mut Reader<'_>) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.buf.push(Self::KIND as u8);
        self.write_payload(&mut w);
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Container("bad magic tag".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let kind = ModelKind::from_tag(r.u8()?)?;
        if kind != Self::KIND {
            return Err(Error::Container(format!(
                "wrong model type: file holds a {} model, expected {}",
                kind.name(),
                Self::KIND.name()
            )));
        }
        let model = Self::read_payload(&mut r)?;
        r.finish()?;
        Ok(model)
    }

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Container(format!(
                    "truncated file: needed {n} bytes at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Container(format!("length {v} out of range")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::Container(format!(
                "truncated file: array of {n} floats at offset {}",
                self.pos
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    /// `expected` values; errors if the stored length differs.
    pub fn f64s_exact(&mut self, expected: usize) -> Result<Vec<f64>> {
        let v = self.f64s()?;
        if v.len() != expected {
            return Err(Error::Container(format!(
                "array length {} does not match declared dimensions ({expected})",
                v.len()
            )));
        }
        Ok(v)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Container("invalid UTF-8 string".into()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Container(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
