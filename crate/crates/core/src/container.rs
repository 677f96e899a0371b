//! Binary model container shared by every persisted model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "PARALNG\0"
//! version  u32
//! count    u32      number of sections
//! section:
//!   kind     str
//!   n_meta   u32, then n_meta (key str, value str) pairs
//!   n_tensor u32, then per tensor:
//!     name   str
//!     ndim   u32, then ndim u64 dimensions
//!     data   product(dims) f64 values
//! str = u32 byte length + UTF-8 bytes
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PARALNG\0";
pub const VERSION: u32 = 1;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Container(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> Result<Vec<Vec<f64>>> {
        let [r, c] = self.shape[..] else {
            return Err(Error::Container(format!("expected a matrix, got shape {:?}", self.shape)));
        };
        Ok((0..r).map(|i| self.data[i * c..(i + 1) * c].to_vec()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Section {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_tensor(mut self, name: &str, tensor: Tensor) -> Self {
        self.tensors.push((name.to_string(), tensor));
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Container(format!("section {} lacks meta key {key}", self.kind)))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Container(format!("section {} lacks tensor {name}", self.kind)))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Container(format!("expected section {kind}, found {}", self.kind)))
        }
    }
}

/// Finds the only section of the given kind.
pub fn find_section<'a>(sections: &'a [Section], kind: &str) -> Result<&'a Section> {
    let mut it = sections.iter().filter(|s| s.kind == kind);
    match (it.next(), it.next()) {
        (Some(s), None) => Ok(s),
        (None, _) => Err(Error::Container(format!("no {kind} section"))),
        _ => Err(Error::Container(format!("more than one {kind} section"))),
    }
}

pub fn write_sections(mut w: impl Write, sections: &[Section]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_u32(&mut w, sections.len())?;
    for s in sections {
        write_str(&mut w, &s.kind)?;
        write_u32(&mut w, s.meta.len())?;
        for (k, v) in &s.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        write_u32(&mut w, s.tensors.len())?;
        for (name, t) in &s.tensors {
            write_str(&mut w, name)?;
            write_u32(&mut w, t.shape.len())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_sections(mut r: impl Read) -> Result<Vec<Section>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)?;
    let mut sections = Vec::with_capacity(n.min(64) as usize);
    for _ in 0..n {
        let mut s = Section::new(&read_str(&mut r)?);
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            s.meta.insert(k, v);
        }
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)?;
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(truncated)?;
                shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| truncated_msg())?);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(truncated_msg)?;
            let mut bytes = Vec::new();
            (&mut r)
                .take(count as u64 * 8)
                .read_to_end(&mut bytes)
                .map_err(truncated)?;
            if bytes.len() != count * 8 {
                return Err(truncated_msg());
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            s.tensors.push((name, Tensor { shape, data }));
        }
        sections.push(s);
    }
    Ok(sections)
}

pub fn save(path: impl AsRef<Path>, sections: &[Section]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sections(&mut w, sections)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Section>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_sections(BufReader::new(File::open(path)?))
}

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Container("count exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as u64;
    let mut bytes = Vec::new();
    r.take(len).read_to_end(&mut bytes).map_err(truncated)?;
    if bytes.len() as u64 != len {
        return Err(truncated_msg());
    }
    String::from_utf8(bytes).map_err(|_| Error::Container("invalid UTF-8 string".into()))
}

fn truncated(_: std::io::Error) -> Error {
    truncated_msg()
}

fn truncated_msg() -> Error {
    Error::Container("truncated or corrupt container".into())
}
