//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "AOICKPT\0"
//! version  u32      currently 1
//! meta     u32 length + UTF-8 bytes (free-form, usually JSON)
//! count    u32
//! entries  count × { name: u32 length + UTF-8,
//!                    ndim: u32, dims: ndim × u64,
//!                    values: prod(dims) × f64 bit patterns, row-major }
//! ```
//!
//! Values are written as raw IEEE-754 bits, so a write/read cycle is exact.

use crate::matrix::{Matrix, Real};
use crate::param::{Init, ParamStore};
use std::io::{self, Read, Write};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"AOICKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no array named {0}")]
    Missing(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(meta: impl Into<String>) -> Self {
        Self {
            meta: meta.into(),
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: &Matrix) {
        self.arrays.push(NamedArray {
            name: name.into(),
            shape: vec![m.rows(), m.cols()],
            values: m.data().iter().map(|&v| v as f64).collect(),
        });
    }

    /// Appends every parameter of `store` under `prefix/`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.params() {
            self.push(format!("{prefix}/{}", p.name), &p.value);
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix, CheckpointError> {
        let a = self
            .get(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        let (r, c) = match a.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            s => return Err(CheckpointError::Malformed(format!("{name}: rank {}", s.len()))),
        };
        Ok(Matrix::from_vec(
            r,
            c,
            a.values.iter().map(|&v| v as Real).collect(),
        ))
    }

    /// Rebuilds a store from every array under `prefix/`, in file order.
    pub fn to_store(&self, prefix: &str) -> Result<ParamStore, CheckpointError> {
        let mut store = ParamStore::new();
        let lead = format!("{prefix}/");
        for a in &self.arrays {
            if let Some(name) = a.name.strip_prefix(&lead) {
                let m = self.matrix(&a.name)?;
                store.insert(name, m, Init::FanInUniform);
            }
        }
        Ok(store)
    }

    /// Overwrites values of an existing store from `prefix/` arrays.
    pub fn load_into(&self, prefix: &str, store: &mut ParamStore) -> Result<(), CheckpointError> {
        for p in store.params_mut() {
            let name = format!("{prefix}/{}", p.name);
            let m = self.matrix(&name)?;
            if m.shape() != p.value.shape() {
                return Err(CheckpointError::Malformed(format!(
                    "{name}: shape {:?} vs {:?}",
                    m.shape(),
                    p.value.shape()
                )));
            }
            p.value = m;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut w, &self.meta)?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for a in &self.arrays {
            let expect: usize = a.shape.iter().product();
            if expect != a.values.len() {
                return Err(CheckpointError::Malformed(format!("{}: shape/data mismatch", a.name)));
            }
            write_str(&mut w, &a.name)?;
            w.write_all(&(a.shape.len() as u32).to_le_bytes())?;
            for &d in &a.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &a.values {
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let meta = read_str(&mut r)?;
        let count = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            if ndim > 8 {
                return Err(CheckpointError::Malformed(format!("{name}: rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                values.push(f64::from_bits(u64::from_le_bytes(b)));
            }
            arrays.push(NamedArray {
                name,
                shape,
                values,
            });
        }
        Ok(Self { meta, arrays })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Self::read_from(bytes)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}
