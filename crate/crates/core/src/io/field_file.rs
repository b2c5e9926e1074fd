//! Binary field files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `PWFG`                              |
//! | 4            | version (`u32`, currently 1)              |
//! | 4            | `d` (`u32`)                               |
//! | 4            | kind (`u32`: 0 scalar, 1 vector, 2 matrix)|
//! | 8·d          | per-axis sizes (`u64`)                    |
//! | 8·N·C        | payload (`f64`)                           |
//!
//! Nodes are row-major (last axis fastest) and components vary fastest
//! within a node; matrix components are row-major, so `C` is 1, `d` or `d²`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{MatrixField, ScalarField, TorusGrid, VectorField};

pub const MAGIC: &[u8; 4] = b"PWFG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Vector,
    Matrix,
}

impl FieldKind {
    fn code(self) -> u32 {
        match self {
            FieldKind::Scalar => 0,
            FieldKind::Vector => 1,
            FieldKind::Matrix => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(FieldKind::Scalar),
            1 => Ok(FieldKind::Vector),
            2 => Ok(FieldKind::Matrix),
            _ => Err(Error::Format(format!("unknown field kind {c}"))),
        }
    }

    pub fn components(self, d: usize) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => d,
            FieldKind::Matrix => d * d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldFileHeader {
    pub version: u32,
    pub kind: FieldKind,
    pub sizes: Vec<usize>,
}

impl FieldFileHeader {
    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    fn byte_len(&self) -> usize {
        16 + 8 * self.dim()
    }

    pub fn payload_len(&self) -> usize {
        self.sizes.iter().product::<usize>() * self.kind.components(self.dim()) * 8
    }
}

/// A field of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
    Matrix(MatrixField),
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        match self {
            Field::Scalar(_) => FieldKind::Scalar,
            Field::Vector(_) => FieldKind::Vector,
            Field::Matrix(_) => FieldKind::Matrix,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        match self {
            Field::Scalar(f) => f.grid(),
            Field::Vector(f) => f.grid(),
            Field::Matrix(f) => f.grid(),
        }
    }

    /// Component arrays in file order.
    pub fn components(&self) -> Vec<&[f64]> {
        match self {
            Field::Scalar(f) => vec![f.data()],
            Field::Vector(f) => f.components().iter().map(|c| c.as_slice()).collect(),
            Field::Matrix(f) => f.components().iter().map(|c| c.as_slice()).collect(),
        }
    }

    fn from_components(kind: FieldKind, grid: &TorusGrid, mut comps: Vec<Vec<f64>>) -> Result<Self> {
        Ok(match kind {
            FieldKind::Scalar => Field::Scalar(ScalarField::from_vec(grid, comps.pop().unwrap_or_default())?),
            FieldKind::Vector => Field::Vector(VectorField::from_components(grid, comps)?),
            FieldKind::Matrix => Field::Matrix(MatrixField::from_components(grid, comps)?),
        })
    }

    pub fn header(&self) -> FieldFileHeader {
        FieldFileHeader { version: VERSION, kind: self.kind(), sizes: self.grid().dims().to_vec() }
    }
}

pub fn encode(field: &Field) -> Vec<u8> {
    let h = field.header();
    let comps = field.components();
    let mut out = Vec::with_capacity(h.byte_len() + h.payload_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&h.version.to_le_bytes());
    out.extend_from_slice(&(h.dim() as u32).to_le_bytes());
    out.extend_from_slice(&h.kind.code().to_le_bytes());
    for &n in &h.sizes {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for n in 0..field.grid().len() {
        for c in &comps {
            out.extend_from_slice(&c[n].to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

pub fn decode_header(bytes: &[u8]) -> Result<FieldFileHeader> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Format("missing PWFG magic".into()));
    }
    let version = u32_at(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = u32_at(bytes, 8)? as usize;
    if !(1..=3).contains(&d) {
        return Err(Error::Format(format!("dimension {d} out of range")));
    }
    let kind = FieldKind::from_code(u32_at(bytes, 12)?)?;
    let sizes = (0..d)
        .map(|a| {
            let at = 16 + 8 * a;
            bytes
                .get(at..at + 8)
                .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
                .ok_or_else(|| Error::Format("truncated header".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldFileHeader { version, kind, sizes })
}

pub fn decode(bytes: &[u8]) -> Result<Field> {
    let h = decode_header(bytes)?;
    let grid = TorusGrid::new(h.sizes.clone()).map_err(|e| Error::Format(format!("bad grid sizes: {e}")))?;
    let payload = &bytes[h.byte_len()..];
    if payload.len() != h.payload_len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            h.payload_len()
        )));
    }
    let nc = h.kind.components(h.dim());
    let mut comps = vec![Vec::with_capacity(grid.len()); nc];
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        comps[k % nc].push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
    }
    Field::from_components(h.kind, &grid, comps)
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_atomic(path, &encode(field))
}

pub fn read_field(path: &Path) -> Result<Field> {
    decode(&std::fs::read(path)?)
}
