use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BKT1";
const META: &[u8; 4] = b"META";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    C64,
    C128,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::C64 => 2,
            DType::C128 => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => DType::F32,
            1 => DType::F64,
            2 => DType::C64,
            3 => DType::C128,
            c => return Err(Error::Container(format!("unknown dtype code {c}"))),
        })
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::C64 => 8,
            DType::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    C64(ArrayD<Complex32>),
    C128(ArrayD<Complex64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::C64(_) => DType::C64,
            TensorData::C128(_) => DType::C128,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(a) => a.shape(),
            TensorData::F64(a) => a.shape(),
            TensorData::C64(a) => a.shape(),
            TensorData::C128(a) => a.shape(),
        }
    }

    pub fn as_f64(&self) -> Option<&ArrayD<f64>> {
        match self {
            TensorData::F64(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_c128(&self) -> Option<&ArrayD<Complex64>> {
        match self {
            TensorData::C128(a) => Some(a),
            _ => None,
        }
    }

    fn write_payload(&self, w: &mut impl Write) -> std::io::Result<()> {
        // Logical (row-major) order regardless of memory layout.
        match self {
            TensorData::F32(a) => a.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())),
            TensorData::F64(a) => a.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())),
            TensorData::C64(a) => a.iter().try_for_each(|v| {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())
            }),
            TensorData::C128(a) => a.iter().try_for_each(|v| {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())
            }),
        }
    }

    fn from_payload(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Self> {
        let f32s = || bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let f64s = || bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let bad = |e: ndarray::ShapeError| Error::Container(format!("payload does not fit shape: {e}"));
        Ok(match dtype {
            DType::F32 => TensorData::F32(ArrayD::from_shape_vec(shape, f32s().collect()).map_err(bad)?),
            DType::F64 => TensorData::F64(ArrayD::from_shape_vec(shape, f64s().collect()).map_err(bad)?),
            DType::C64 => {
                let v: Vec<f32> = f32s().collect();
                let c = v.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])).collect();
                TensorData::C64(ArrayD::from_shape_vec(shape, c).map_err(bad)?)
            }
            DType::C128 => {
                let v: Vec<f64> = f64s().collect();
                let c = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                TensorData::C128(ArrayD::from_shape_vec(shape, c).map_err(bad)?)
            }
        })
    }
}

impl From<ArrayD<f32>> for TensorData {
    fn from(a: ArrayD<f32>) -> Self {
        TensorData::F32(a)
    }
}

impl From<ArrayD<f64>> for TensorData {
    fn from(a: ArrayD<f64>) -> Self {
        TensorData::F64(a)
    }
}

impl From<ArrayD<Complex32>> for TensorData {
    fn from(a: ArrayD<Complex32>) -> Self {
        TensorData::C64(a)
    }
}

impl From<ArrayD<Complex64>> for TensorData {
    fn from(a: ArrayD<Complex64>) -> Self {
        TensorData::C128(a)
    }
}

/// Named tensors in insertion order, plus optional JSON metadata.
///
/// Layout, all integers little-endian: `"BKT1"`, u64 entry count, then per
/// entry a u32 name length, UTF-8 name, u8 dtype code (f32, f64, c64, c128 =
/// 0..3), u32 ndim, u64 per dimension, row-major payload (complex values as
/// re, im). Metadata, if any, follows as `"META"`, u64 length, JSON text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    entries: Vec<(String, TensorData)>,
    pub metadata: Option<serde_json::Value>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, data: impl Into<TensorData>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Container(format!("duplicate entry '{name}'")));
        }
        self.entries.push((name, data.into()));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorData)> {
        self.entries.iter().map(|(n, d)| (n.as_str(), d))
    }

    pub fn into_entries(self) -> Vec<(String, TensorData)> {
        self.entries
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::Container(format!("write failed: {e}"));
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes()).map_err(io)?;
        for (name, data) in &self.entries {
            let bytes = name.as_bytes();
            let len = u32::try_from(bytes.len()).map_err(|_| Error::Container(format!("name too long: {name}")))?;
            w.write_all(&len.to_le_bytes()).map_err(io)?;
            w.write_all(bytes).map_err(io)?;
            w.write_all(&[data.dtype().code()]).map_err(io)?;
            w.write_all(&(data.shape().len() as u32).to_le_bytes()).map_err(io)?;
            for &d in data.shape() {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            data.write_payload(w).map_err(io)?;
        }
        if let Some(meta) = &self.metadata {
            let text = serde_json::to_vec(meta).map_err(|e| Error::Container(format!("metadata: {e}")))?;
            w.write_all(META).map_err(io)?;
            w.write_all(&(text.len() as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&text).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Container(format!("bad magic {magic:?}, expected \"BKT1\"")));
        }
        let count = read_u64(r, "entry count")?;
        let mut out = TensorContainer::new();
        let mut seen = HashSet::new();
        for i in 0..count {
            let len = read_u32(r, "name length")? as usize;
            let name_bytes = read_vec(r, len as u64, "name")?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Container(format!("entry {i}: name is not UTF-8")))?;
            if !seen.insert(name.clone()) {
                return Err(Error::Container(format!("duplicate entry '{name}'")));
            }
            let mut code = [0u8; 1];
            read_exact(r, &mut code, "dtype")?;
            let dtype = DType::from_code(code[0])?;
            let ndim = read_u32(r, "ndim")?;
            let mut shape = Vec::with_capacity(ndim.min(64) as usize);
            for _ in 0..ndim {
                let d = read_u64(r, "shape")?;
                shape.push(usize::try_from(d).map_err(|_| Error::Container(format!("'{name}': dimension {d} too large")))?);
            }
            let bytes = shape
                .iter()
                .try_fold(dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::Container(format!("'{name}': payload size overflows")))?;
            let payload = read_vec(r, bytes, &name)?;
            out.entries.push((name, TensorData::from_payload(dtype, shape, &payload)?));
        }
        let mut tag = Vec::new();
        r.by_ref().take(4).read_to_end(&mut tag).map_err(|e| Error::Container(e.to_string()))?;
        if tag.is_empty() {
            return Ok(out);
        }
        if tag != META {
            return Err(Error::Container("unexpected bytes after the last entry".into()));
        }
        let len = read_u64(r, "metadata length")?;
        let text = read_vec(r, len, "metadata")?;
        out.metadata = Some(serde_json::from_slice(&text).map_err(|e| Error::Container(format!("metadata: {e}")))?);
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Container(e.to_string()))? != 0 {
            return Err(Error::Container("unexpected bytes after metadata".into()));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
            .map_err(|e| Error::Container(format!("{}: {e}", path.display())))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Container(format!("truncated while reading {what}")),
        _ => Error::Container(format!("reading {what}: {e}")),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads exactly `len` bytes without trusting `len` for the allocation.
fn read_vec(r: &mut impl Read, len: u64, what: &str) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    r.by_ref()
        .take(len)
        .read_to_end(&mut v)
        .map_err(|e| Error::Container(format!("reading {what}: {e}")))?;
    if (v.len() as u64) < len {
        return Err(Error::Container(format!("truncated payload in '{what}': {} of {len} bytes", v.len())));
    }
    Ok(v)
}
