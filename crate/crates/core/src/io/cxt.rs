//! CXT1 tensor files.
//!
//! Layout: magic `CXT1`, dtype byte (0 = complex float32 pairs, 1 = u8),
//! ndim byte, `ndim` little-endian u64 lengths in axis order
//! `[coil, t, y, x]` (absent leading axes omitted), then the row-major
//! payload. Complex values are written as `(re, im)` float32 pairs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::SamplingMask;
use crate::tensors::{Dims, Domain, DynTensor, C64};
use crate::coils::CoilMaps;

pub const MAGIC: &[u8; 4] = b"CXT1";
const DTYPE_C32: u8 = 0;
const DTYPE_U8: u8 = 1;

/// Raw decoded contents of a CXT1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum CxtPayload {
    Complex(Vec<C64>),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CxtFile {
    pub dims: Vec<usize>,
    pub payload: CxtPayload,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl CxtFile {
    pub fn encode(&self) -> Vec<u8> {
        let (tag, body_len) = match &self.payload {
            CxtPayload::Complex(v) => (DTYPE_C32, v.len() * 8),
            CxtPayload::Bytes(v) => (DTYPE_U8, v.len()),
        };
        let mut out = Vec::with_capacity(6 + 8 * self.dims.len() + body_len);
        out.extend_from_slice(MAGIC);
        out.push(tag);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.payload {
            CxtPayload::Complex(v) => {
                for z in v {
                    out.extend_from_slice(&(z.re as f32).to_le_bytes());
                    out.extend_from_slice(&(z.im as f32).to_le_bytes());
                }
            }
            CxtPayload::Bytes(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parse bytes; `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 6 {
            return Err(format_err(path, "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(format_err(path, "bad magic (expected CXT1)"));
        }
        let tag = bytes[4];
        let ndim = bytes[5] as usize;
        let header = 6 + 8 * ndim;
        if bytes.len() < header {
            return Err(format_err(path, "truncated dimension list"));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for i in 0..ndim {
            let raw = u64::from_le_bytes(bytes[6 + 8 * i..14 + 8 * i].try_into().expect("8 bytes"));
            let d = usize::try_from(raw).map_err(|_| format_err(path, "dimension overflow"))?;
            count = count.checked_mul(d).ok_or_else(|| format_err(path, "dimension overflow"))?;
            dims.push(d);
        }
        let elem = match tag {
            DTYPE_C32 => 8,
            DTYPE_U8 => 1,
            t => return Err(format_err(path, format!("unknown dtype tag {t}"))),
        };
        let expected = count.checked_mul(elem).ok_or_else(|| format_err(path, "dimension overflow"))?;
        let body = &bytes[header..];
        if body.len() != expected {
            return Err(format_err(
                path,
                format!("payload has {} bytes, header implies {expected}", body.len()),
            ));
        }
        let payload = if tag == DTYPE_C32 {
            CxtPayload::Complex(
                body.chunks_exact(8)
                    .map(|c| {
                        let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                        let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                        C64::new(re as f64, im as f64)
                    })
                    .collect(),
            )
        } else {
            CxtPayload::Bytes(body.to_vec())
        };
        Ok(CxtFile { dims, payload })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }
}

fn tensor_file(x: &DynTensor) -> CxtFile {
    let d = x.dims();
    let mut dims = Vec::with_capacity(4);
    if let Some(c) = d.coils {
        dims.push(c);
    }
    dims.extend([d.frames, d.rows, d.cols]);
    CxtFile {
        dims,
        payload: CxtPayload::Complex(x.as_slice().to_vec()),
    }
}

pub fn encode_tensor(x: &DynTensor) -> Vec<u8> {
    tensor_file(x).encode()
}

pub fn save_tensor(path: &Path, x: &DynTensor) -> Result<()> {
    tensor_file(x).save(path)
}

/// Load a complex tensor and tag it with `domain` (the format does not
/// store domains).
pub fn load_tensor(path: &Path, domain: Domain) -> Result<DynTensor> {
    let f = CxtFile::load(path)?;
    let data = match f.payload {
        CxtPayload::Complex(v) => v,
        CxtPayload::Bytes(_) => return Err(format_err(path, "expected complex data, found u8")),
    };
    let dims = match f.dims[..] {
        [t, y, x] => Dims::new(t, y, x),
        [c, t, y, x] => Dims::with_coils(c, t, y, x),
        _ => return Err(format_err(path, format!("expected 3 or 4 dimensions, found {}", f.dims.len()))),
    };
    dims.validate().map_err(|e| format_err(path, e.to_string()))?;
    DynTensor::from_vec(dims, domain, data).map_err(|e| format_err(path, e.to_string()))
}

/// Masks are stored as u8 with dims `[T, H]`.
pub fn save_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    CxtFile {
        dims: vec![mask.frames(), mask.lines()],
        payload: CxtPayload::Bytes(mask.as_bytes().to_vec()),
    }
    .save(path)
}

/// The loaded mask reports its measured acceleration as the target.
pub fn load_mask(path: &Path) -> Result<SamplingMask> {
    let f = CxtFile::load(path)?;
    let (CxtPayload::Bytes(data), &[t, h]) = (f.payload, &f.dims[..]) else {
        return Err(format_err(path, "expected a 2-D u8 mask"));
    };
    let n = data.iter().filter(|&&b| b != 0).count();
    let target = if n == 0 { f64::INFINITY } else { (t * h) as f64 / n as f64 };
    SamplingMask::from_raw(t, h, data, target, 0).map_err(|e| format_err(path, e.to_string()))
}

/// Maps are stored as a complex `[coil, 1, y, x]` tensor.
pub fn save_maps(path: &Path, maps: &CoilMaps) -> Result<()> {
    save_tensor(path, &maps.to_tensor())
}

pub fn load_maps(path: &Path, normalize: bool) -> Result<CoilMaps> {
    let t = load_tensor(path, Domain::ImageXt)?;
    CoilMaps::from_tensor(&t, normalize).map_err(|e| format_err(path, e.to_string()))
}
