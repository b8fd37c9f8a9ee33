//! Model file layout (little-endian): magic `ATHF`, `u32` version 1, `u8`
//! variant tag, `u64 r`, then the source and target functions. Each function
//! is `u64 input_dim`, `u8 kernel`, then if `kernel = 1` the anchor matrix
//! (`u64 rows`, `u64 cols`, `f64` row-major) and `f64 sigma`, then the
//! projection matrix in the same matrix layout.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{HashFunction, HashModel, KernelMap, Variant};
use crate::error::{AthError, Result};

const MAGIC: &[u8; 4] = b"ATHF";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &HashModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.variant().tag());
    out.extend_from_slice(&(model.code_length() as u64).to_le_bytes());
    for f in [model.source_fn(), model.target_fn()] {
        out.extend_from_slice(&(f.input_dim() as u64).to_le_bytes());
        match f.kernel() {
            Some(k) => {
                out.push(1);
                write_matrix(&mut out, k.anchors());
                out.extend_from_slice(&k.sigma().to_le_bytes());
            }
            None => out.push(0),
        }
        write_matrix(&mut out, f.projection());
    }
    out
}

fn write_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                AthError::Format(format!("truncated model file at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| AthError::Format(format!("size {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| AthError::Format("matrix size overflows".into()))?;
        let raw = self.take(len)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(AthError::Format("non-finite value in model matrix".into()));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<HashModel> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(AthError::Format("bad magic bytes, expected 'ATHF'".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(AthError::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let tag = rd.u8()?;
    let variant = Variant::from_tag(tag)
        .ok_or_else(|| AthError::Format(format!("unknown variant tag {tag}")))?;
    let r = rd.u64()?;
    let mut read_fn = || -> Result<HashFunction> {
        let input_dim = rd.u64()?;
        let kernel = match rd.u8()? {
            0 => None,
            1 => {
                let anchors = rd.matrix()?;
                let sigma = rd.f64()?;
                Some(KernelMap::new(anchors, sigma)?)
            }
            v => return Err(AthError::Format(format!("bad kernel flag {v}"))),
        };
        let f = HashFunction::new(rd.matrix()?, kernel)?;
        if f.input_dim() != input_dim || f.code_length() != r {
            return Err(AthError::Format(format!(
                "function header (input_dim {input_dim}, r {r}) disagrees with its matrices"
            )));
        }
        Ok(f)
    };
    let source = read_fn()?;
    let target = read_fn()?;
    if rd.pos != bytes.len() {
        return Err(AthError::Format("trailing bytes after model".into()));
    }
    HashModel::new(source, target, variant)
}

pub fn save_model(model: &HashModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model)).map_err(|e| AthError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<HashModel> {
    let bytes = fs::read(path).map_err(|e| AthError::io(path, e))?;
    model_from_bytes(&bytes).map_err(|e| match e {
        AthError::Format(msg) => AthError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
