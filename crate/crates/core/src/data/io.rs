//! Dataset file formats.
//!
//! Text: a header line `d n has_labels [c]`, then `d` lines of `n` reals,
//! then (if labelled) one line of `n` class ids in `[0, c)`.
//!
//! Binary (little-endian): magic `ATHM`, `u32` version 1, `u64 d`, `u64 n`,
//! `u8 has_labels`, optional `u64 c`, `d·n` `f64` row-major, then `n` `u32`
//! class ids when labelled.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::{DomainDataset, DomainId, Labels};
use crate::error::{AthError, Result};

const MAGIC: &[u8; 4] = b"ATHM";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
}

impl MatrixFormat {
    /// `.bin`/`.athm` files are binary, everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("athm") => MatrixFormat::Binary,
            _ => MatrixFormat::Text,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = AthError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "matrix-text" => Ok(MatrixFormat::Text),
            "binary" | "matrix-binary" => Ok(MatrixFormat::Binary),
            _ => Err(AthError::InvalidArgument(format!(
                "unknown matrix format '{s}'"
            ))),
        }
    }
}

pub fn load_dataset(path: &Path, format: MatrixFormat, domain: DomainId) -> Result<DomainDataset> {
    let bytes = fs::read(path).map_err(|e| AthError::io(path, e))?;
    let parsed = match format {
        MatrixFormat::Text => {
            let text = std::str::from_utf8(&bytes).map_err(|e| AthError::Parse {
                location: "byte ".to_string() + &e.valid_up_to().to_string(),
                message: "file is not valid UTF-8".into(),
            })?;
            parse_text(text, domain)
        }
        MatrixFormat::Binary => parse_binary(&bytes, domain),
    };
    parsed.map_err(|e| match e {
        AthError::Parse { location, message } => AthError::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_dataset(ds: &DomainDataset, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Text => to_text(ds).into_bytes(),
        MatrixFormat::Binary => to_binary(ds),
    };
    let file = fs::File::create(path).map_err(|e| AthError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| AthError::io(path, e))?;
    w.flush().map_err(|e| AthError::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> AthError {
    AthError::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn parse_text(text: &str, domain: DomainId) -> Result<DomainDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let field = |i: usize, name: &str| -> Result<usize> {
        fields
            .get(i)
            .ok_or_else(|| parse_err(hline + 1, format!("header is missing '{name}'")))?
            .parse::<usize>()
            .map_err(|_| {
                parse_err(
                    hline + 1,
                    format!("header field '{name}' is not a non-negative integer"),
                )
            })
    };
    let d = field(0, "d")?;
    let n = field(1, "n")?;
    let has_labels = match field(2, "has_labels")? {
        0 => false,
        1 => true,
        v => {
            return Err(parse_err(
                hline + 1,
                format!("has_labels must be 0 or 1, got {v}"),
            ))
        }
    };
    let class_count = if has_labels {
        Some(field(3, "c")?)
    } else {
        None
    };

    let mut features = DMatrix::zeros(d, n);
    for row in 0..d {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| parse_err(hline + 2 + row, format!("expected feature row {row}")))?;
        let mut count = 0;
        for (col, tok) in line.split_whitespace().enumerate() {
            if col >= n {
                return Err(parse_err(
                    lno + 1,
                    format!("feature row {row} has more than {n} values"),
                ));
            }
            let v: f64 = tok.parse().map_err(|_| AthError::Parse {
                location: format!("line {}, row {row}, column {col}", lno + 1),
                message: format!("'{tok}' is not a real number"),
            })?;
            if !v.is_finite() {
                return Err(AthError::NonFinite { row, col });
            }
            features[(row, col)] = v;
            count += 1;
        }
        if count != n {
            return Err(parse_err(
                lno + 1,
                format!("feature row {row} has {count} values, expected {n}"),
            ));
        }
    }

    let labels = match class_count {
        Some(c) => {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| parse_err(hline + 2 + d, "expected a label line"))?;
            let mut ids = Vec::with_capacity(n);
            for (col, tok) in line.split_whitespace().enumerate() {
                let id: usize = tok.parse().map_err(|_| AthError::Parse {
                    location: format!("line {}, label column {col}", lno + 1),
                    message: format!("'{tok}' is not a class id"),
                })?;
                if id >= c {
                    return Err(AthError::Parse {
                        location: format!("line {}, label column {col}", lno + 1),
                        message: format!("class id {id} is outside [0, {c})"),
                    });
                }
                ids.push(id);
            }
            if ids.len() != n {
                return Err(AthError::LabelColumnMismatch {
                    labels: ids.len(),
                    features: n,
                });
            }
            Some(Labels::from_class_ids(ids, c)?)
        }
        None => None,
    };
    if let Some((lno, _)) = lines.next() {
        return Err(parse_err(lno + 1, "unexpected trailing content"));
    }
    DomainDataset::new(features, labels, domain)
}

fn to_text(ds: &DomainDataset) -> String {
    let mut out = String::new();
    match ds.class_count() {
        Some(c) => out.push_str(&format!("{} {} 1 {}\n", ds.dim(), ds.len(), c)),
        None => out.push_str(&format!("{} {} 0\n", ds.dim(), ds.len())),
    }
    for row in ds.features().row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    if let Some(ids) = ds.class_ids() {
        let line: Vec<String> = ids.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let mut slice = self.bytes.get(self.pos..).unwrap_or(&[]);
        slice.read_exact(&mut buf).map_err(|_| AthError::Parse {
            location: format!("byte {}", self.pos),
            message: format!("truncated file while reading {what}"),
        })?;
        self.pos += N;
        Ok(buf)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(what)?))
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| AthError::Format(format!("{what} {v} does not fit in memory")))
}

fn parse_binary(bytes: &[u8], domain: DomainId) -> Result<DomainDataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    if &cur.take::<4>("magic")? != MAGIC {
        return Err(AthError::Format("bad magic bytes, expected 'ATHM'".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(AthError::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let d = to_usize(cur.u64("d")?, "d")?;
    let n = to_usize(cur.u64("n")?, "n")?;
    let class_count = match cur.u8("has_labels")? {
        0 => None,
        1 => Some(to_usize(cur.u64("c")?, "c")?),
        v => {
            return Err(AthError::Format(format!(
                "has_labels must be 0 or 1, got {v}"
            )))
        }
    };
    let expected = d
        .checked_mul(n)
        .and_then(|dn| dn.checked_mul(8))
        .ok_or_else(|| AthError::Format("matrix size overflows".into()))?;
    if bytes.len().saturating_sub(cur.pos) < expected {
        return Err(AthError::Parse {
            location: format!("byte {}", cur.pos),
            message: format!("truncated file: {d}x{n} matrix needs {expected} bytes"),
        });
    }
    let mut features = DMatrix::zeros(d, n);
    for row in 0..d {
        for col in 0..n {
            let v = cur.f64("features")?;
            if !v.is_finite() {
                return Err(AthError::NonFinite { row, col });
            }
            features[(row, col)] = v;
        }
    }
    let labels = match class_count {
        Some(c) => {
            let mut ids = Vec::with_capacity(n);
            for col in 0..n {
                let id = cur.u32("class ids")? as usize;
                if id >= c {
                    return Err(AthError::Parse {
                        location: format!("label column {col}"),
                        message: format!("class id {id} is outside [0, {c})"),
                    });
                }
                ids.push(id);
            }
            Some(Labels::from_class_ids(ids, c)?)
        }
        None => None,
    };
    if cur.pos != bytes.len() {
        return Err(AthError::Format(format!(
            "{} trailing bytes after the dataset",
            bytes.len() - cur.pos
        )));
    }
    DomainDataset::new(features, labels, domain)
}

fn to_binary(ds: &DomainDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * ds.dim() * ds.len() + 4 * ds.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    match ds.class_count() {
        Some(c) => {
            out.push(1);
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        None => out.push(0),
    }
    for row in ds.features().row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(ids) = ds.class_ids() {
        for &id in ids {
            out.extend_from_slice(&(id as u32).to_le_bytes());
        }
    }
    out
}
