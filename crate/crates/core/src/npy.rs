//! Reading and writing 2-D float tensors in the numpy npy format.
//!
//! Only the subset needed for feature and response matrices is supported:
//! little-endian `f4` or `f8` data, C order, exactly two axes. Files are
//! written as version 1.0 with `<f8` data. `f4` files are widened to `f64`
//! on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// Parsed npy header of a 2-D tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
}

/// Reads only the header of a tensor file.
pub fn read_header(path: &Path) -> Result<TensorHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    parse_header(&mut reader).map_err(|e| annotate(e, path))
}

/// Loads a tensor file as a `rows x cols` matrix of `f64`.
///
/// Rejects empty axes and any NaN or infinite value.
pub fn read_tensor(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    read_from(&mut reader).map_err(|e| annotate(e, path))
}

pub fn read_from<R: Read>(reader: &mut R) -> Result<DMatrix<f64>> {
    let header = parse_header(reader)?;
    let count = header.rows * header.cols;
    let mut raw = vec![0u8; count * header.dtype.width()];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::Format("data section shorter than the header shape".into()))?;
    let mut trailing = [0u8; 1];
    if matches!(reader.read(&mut trailing), Ok(n) if n > 0) {
        return Err(Error::Format("trailing bytes after data section".into()));
    }

    let values: Vec<f64> = match header.dtype {
        Dtype::F8 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: pos / header.cols,
            col: pos % header.cols,
        });
    }
    Ok(DMatrix::from_row_slice(header.rows, header.cols, &values))
}

/// Writes a matrix as a version 1.0 `<f8` C-order npy file.
pub fn write_tensor(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    write_tensor_as(path, matrix, Dtype::F8)
}

pub fn write_tensor_as(path: &Path, matrix: &DMatrix<f64>, dtype: Dtype) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&encode_as(matrix, dtype))
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

/// Serializes a matrix to npy bytes (`<f8`).
pub fn encode(matrix: &DMatrix<f64>) -> Vec<u8> {
    encode_as(matrix, Dtype::F8)
}

pub fn encode_as(matrix: &DMatrix<f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = matrix.shape();
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        dtype.descr(),
        rows,
        cols
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(unpadded + pad + rows * cols * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for r in 0..rows {
        for c in 0..cols {
            let v = matrix[(r, c)];
            match dtype {
                Dtype::F8 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F4 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    out
}

fn annotate(err: Error, path: &Path) -> Error {
    match err {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn parse_header<R: Read>(reader: &mut R) -> Result<TensorHeader> {
    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for npy magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad npy magic".into()));
    }
    let mut version = [0u8; 2];
    reader
        .read_exact(&mut version)
        .map_err(|_| Error::Format("truncated npy version".into()))?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated header length".into()))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated header length".into()))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::Format(format!("unsupported npy version {v}"))),
    };
    let mut dict = vec![0u8; header_len];
    reader
        .read_exact(&mut dict)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let dict =
        std::str::from_utf8(&dict).map_err(|_| Error::Format("header is not utf-8".into()))?;
    parse_dict(dict)
}

fn parse_dict(dict: &str) -> Result<TensorHeader> {
    let descr = dict_value(dict, "descr")?;
    let dtype = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => return Err(Error::Format(format!("unsupported dtype {other}"))),
    };
    match dict_value(dict, "fortran_order")? {
        "False" => {}
        "True" => return Err(Error::Format("fortran order is not supported".into())),
        other => return Err(Error::Format(format!("bad fortran_order value {other}"))),
    }
    let shape = dict_value(dict, "shape")?;
    let dims = shape
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!(
            "expected a 2-D tensor, found {} axes",
            dims.len()
        )));
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!(
            "empty axis in shape ({rows}, {cols})"
        )));
    }
    Ok(TensorHeader { dtype, rows, cols })
}

/// Extracts the raw text of a value from the python dict literal.
fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("header missing key {key}"));
    let start = dict
        .find(&format!("'{key}'"))
        .or_else(|| dict.find(&format!("\"{key}\"")))
        .ok_or_else(missing)?;
    let rest = &dict[start + key.len() + 2..];
    let rest = rest
        .trim_start()
        .strip_prefix(':')
        .ok_or_else(missing)?
        .trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(missing)?;
    Ok(rest[..end].trim())
}
