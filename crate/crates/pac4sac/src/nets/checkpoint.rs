//! Parameter checkpoint file: a single-line JSON header describing named
//! arrays (`{name, shape, offset}`, offsets in f64 units), a newline, then
//! the concatenated values as little-endian 64-bit reals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    entries: Vec<HeaderEntry>,
}

pub fn save(path: &Path, params: &[&Param]) -> Result<()> {
    let arrays: Vec<(&str, &[usize], &[f64])> =
        params.iter().map(|p| (p.name(), p.shape(), p.data())).collect();
    save_arrays(path, &arrays)
}

/// Write raw named arrays (the checkpoint format without `Param` handles).
pub fn save_arrays(path: &Path, arrays: &[(&str, &[usize], &[f64])]) -> Result<()> {
    let mut entries = Vec::with_capacity(arrays.len());
    let mut offset = 0usize;
    for (name, shape, data) in arrays {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        entries.push(HeaderEntry { name: name.to_string(), shape: shape.to_vec(), offset });
        offset += data.len();
    }
    let header = serde_json::to_string(&Header { entries })
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for (_, _, data) in arrays {
        for v in *data {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A named array from a checkpoint: `(name, shape, values)`.
pub type NamedArray = (String, Vec<usize>, Vec<f64>);

/// All arrays in the file, in header order.
pub fn load(path: &Path) -> Result<Vec<NamedArray>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;

    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    if data.len() % 8 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("data section of {} bytes is not a whole number of f64s", data.len()),
        });
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let mut out = Vec::with_capacity(header.entries.len());
    for entry in header.entries {
        let len: usize = entry.shape.iter().product();
        let end = entry.offset + len;
        if end > values.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("array {} overruns the data section", entry.name),
            });
        }
        out.push((entry.name, entry.shape, values[entry.offset..end].to_vec()));
    }
    Ok(out)
}

/// Restore parameter values by name, requiring every parameter to be present
/// with a matching shape.
pub fn load_into(path: &Path, params: &mut [&mut Param]) -> Result<()> {
    let arrays = load(path)?;
    for p in params.iter_mut() {
        let found = arrays.iter().find(|(name, _, _)| name == p.name()).ok_or_else(|| {
            Error::Format {
                path: path.to_path_buf(),
                reason: format!("missing array {}", p.name()),
            }
        })?;
        if found.1 != p.shape() {
            return Err(Error::ShapeMismatch { left: p.shape().to_vec(), right: found.1.clone() });
        }
        p.data_mut().copy_from_slice(&found.2);
    }
    Ok(())
}
