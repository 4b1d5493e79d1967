//! Matrix Market reader and the raw vector file format.
//!
//! Vector files are `b"CKPTVEC1"`, a little-endian `u64` element count, then
//! that many little-endian `f64` values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CsrMatrix, DenseVector};
use crate::error::{Error, Result};

pub const VECTOR_MAGIC: &[u8; 8] = b"CKPTVEC1";

/// Reads a `coordinate real|integer general|symmetric` Matrix Market stream.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market input".into()))??;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse(format!("bad Matrix Market banner: {header}")));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported format '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = |name: &str| {
            it.next()
                .ok_or_else(|| Error::Parse(format!("missing {name} in line '{line}'")))
        };
        match size {
            None => {
                let r = parse_usize(field("rows")?)?;
                let c = parse_usize(field("cols")?)?;
                let nnz = parse_usize(field("nnz")?)?;
                triplets.reserve(if symmetric { 2 * nnz } else { nnz });
                size = Some((r, c, nnz));
            }
            Some(_) => {
                let r = parse_usize(field("row")?)?;
                let c = parse_usize(field("col")?)?;
                let v: f64 = field("value")?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad value in '{line}': {e}")))?;
                if r == 0 || c == 0 {
                    return Err(Error::Parse("Matrix Market indices are 1-based".into()));
                }
                triplets.push((r - 1, c - 1, v));
                if symmetric && r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 <= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(rows, cols, &triplets)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_matrix_market(BufReader::new(File::open(path)?))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|e| Error::Parse(format!("bad integer '{s}': {e}")))
}

pub fn write_vector<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a vector file; NaN and infinite entries are rejected.
pub fn read_vector<R: Read>(mut r: R) -> Result<DenseVector> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != VECTOR_MAGIC {
        return Err(Error::Parse("not a CKPTVEC1 vector file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Parse(format!(
            "vector file declares {len} values but carries {} bytes",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseVector::try_from_vec(values)
}

pub fn write_vector_file(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    write_vector(BufWriter::new(File::create(path)?), values)
}

pub fn read_vector_file(path: impl AsRef<Path>) -> Result<DenseVector> {
    read_vector(BufReader::new(File::open(path)?))
}
