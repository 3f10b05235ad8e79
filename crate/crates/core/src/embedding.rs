//! Token embeddings: a trainable lookup table, or frozen contextual vectors
//! read from a `CEMB` file.
//!
//! `CEMB` layout (little-endian): magic `CEMB`, version `u32 = 1`, record
//! count `u32`; then per record `n: u32`, `d: u32`, `n·d` f32 values in
//! row-major order, and the label as `i32`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::CountingReader;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CEMB_MAGIC: [u8; 4] = *b"CEMB";
pub const CEMB_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    TrainableTable,
    ContextualFile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T: Scalar> {
    pub values: Tensor<T>,
    pub source: EmbeddingSource,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn contextual(values: Tensor<T>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Rank(format!("embedding matrix must be n×d, got {:?}", values.shape())));
        }
        Ok(EmbeddingMatrix {
            values,
            source: EmbeddingSource::ContextualFile,
        })
    }

    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Row `i` of the result is `table[ids[i]]`.
pub fn embed<T: Scalar>(ids: &[u32], table: &Tensor<T>) -> Result<EmbeddingMatrix<T>> {
    let (v, d) = table.dims2()?;
    if table.rank() != 2 {
        return Err(Error::Rank(format!("embedding table must be V×d, got {:?}", table.shape())));
    }
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            return Err(Error::Vocab { id, size: v });
        }
        data.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
    }
    Ok(EmbeddingMatrix {
        values: Tensor::new(&[ids.len(), d], data)?,
        source: EmbeddingSource::TrainableTable,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextualRecord {
    pub embeddings: Tensor<f32>,
    pub label: i32,
}

pub fn write_contextual<W: Write>(mut w: W, records: &[ContextualRecord]) -> Result<()> {
    let count = u32::try_from(records.len()).map_err(|_| Error::Input("too many records".into()))?;
    w.write_all(&CEMB_MAGIC)?;
    w.write_all(&CEMB_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for r in records {
        if r.embeddings.rank() != 2 {
            return Err(Error::Rank(format!("record must be n×d, got {:?}", r.embeddings.shape())));
        }
        let (n, d) = r.embeddings.dims2()?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(d as u32).to_le_bytes())?;
        for x in r.embeddings.data() {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&r.label.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_contextual<R: Read>(inner: R) -> Result<Vec<ContextualRecord>> {
    let mut r = CountingReader { inner, offset: 0 };
    if r.array::<4>()? != CEMB_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic (expected CEMB)".into(),
        });
    }
    let version = r.u32()?;
    if version != CEMB_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let count = r.u32()?;
    let mut width: Option<usize> = None;
    let mut out = Vec::with_capacity(count.min(1 << 16) as usize);
    for i in 0..count {
        let at = r.offset;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        if n == 0 || d == 0 {
            return Err(Error::Format {
                offset: at,
                msg: format!("record {i} has empty shape {n}×{d}"),
            });
        }
        match width {
            Some(w) if w != d => {
                return Err(Error::Format {
                    offset: at + 4,
                    msg: format!("record {i} has width {d}, earlier records {w}"),
                })
            }
            _ => width = Some(d),
        }
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            data.push(f32::from_le_bytes(r.array()?));
        }
        let label = r.i32()?;
        out.push(ContextualRecord {
            embeddings: Tensor::new(&[n, d], data)?,
            label,
        });
    }
    if !r.at_eof()? {
        return Err(Error::Format {
            offset: r.offset,
            msg: format!("trailing bytes after {count} records"),
        });
    }
    Ok(out)
}

pub fn save_contextual(path: impl AsRef<Path>, records: &[ContextualRecord]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_contextual(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Loads every record; the width is uniform across the file.
pub fn load_contextual(path: impl AsRef<Path>) -> Result<Vec<ContextualRecord>> {
    let f = std::fs::File::open(path)?;
    read_contextual(std::io::BufReader::new(f))
}
