//! Binary files for embedding and Gram matrices. Headers and values are
//! little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::embed::{EmbeddingKind, EmbeddingMatrix};
use super::gram::GramMatrix;
use crate::error::{Error, Result};
use crate::nn::Cursor;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"AKEM";
pub const GRAM_MAGIC: &[u8; 4] = b"AKGM";
pub const KERNEL_FILE_VERSION: u32 = 1;

fn header(cur: &mut Cursor<'_>, magic: &[u8; 4], what: &str) -> Result<()> {
    if cur.take(4)? != magic {
        return Err(Error::format(0, format!("not {what} file (bad magic)")));
    }
    let version = cur.u32()?;
    if version != KERNEL_FILE_VERSION {
        return Err(Error::format(4, format!("unsupported {what} version {version}")));
    }
    Ok(())
}

fn dims(cur: &mut Cursor<'_>) -> Result<(usize, usize)> {
    let at = cur.pos as u64;
    let a = cur.u64()?;
    let b = cur.u64()?;
    let n = usize::try_from(a).map_err(|_| Error::format(at, "row count too large"))?;
    let m = usize::try_from(b).map_err(|_| Error::format(at + 8, "column count too large"))?;
    n.checked_mul(m).ok_or_else(|| Error::format(at, "matrix size overflows"))?;
    Ok((n, m))
}

/// `AKEM`, version, kind (u8), n (u64), d (u64), rescaled (u8), then
/// `n * d` f32 values row-major. Values are written with the scale applied.
pub fn write_embeddings<W: Write>(e: &EmbeddingMatrix, mut w: W) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&KERNEL_FILE_VERSION.to_le_bytes())?;
    w.write_all(&[e.kind().code()])?;
    w.write_all(&(e.n() as u64).to_le_bytes())?;
    w.write_all(&(e.d() as u64).to_le_bytes())?;
    w.write_all(&[u8::from(e.is_rescaled())])?;
    let mut row = vec![0.0; e.d()];
    let mut buf = Vec::with_capacity(e.d() * 4);
    for i in 0..e.n() {
        e.read_row(i, 0, &mut row);
        buf.clear();
        for &x in &row {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);
    header(&mut cur, EMBEDDING_MAGIC, "an embedding")?;
    let at = cur.pos as u64;
    let kind = EmbeddingKind::from_code(cur.u8()?).ok_or_else(|| Error::format(at, "unknown embedding kind"))?;
    let (n, d) = dims(&mut cur)?;
    let at = cur.pos as u64;
    let rescaled = match cur.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::format(at, format!("rescaled flag {other} is not 0 or 1"))),
    };
    let data: Vec<f32> = cur
        .take(n * d * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if !cur.is_done() {
        return Err(Error::format(cur.pos as u64, "trailing bytes after embedding data"));
    }
    let e = EmbeddingMatrix::from_data_f32(kind, n, d, data)?;
    Ok(if rescaled { super::embed::apply_rescale(e, 1.0) } else { e })
}

/// `AKGM`, version, n (u64), m (u64), then `n * m` f64 values row-major.
pub fn write_gram<W: Write>(g: &GramMatrix, mut w: W) -> Result<()> {
    w.write_all(GRAM_MAGIC)?;
    w.write_all(&KERNEL_FILE_VERSION.to_le_bytes())?;
    w.write_all(&(g.rows() as u64).to_le_bytes())?;
    w.write_all(&(g.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(g.data().len() * 8);
    for x in g.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_gram<R: Read>(mut r: R) -> Result<GramMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);
    header(&mut cur, GRAM_MAGIC, "a Gram")?;
    let (n, m) = dims(&mut cur)?;
    let data = cur
        .take(n * m * 8)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !cur.is_done() {
        return Err(Error::format(cur.pos as u64, "trailing bytes after Gram data"));
    }
    GramMatrix::from_data(n, m, data)
}

pub fn save_embeddings(e: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_embeddings(e, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    read_embeddings(std::fs::File::open(path)?)
}

pub fn save_gram(g: &GramMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_gram(g, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_gram(path: impl AsRef<Path>) -> Result<GramMatrix> {
    read_gram(std::fs::File::open(path)?)
}
