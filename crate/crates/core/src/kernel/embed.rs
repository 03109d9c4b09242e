use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::nn::{Checkpoint, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Gradient of the output with respect to every parameter.
    FullTangent,
    /// Activations of the last hidden layer.
    Conjugate,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::FullTangent => "full_tangent",
            EmbeddingKind::Conjugate => "conjugate",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            EmbeddingKind::FullTangent => 0,
            EmbeddingKind::Conjugate => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EmbeddingKind::FullTangent),
            1 => Some(EmbeddingKind::Conjugate),
            _ => None,
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_tangent" => Ok(EmbeddingKind::FullTangent),
            "conjugate" => Ok(EmbeddingKind::Conjugate),
            _ => Err(Error::Config(format!(
                "unknown embedding kind `{s}` (expected full_tangent or conjugate)"
            ))),
        }
    }
}

/// Storage width of an embedding matrix. Values are always read back as f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// Row-major `n x d` matrix of per-example embeddings.
///
/// Every stored value is multiplied by `scale` when read, so rescaling never
/// touches (or rounds) the stored data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    kind: EmbeddingKind,
    data: Storage,
    scale: f64,
    rescaled: bool,
    /// Free-form description of the checkpoint the rows came from.
    pub source: Option<String>,
}

impl EmbeddingMatrix {
    pub fn from_data(kind: EmbeddingKind, n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Input(format!("{} values do not form a {n}x{d} matrix", data.len())));
        }
        Ok(Self::with_storage(kind, n, d, Storage::F64(data)))
    }

    pub fn from_data_f32(kind: EmbeddingKind, n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Input(format!("{} values do not form a {n}x{d} matrix", data.len())));
        }
        Ok(Self::with_storage(kind, n, d, Storage::F32(data)))
    }

    pub fn from_rows(kind: EmbeddingKind, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Input(format!("row {i} has length {}, expected {d}", rows[i].len())));
        }
        Self::from_data(kind, rows.len(), d, rows.concat())
    }

    fn with_storage(kind: EmbeddingKind, n: usize, d: usize, data: Storage) -> Self {
        EmbeddingMatrix {
            n,
            d,
            kind,
            data,
            scale: 1.0,
            rescaled: false,
            source: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            Storage::F32(_) => Precision::F32,
            Storage::F64(_) => Precision::F64,
        }
    }

    /// Factor applied to stored values on every read.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_rescaled(&self) -> bool {
        self.rescaled
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.read_row(i, 0, &mut out);
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i)).collect()
    }

    /// Writes columns `k0..k0 + out.len()` of row `i` into `out`.
    pub(crate) fn read_row(&self, i: usize, k0: usize, out: &mut [f64]) {
        let start = i * self.d + k0;
        let end = start + out.len();
        let s = self.scale;
        match &self.data {
            Storage::F64(v) => {
                for (o, &x) in out.iter_mut().zip(&v[start..end]) {
                    *o = s * x;
                }
            }
            Storage::F32(v) => {
                for (o, &x) in out.iter_mut().zip(&v[start..end]) {
                    *o = s * f64::from(x);
                }
            }
        }
    }

    /// `row(i) . v`
    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        let r = i * self.d..(i + 1) * self.d;
        let raw = match &self.data {
            Storage::F64(data) => linalg::dot(&data[r], v),
            Storage::F32(data) => linalg::dot_mixed(&data[r], v),
        };
        self.scale * raw
    }

    /// `y += alpha * row(i)`
    pub fn row_axpy(&self, i: usize, alpha: f64, y: &mut [f64]) {
        let r = i * self.d..(i + 1) * self.d;
        match &self.data {
            Storage::F64(data) => linalg::axpy(alpha * self.scale, &data[r], y),
            Storage::F32(data) => linalg::axpy_mixed(alpha * self.scale, &data[r], y),
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        let r = i * self.d..(i + 1) * self.d;
        let raw = match &self.data {
            Storage::F64(data) => linalg::dot(&data[r.clone()], &data[r]),
            Storage::F32(data) => {
                let row = &data[r];
                let mut acc = [0.0f64; 4];
                for c in row.chunks_exact(4) {
                    for l in 0..4 {
                        let x = f64::from(c[l]);
                        acc[l] += x * x;
                    }
                }
                let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
                for &x in row.chunks_exact(4).remainder() {
                    s += f64::from(x) * f64::from(x);
                }
                s
            }
        };
        self.scale * self.scale * raw
    }

    pub fn mean_row_norm(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let norms: Vec<f64> = (0..self.n).into_par_iter().map(|i| self.row_norm_sq(i).sqrt()).collect();
        norms.iter().sum::<f64>() / self.n as f64
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

/// Embedding of a single image.
pub fn embed_one(net: &Network, image: &Image, kind: EmbeddingKind) -> Result<Vec<f64>> {
    match kind {
        EmbeddingKind::FullTangent => net.grad_params(image),
        EmbeddingKind::Conjugate => {
            let acts = net.forward(image)?;
            acts.last_hidden().map(<[f64]>::to_vec).ok_or_else(no_hidden_layer)
        }
    }
}

fn no_hidden_layer() -> Error {
    Error::Config("network has no hidden layer, conjugate embedding undefined".into())
}

/// Dimension of the embedding of `kind` under `net`.
pub fn embedding_dim(net: &Network, kind: EmbeddingKind) -> Result<usize> {
    match kind {
        EmbeddingKind::FullTangent => Ok(net.param_count()),
        EmbeddingKind::Conjugate => net.last_hidden_len().ok_or_else(no_hidden_layer),
    }
}

/// Embeds every image with the network restored from `checkpoint`.
/// Epoch 0 gives the tangent kernel at initialization.
pub fn extract_embeddings(checkpoint: &Checkpoint, images: &[Image], kind: EmbeddingKind) -> Result<EmbeddingMatrix> {
    let net = checkpoint.network()?;
    let source = format!(
        "{}@epoch{}/seed{}",
        checkpoint.arch.map(|a| a.to_string()).unwrap_or_default(),
        checkpoint.epoch,
        checkpoint.seed
    );
    Ok(extract_with(&net, images, kind, Precision::F64)?.with_source(source))
}

/// Embeds every image with `net`, storing rows at `precision`. Rows are in
/// image order.
pub fn extract_with(net: &Network, images: &[Image], kind: EmbeddingKind, precision: Precision) -> Result<EmbeddingMatrix> {
    if images.is_empty() {
        return Err(Error::Input("cannot embed an empty image list".into()));
    }
    let d = embedding_dim(net, kind)?;
    let n = images.len();
    if d == 0 {
        return EmbeddingMatrix::from_data(kind, n, 0, Vec::new());
    }
    match precision {
        Precision::F64 => {
            let mut data = vec![0.0f64; n * d];
            data.par_chunks_mut(d).zip(images).try_for_each(|(row, image)| {
                row.copy_from_slice(&embed_one(net, image, kind)?);
                Ok::<_, Error>(())
            })?;
            EmbeddingMatrix::from_data(kind, n, d, data)
        }
        Precision::F32 => {
            let mut data = vec![0.0f32; n * d];
            data.par_chunks_mut(d).zip(images).try_for_each(|(row, image)| {
                for (o, x) in row.iter_mut().zip(embed_one(net, image, kind)?) {
                    *o = x as f32;
                }
                Ok::<_, Error>(())
            })?;
            EmbeddingMatrix::from_data_f32(kind, n, d, data)
        }
    }
}

/// `1 / mean(row norms)` over all rows of `parts` taken together.
pub fn fit_rescale(parts: &[&EmbeddingMatrix]) -> Result<f64> {
    let rows: usize = parts.iter().map(|e| e.n()).sum();
    let total: f64 = parts.iter().map(|e| e.mean_row_norm() * e.n() as f64).sum();
    if rows == 0 || total == 0.0 || !total.is_finite() {
        return Err(Error::Degenerate("every embedding row is zero, cannot rescale".into()));
    }
    Ok(rows as f64 / total)
}

/// Multiplies every row by `factor` and marks the matrix as rescaled.
pub fn apply_rescale(mut e: EmbeddingMatrix, factor: f64) -> EmbeddingMatrix {
    e.scale *= factor;
    e.rescaled = true;
    e
}

/// Scales the whole matrix by one scalar so the mean row norm is 1.
pub fn rescale_embeddings(e: EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let factor = fit_rescale(&[&e])?;
    Ok(apply_rescale(e, factor))
}
