use rayon::prelude::*;

use super::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Rows of A per register tile.
const MR: usize = 4;
/// Rows of B per register tile.
const NR: usize = 8;
/// Columns (feature indices) per packed panel.
const KC: usize = 256;
/// Rows of B per cache block.
const NC: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GramOptions {
    /// Rows of the output handled by one parallel task.
    pub block_rows: usize,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions { block_rows: 256 }
    }
}

/// `n x m` matrix of inner products between two sets of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
    pub source: Option<String>,
}

impl GramMatrix {
    pub fn from_data(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::Input(format!("{} values do not form a {n}x{m} matrix", data.len())));
        }
        Ok(GramMatrix {
            n,
            m,
            data,
            source: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Input("ragged Gram rows".into()));
        }
        Self::from_data(rows.len(), m, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        GramMatrix {
            n,
            m: n,
            data,
            source: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn is_square(&self) -> bool {
        self.n == self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    /// Row-major values, i.e. the flattening used by alignment.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n.min(self.m)).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        GramMatrix {
            n: self.n,
            m: self.m,
            data: self.data.iter().map(|x| c * x).collect(),
            source: self.source.clone(),
        }
    }

    /// `G v` for a square matrix, one fixed-order dot per row.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .par_chunks(self.m.max(1))
            .take(self.n)
            .map(|row| crate::linalg::dot(row, v))
            .collect()
    }
}

/// `G[i][j] = A_i . B_j`.
///
/// Each entry is a single running sum over feature indices in ascending
/// order, so the result equals a plain triple loop bit for bit regardless of
/// block sizes or thread count. Passing the same matrix twice computes the
/// upper triangle and mirrors it.
pub fn gram(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<GramMatrix> {
    gram_with(a, b, GramOptions::default())
}

pub fn gram_with(a: &EmbeddingMatrix, b: &EmbeddingMatrix, opts: GramOptions) -> Result<GramMatrix> {
    if a.d() != b.d() {
        return Err(Error::Input(format!(
            "embedding dimensions differ: {} vs {}",
            a.d(),
            b.d()
        )));
    }
    let symmetric = std::ptr::eq(a, b);
    let data = compute(a, b, symmetric, opts.block_rows);
    let source = match (&a.source, &b.source) {
        (Some(x), _) if symmetric => Some(x.clone()),
        (Some(x), Some(y)) => Some(format!("{x} x {y}")),
        _ => None,
    };
    Ok(GramMatrix {
        n: a.n(),
        m: b.n(),
        data,
        source,
    })
}

fn compute(a: &EmbeddingMatrix, b: &EmbeddingMatrix, symmetric: bool, block_rows: usize) -> Vec<f64> {
    let (n, m, d) = (a.n(), b.n(), a.d());
    let mut out = vec![0.0; n * m];
    if n == 0 || m == 0 || d == 0 {
        return out;
    }
    let mc = block_rows.max(1).div_ceil(MR) * MR;
    out.par_chunks_mut(mc * m).enumerate().for_each(|(blk, c)| {
        let r0 = blk * mc;
        let rows = c.len() / m;
        let (mut ap, mut bp) = (Vec::new(), Vec::new());
        for j0 in (0..m).step_by(NC) {
            let cols = NC.min(m - j0);
            if symmetric && j0 + cols <= r0 {
                continue;
            }
            for k0 in (0..d).step_by(KC) {
                let kc = KC.min(d - k0);
                pack(a, r0, rows, k0, kc, MR, &mut ap);
                pack(b, j0, cols, k0, kc, NR, &mut bp);
                for (pi, apan) in ap.chunks_exact(MR * kc).enumerate() {
                    let i0 = pi * MR;
                    let ih = MR.min(rows - i0);
                    for (pj, bpan) in bp.chunks_exact(NR * kc).enumerate() {
                        let jj = j0 + pj * NR;
                        let jw = NR.min(cols - pj * NR);
                        if symmetric && jj + jw <= r0 + i0 {
                            continue;
                        }
                        let mut acc = [[0.0f64; NR]; MR];
                        for (ii, acc_row) in acc.iter_mut().enumerate().take(ih) {
                            let base = (i0 + ii) * m + jj;
                            acc_row[..jw].copy_from_slice(&c[base..base + jw]);
                        }
                        micro(apan, bpan, &mut acc);
                        for (ii, acc_row) in acc.iter().enumerate().take(ih) {
                            let base = (i0 + ii) * m + jj;
                            c[base..base + jw].copy_from_slice(&acc_row[..jw]);
                        }
                    }
                }
            }
        }
    });
    if symmetric {
        for i in 1..n {
            for j in 0..i {
                out[i * m + j] = out[j * m + i];
            }
        }
    }
    out
}

/// Copies rows `start..start + count`, columns `k0..k0 + kc` into panels of
/// `width` rows laid out as `[panel][k][lane]`, zero-padding the last panel.
fn pack(src: &EmbeddingMatrix, start: usize, count: usize, k0: usize, kc: usize, width: usize, buf: &mut Vec<f64>) {
    let panels = count.div_ceil(width);
    buf.clear();
    buf.resize(panels * width * kc, 0.0);
    let mut row = vec![0.0; kc];
    for r in 0..count {
        src.read_row(start + r, k0, &mut row);
        let base = (r / width) * width * kc + r % width;
        for (k, &v) in row.iter().enumerate() {
            buf[base + k * width] = v;
        }
    }
}

#[inline(always)]
fn micro(a: &[f64], b: &[f64], acc: &mut [[f64; NR]; MR]) {
    for (av, bv) in a.chunks_exact(MR).zip(b.chunks_exact(NR)) {
        for i in 0..MR {
            for j in 0..NR {
                acc[i][j] += av[i] * bv[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{apply_rescale, EmbeddingKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::new();
        for x in a {
            for y in b {
                let mut s = 0.0;
                for k in 0..x.len() {
                    s += x[k] * y[k];
                }
                out.push(s);
            }
        }
        out
    }

    fn random(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingMatrix::from_data(EmbeddingKind::FullTangent, n, d, data).unwrap()
    }

    #[test]
    fn hand_example() {
        let a = EmbeddingMatrix::from_rows(EmbeddingKind::Conjugate, &[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(gram(&a, &a).unwrap().data(), &[1.0, 1.0, 1.0, 2.0]);
        let id = EmbeddingMatrix::from_rows(EmbeddingKind::Conjugate, &[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(gram(&id, &id).unwrap(), GramMatrix::identity(2));
    }

    #[test]
    fn matches_naive_loop_exactly() {
        for (n, m, d, block) in [(5, 5, 7, 256), (9, 13, 300, 4), (17, 3, 600, 5), (1, 1, 1, 1)] {
            let a = random(n, d, n as u64);
            let b = random(m, d, 100 + m as u64);
            let g = gram_with(&a, &b, GramOptions { block_rows: block }).unwrap();
            assert_eq!(g.data(), naive(&a.to_rows(), &b.to_rows()).as_slice());
            let s = gram_with(&a, &a, GramOptions { block_rows: block }).unwrap();
            assert_eq!(s.data(), naive(&a.to_rows(), &a.to_rows()).as_slice());
        }
    }

    #[test]
    fn scaled_f32_rows_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..11 * 270).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = EmbeddingMatrix::from_data_f32(EmbeddingKind::FullTangent, 11, 270, data).unwrap();
        let e = apply_rescale(e, 0.37);
        let rows = e.to_rows();
        assert_eq!(gram(&e, &e).unwrap().data(), naive(&rows, &rows).as_slice());
    }

    #[test]
    fn symmetric_and_independent_of_block_size() {
        let a = random(37, 520, 8);
        let g1 = gram_with(&a, &a, GramOptions { block_rows: 1 }).unwrap();
        let g2 = gram_with(&a, &a, GramOptions { block_rows: 1000 }).unwrap();
        assert_eq!(g1, g2);
        for i in 0..37 {
            for j in 0..37 {
                assert_eq!(g1.get(i, j), g1.get(j, i));
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(gram(&random(2, 3, 0), &random(2, 4, 0)), Err(Error::Input(_))));
    }
}
