//! L2-regularized squared-hinge linear SVM solved by dual coordinate
//! descent. The intercept is an extra constant-1 feature and is regularized
//! like every other weight.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::EmbeddingMatrix;
use crate::nn::Cursor;

pub const MODEL_MAGIC: &[u8; 4] = b"AKSV";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// Stop once the largest projected-gradient magnitude in a sweep is
    /// below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 100.0,
            tolerance: 1e-4,
            max_sweeps: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvmDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub max_violation: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub support_vectors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub diagnostics: SvmDiagnostics,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, b: f64) -> Self {
        LinearModel {
            w,
            b,
            diagnostics: SvmDiagnostics::default(),
        }
    }

    pub fn decision(&self, e: &EmbeddingMatrix, i: usize) -> f64 {
        e.row_dot(i, &self.w) + self.b
    }

    /// `+1.0` when the decision value is `>= 0`, else `-1.0`.
    pub fn predict(&self, e: &EmbeddingMatrix, i: usize) -> f64 {
        if self.decision(e, i) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `AKSV`, version (u32), d (u64), `w` as f64, `b` as f64, little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(self.w.len() as u64).to_le_bytes())?;
        for x in self.w.iter().chain([&self.b]) {
            out.write_all(&x.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::format(0, "not an SVM model file (bad magic)"));
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(4, format!("unsupported model version {version}")));
        }
        let d = usize::try_from(cur.u64()?).map_err(|_| Error::format(8, "dimension too large"))?;
        let len = d.checked_add(1).and_then(|k| k.checked_mul(8)).ok_or_else(|| Error::format(8, "dimension too large"))?;
        let mut values: Vec<f64> = cur
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if !cur.is_done() {
            return Err(Error::format(cur.pos as u64, "trailing bytes after model"));
        }
        let b = values.pop().expect("d + 1 values");
        Ok(LinearModel::new(values, b))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn check_labels(labels: &[f64], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Input(format!("{} labels for {n} examples", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Input(format!("label {bad} is not -1 or +1")));
    }
    Ok(())
}

pub fn train_svm(e: &EmbeddingMatrix, labels: &[f64], c: f64) -> Result<LinearModel> {
    train_svm_with(e, labels, &SvmConfig { c, ..SvmConfig::default() })
}

/// Minimizes `0.5 |w~|^2 + C sum max(0, 1 - y_i w~ . x~_i)^2` where `x~`
/// appends a constant 1 to each row and `w~ = (w, b)`.
///
/// Each sweep visits the examples in a fresh permutation drawn from a
/// generator seeded with `cfg.seed`. Examples at `alpha = 0` whose gradient
/// exceeds the largest projected gradient of the previous sweep are dropped
/// from later sweeps; once the remaining ones meet the tolerance, a full
/// sweep over every example decides convergence.
pub fn train_svm_with(e: &EmbeddingMatrix, labels: &[f64], cfg: &SvmConfig) -> Result<LinearModel> {
    let n = e.n();
    check_labels(labels, n)?;
    if n < 2 {
        return Err(Error::Input("the SVM needs at least two examples".into()));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::Input("the SVM needs both classes in the training labels".into()));
    }
    if !e.is_rescaled() {
        return Err(Error::Precondition("SVM features must be rescaled before training".into()));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::Config(format!("C = {} must be positive", cfg.c)));
    }

    let diag = 0.5 / cfg.c;
    let qbar: Vec<f64> = (0..n).map(|i| e.row_norm_sq(i) + 1.0 + diag).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; e.d()];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut shrink_above = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut diagnostics = SvmDiagnostics::default();

    while diagnostics.sweeps < cfg.max_sweeps {
        order[..active].shuffle(&mut rng);
        let mut max_pg = 0.0f64;
        let mut max_g = f64::NEG_INFINITY;
        let mut s = 0;
        while s < active {
            let i = order[s];
            let y = labels[i];
            let g = y * (e.row_dot(i, &w) + b) - 1.0 + diag * alpha[i];
            if alpha[i] == 0.0 && g > shrink_above {
                active -= 1;
                order.swap(s, active);
                continue;
            }
            s += 1;
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            max_pg = max_pg.max(pg.abs());
            max_g = max_g.max(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qbar[i]).max(0.0);
                let step = (alpha[i] - old) * y;
                if step != 0.0 {
                    e.row_axpy(i, step, &mut w);
                    b += step;
                }
            }
        }
        diagnostics.sweeps += 1;
        diagnostics.max_violation = max_pg;
        if max_pg < cfg.tolerance {
            if active == n {
                diagnostics.converged = true;
                break;
            }
            active = n;
            shrink_above = f64::INFINITY;
        } else {
            shrink_above = if max_g > 0.0 { max_g } else { f64::INFINITY };
        }
    }
    if !diagnostics.converged {
        log::warn!(
            "SVM stopped after {} sweeps with violation {:.3e}",
            diagnostics.sweeps,
            diagnostics.max_violation
        );
    }

    let reg = 0.5 * (crate::linalg::dot(&w, &w) + b * b);
    let hinge: f64 = (0..n)
        .map(|i| (1.0 - labels[i] * (e.row_dot(i, &w) + b)).max(0.0).powi(2))
        .sum();
    diagnostics.primal_objective = reg + cfg.c * hinge;
    diagnostics.dual_objective = alpha.iter().sum::<f64>() - reg - 0.5 * diag * alpha.iter().map(|a| a * a).sum::<f64>();
    diagnostics.support_vectors = alpha.iter().filter(|&&a| a > 0.0).count();
    Ok(LinearModel { w, b, diagnostics })
}

/// Fraction of rows whose predicted sign disagrees with the label.
pub fn svm_test_error(model: &LinearModel, e: &EmbeddingMatrix, labels: &[f64]) -> Result<f64> {
    if model.w.len() != e.d() {
        return Err(Error::Input(format!(
            "model has {} weights, features have {} columns",
            model.w.len(),
            e.d()
        )));
    }
    check_labels(labels, e.n())?;
    if e.n() == 0 {
        return Err(Error::Input("test set is empty".into()));
    }
    if !e.is_rescaled() {
        return Err(Error::Precondition("test features must carry the training rescale".into()));
    }
    let wrong = (0..e.n()).filter(|&i| model.predict(e, i) != labels[i]).count();
    Ok(wrong as f64 / e.n() as f64)
}
