use super::gram::GramMatrix;
use crate::error::{Error, Result};
use crate::linalg;

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Uncentered kernel alignment: the cosine between the flattened matrices.
pub fn alignment(g: &GramMatrix, h: &GramMatrix) -> Result<f64> {
    if (g.rows(), g.cols()) != (h.rows(), h.cols()) {
        return Err(Error::Input(format!(
            "cannot align a {}x{} Gram matrix with a {}x{} one",
            g.rows(),
            g.cols(),
            h.rows(),
            h.cols()
        )));
    }
    let (ng, nh) = (linalg::norm(g.data()), linalg::norm(h.data()));
    if ng == 0.0 || nh == 0.0 {
        return Err(Error::Degenerate("alignment of an all-zero Gram matrix".into()));
    }
    Ok((linalg::dot(g.data(), h.data()) / (ng * nh)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRank {
    /// `trace / lambda_max`, clamped to `[1, n]`.
    pub value: f64,
    pub lambda_max: f64,
    pub trace: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before convergence.
    pub converged: bool,
}

impl EffectiveRank {
    pub fn warning(&self) -> bool {
        !self.converged
    }
}

/// Ratio of the eigenvalue sum (the trace) to the largest eigenvalue.
///
/// The largest eigenvalue comes from power iteration started at the
/// normalized all-ones vector; it stops once successive Rayleigh quotients
/// differ by less than `1e-10 * trace`. If the all-ones vector lies in the
/// null space the start is the basis vector of the largest diagonal entry.
pub fn effective_rank(g: &GramMatrix) -> Result<EffectiveRank> {
    if !g.is_square() || g.rows() == 0 {
        return Err(Error::Input(format!(
            "effective rank needs a nonempty square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let n = g.rows();
    let trace = g.trace();
    if !(trace > 0.0) {
        return Err(Error::Degenerate(format!("Gram matrix has non-positive trace {trace}")));
    }
    let tol = POWER_ITERATION_TOL * trace;

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = g.mul_vec(&v);
    if linalg::norm(&w) == 0.0 {
        let k = (0..n).fold(0, |best, i| if g.get(i, i) > g.get(best, best) { i } else { best });
        v = vec![0.0; n];
        v[k] = 1.0;
        w = g.mul_vec(&v);
    }
    let mut lambda = linalg::dot(&v, &w);
    let mut iterations = 1;
    let mut converged = false;
    while iterations < POWER_ITERATION_CAP {
        let nw = linalg::norm(&w);
        if nw == 0.0 {
            converged = true;
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        w = g.mul_vec(&v);
        let next = linalg::dot(&v, &w);
        iterations += 1;
        let delta = (next - lambda).abs();
        lambda = lambda.max(next);
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("power iteration hit the {POWER_ITERATION_CAP}-iteration cap");
    }
    if !(lambda > 0.0) {
        return Err(Error::Degenerate("largest eigenvalue estimate is not positive".into()));
    }
    Ok(EffectiveRank {
        value: (trace / lambda).clamp(1.0, n as f64),
        lambda_max: lambda,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> GramMatrix {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        GramMatrix::from_data(n, n, data).unwrap()
    }

    #[test]
    fn alignment_hand_value() {
        let h = GramMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let a = alignment(&GramMatrix::identity(2), &h).unwrap();
        assert!((a - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn alignment_errors() {
        let z = diag(&[0.0, 0.0]);
        assert!(matches!(alignment(&z, &GramMatrix::identity(2)), Err(Error::Degenerate(_))));
        assert!(matches!(alignment(&GramMatrix::identity(3), &GramMatrix::identity(2)), Err(Error::Input(_))));
    }

    #[test]
    fn diagonal_ranks() {
        assert!((effective_rank(&diag(&[1.0, 1.0])).unwrap().value - 2.0).abs() < 1e-12);
        let r = effective_rank(&diag(&[3.0, 1.0])).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-9, "{}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn ones_vector_in_null_space() {
        let g = GramMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let r = effective_rank(&g).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(matches!(effective_rank(&diag(&[0.0, 0.0])), Err(Error::Degenerate(_))));
    }
}
