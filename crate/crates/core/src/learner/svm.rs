//! Soft-margin SVM with a Gaussian kernel, trained by SMO.
//!
//! The dual solved here is
//!
//! ```text
//! min  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Working pairs are chosen by maximal violation with second-order gain
//! (Fan, Chen and Lin, 2005). The full kernel matrix is held in memory, which
//! is fine for the few hundred samples an artificial training set has.

use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Stopping rule: maximal KKT violation `tol`, iteration cap `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Symmetric matrix of pairwise squared distances, row-major.
pub fn pairwise_sq_dist(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&rows[i], &rows[j]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Optimal dual variables and offset; the decision function is
/// `sum_i alpha_i y_i K(x_i, x) - rho`.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// SMO on an explicit `n`×`n` kernel matrix (row-major) with labels in ±1.
pub fn solve_dual(kernel: &[f64], y: &[f64], c: f64, params: &SmoParams) -> DualSolution {
    let n = y.len();
    debug_assert_eq!(kernel.len(), n * n);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| kernel[i * n + i]).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        // i: maximal -y_t G_t over the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 {
                !upper(alpha[t])
            } else {
                !lower(alpha[t])
            };
            if in_up {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        if i_sel == usize::MAX {
            converged = true;
            break;
        }
        let i = i_sel;
        let ki = &kernel[i * n..(i + 1) * n];

        // j: best second-order gain over the "low" set
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 {
                !lower(alpha[t])
            } else {
                !upper(alpha[t])
            };
            if !in_low {
                continue;
            }
            let v = y[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let gap = gmax + v;
            if gap > 0.0 {
                let quad = diag[i] + diag[t] - 2.0 * ki[t];
                let gain = -(gap * gap) / if quad > 0.0 { quad } else { TAU };
                if gain <= best {
                    best = gain;
                    j_sel = t;
                }
            }
        }
        if gmax + gmax2 < params.tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = ki[j];
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * y[i] * y[j] * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * y[i] * y[j] * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        let kj = &kernel[j * n..(j + 1) * n];
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }

    // offset: mean over free variables, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = 0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();

    DualSolution {
        alpha,
        rho,
        objective,
        iterations,
        converged,
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Trained Gaussian-kernel classifier together with the feature selection and
/// standardization it expects its inputs to go through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub bias: f64,
    pub alphas: Vec<f64>,
    pub sv_labels: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub selected_indices: Vec<usize>,
    /// Dimension of the raw feature vectors the model accepts.
    pub input_dim: usize,
}

impl SvmModel {
    /// Decision value of an already selected and standardized vector.
    pub fn decision_prepared(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.sv_labels))
            .map(|(sv, (a, y))| a * y * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Select and standardize a raw vector.
    pub fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(self
            .selected_indices
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(&i, (m, s))| (x[i] - m) / s)
            .collect())
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        Ok(self.decision_prepared(&self.prepare(x)?))
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            mean: self.feature_mean.clone(),
            std: self.feature_std.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SvmModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

fn check_training_set(rows: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: y.len(),
        });
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::SingleClass);
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Train on already standardized rows with ±1 labels. The returned model has
/// identity selection and standardization.
pub fn train_gsvm(rows: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> Result<SvmModel> {
    train_gsvm_with(rows, y, c, gamma, &SmoParams::default())
}

pub fn train_gsvm_with(
    rows: &[Vec<f64>],
    y: &[f64],
    c: f64,
    gamma: f64,
    params: &SmoParams,
) -> Result<SvmModel> {
    check_training_set(rows, y)?;
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "C and gamma must be positive (C={c}, gamma={gamma})"
        )));
    }
    let d2 = pairwise_sq_dist(rows);
    let kernel: Vec<f64> = d2.iter().map(|&d| (-gamma * d).exp()).collect();
    let sol = solve_dual(&kernel, y, c, params);
    Ok(model_from_solution(rows, y, &sol, c, gamma))
}

pub(crate) fn model_from_solution(
    rows: &[Vec<f64>],
    y: &[f64],
    sol: &DualSolution,
    c: f64,
    gamma: f64,
) -> SvmModel {
    let d = rows.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..rows.len()).filter(|&i| sol.alpha[i] > 1e-8).collect();
    SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        gamma,
        c,
        bias: -sol.rho,
        alphas: keep.iter().map(|&i| sol.alpha[i]).collect(),
        sv_labels: keep.iter().map(|&i| y[i]).collect(),
        support_vectors: keep.iter().map(|&i| rows[i].clone()).collect(),
        feature_mean: vec![0.0; d],
        feature_std: vec![1.0; d],
        selected_indices: (0..d).collect(),
        input_dim: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_symmetric_boundary() {
        let rows = vec![vec![-1.0], vec![1.0]];
        let y = [-1.0, 1.0];
        let m = train_gsvm(&rows, &y, 10.0, 0.5).unwrap();
        assert_eq!(m.alphas.len(), 2);
        assert!((m.alphas[0] - m.alphas[1]).abs() < 1e-9);
        // closed form: a = 1 / (1 - exp(-2))
        let a = 1.0 / (1.0 - (-2.0f64).exp());
        assert!((m.alphas[0] - a).abs() < 1e-6, "{}", m.alphas[0]);
        assert!(m.decision(&[0.0]).unwrap().abs() < 1e-6);
        assert!(m.decision(&[-2.0]).unwrap() < 0.0);
        assert!((m.decision(&[1.0]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_single_class_and_nan() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_gsvm(&rows, &[1.0, 1.0], 1.0, 1.0),
            Err(Error::SingleClass)
        ));
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            train_gsvm(&bad, &[-1.0, 1.0], 1.0, 1.0),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn dimension_checked_on_predict() {
        let m = train_gsvm(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[-1.0, 1.0], 1.0, 1.0).unwrap();
        assert!(matches!(
            m.decision(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn json_roundtrip() {
        let m = train_gsvm(&[vec![0.0, 1.0], vec![1.0, 0.5]], &[-1.0, 1.0], 2.0, 0.25).unwrap();
        let s = m.to_json().unwrap();
        assert!(s.contains("\"format_version\": 1"));
        assert_eq!(SvmModel::from_json(&s).unwrap(), m);
    }
}
