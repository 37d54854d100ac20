//! Stratified k-fold cross-validation over a multiplicative (C, gamma) grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{pairwise_sq_dist, solve_dual, SmoParams};
use crate::error::{Error, Result};

/// Powers of two for C and gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub c_exponents: Vec<i32>,
    pub gamma_exponents: Vec<i32>,
}

impl Default for Grid {
    /// C in {2^-5, 2^-3, ..., 2^15}, gamma in {2^-15, 2^-13, ..., 2^3}.
    fn default() -> Self {
        Self {
            c_exponents: (-5..=15).step_by(2).collect(),
            gamma_exponents: (-15..=3).step_by(2).collect(),
        }
    }
}

impl Grid {
    pub fn c_values(&self) -> Vec<f64> {
        self.c_exponents.iter().map(|&e| 2f64.powi(e)).collect()
    }

    pub fn gamma_values(&self) -> Vec<f64> {
        self.gamma_exponents.iter().map(|&e| 2f64.powi(e)).collect()
    }

    pub fn len(&self) -> usize {
        self.c_exponents.len() * self.gamma_exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pairs in evaluation order: C ascending, then gamma ascending.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let gammas = self.gamma_values();
        self.c_values()
            .into_iter()
            .flat_map(|c| gammas.iter().map(move |&g| (c, g)))
            .collect()
    }
}

/// Fold index per sample; each class is shuffled with `seed` and dealt
/// round-robin so folds stay stratified.
pub fn stratified_folds(y: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "folds must be >= 2, got {folds}"
        )));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= 0.0).collect();
    let smallest = pos.len().min(neg.len());
    if smallest < folds {
        return Err(Error::ClassTooSmall {
            folds,
            size: smallest,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; y.len()];
    let mut offset = 0;
    for mut class in [neg, pos] {
        class.shuffle(&mut rng);
        for (k, &i) in class.iter().enumerate() {
            assignment[i] = (offset + k) % folds;
        }
        offset += class.len();
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: f64,
    /// Every evaluated pair in grid order.
    pub table: Vec<GridPoint>,
}

/// Cross-validated accuracy for every grid pair; returns the best pair, ties
/// going to the smaller C and then the smaller gamma.
pub fn grid_search(
    rows: &[Vec<f64>],
    y: &[f64],
    grid: &Grid,
    folds: usize,
    seed: u64,
    smo: &SmoParams,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: y.len(),
        });
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v <= 0.0)) {
        return Err(Error::SingleClass);
    }
    let assignment = stratified_folds(y, folds, seed)?;
    let n = rows.len();
    let d2 = pairwise_sq_dist(rows);
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            (train, test)
        })
        .collect();
    let c_values = grid.c_values();

    // correct[gamma][c]
    let per_gamma: Vec<Vec<usize>> = grid
        .gamma_values()
        .par_iter()
        .map(|&gamma| {
            let kernel: Vec<f64> = d2.iter().map(|&d| (-gamma * d).exp()).collect();
            let mut correct = vec![0usize; c_values.len()];
            for (train, test) in &split {
                let m = train.len();
                let mut sub = Vec::with_capacity(m * m);
                for &i in train {
                    sub.extend(train.iter().map(|&j| kernel[i * n + j]));
                }
                let ys: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                for (ci, &c) in c_values.iter().enumerate() {
                    let sol = solve_dual(&sub, &ys, c, smo);
                    for &t in test {
                        let f: f64 = train
                            .iter()
                            .zip(&sol.alpha)
                            .filter(|(_, &a)| a > 0.0)
                            .map(|(&i, &a)| a * y[i] * kernel[i * n + t])
                            .sum::<f64>()
                            - sol.rho;
                        let predicted = if f > 0.0 { 1.0 } else { -1.0 };
                        if (predicted > 0.0) == (y[t] > 0.0) {
                            correct[ci] += 1;
                        }
                    }
                }
            }
            correct
        })
        .collect();

    let gammas = grid.gamma_values();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, usize, usize)> = None;
    for (ci, &c) in c_values.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let correct = per_gamma[gi][ci];
            table.push(GridPoint {
                c,
                gamma,
                correct,
                accuracy: correct as f64 / n as f64,
            });
            if best.is_none_or(|(_, _, b)| correct > b) {
                best = Some((ci, gi, correct));
            }
        }
    }
    let (ci, gi, correct) = best.expect("non-empty grid");
    Ok(GridResult {
        c: c_values[ci],
        gamma: gammas[gi],
        cv_accuracy: correct as f64 / n as f64,
        table,
    })
}
