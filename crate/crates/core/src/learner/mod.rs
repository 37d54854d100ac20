//! Binary classification stack: ANOVA-F selection, standardization, grid
//! search and a Gaussian-kernel SVM.

pub mod anova;
pub mod grid;
pub mod scale;
pub mod svm;

use serde::{Deserialize, Serialize};

pub use anova::{anova_f, select_top_k};
pub use grid::{grid_search, stratified_folds, Grid, GridResult};
pub use scale::Standardizer;
pub use svm::{solve_dual, train_gsvm, train_gsvm_with, DualSolution, SmoParams, SvmModel};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::TrainLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerParams {
    /// Number of features kept after ANOVA ranking.
    pub k: usize,
    pub folds: usize,
    pub fold_seed: u64,
    pub grid: Grid,
    pub smo: SmoParams,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            k: 500,
            folds: 5,
            fold_seed: 0,
            grid: Grid::default(),
            smo: SmoParams::default(),
        }
    }
}

/// A fitted selection + standardization + SVM stack.
#[derive(Debug, Clone)]
pub struct FittedClassifier {
    pub model: SvmModel,
    /// F score of every raw feature on the training set.
    pub anova_scores: Vec<f64>,
    pub grid: GridResult,
}

impl FittedClassifier {
    pub fn predict(&self, x: &[f64]) -> Result<(TrainLabel, f64)> {
        predict(&self.model, x)
    }
}

/// Label `Second` iff the decision value is strictly positive.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<(TrainLabel, f64)> {
    let f = model.decision(x)?;
    let label = if f > 0.0 {
        TrainLabel::Second
    } else {
        TrainLabel::First
    };
    Ok((label, f))
}

/// Fit the whole stack on a labeled matrix.
pub fn fit(train: &FeatureMatrix, params: &LearnerParams) -> Result<FittedClassifier> {
    let labels = train
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("training matrix has no labels".into()))?;
    if params.k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let raw = train.values();
    if raw.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let group: Vec<bool> = labels.iter().map(|&l| l == TrainLabel::Second).collect();
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();

    let anova_scores = anova_f(&raw, &group)?;
    let selected = select_top_k(&anova_scores, params.k);
    let picked: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| selected.iter().map(|&i| r[i]).collect())
        .collect();
    let picked_refs: Vec<&[f64]> = picked.iter().map(Vec::as_slice).collect();
    let scaler = Standardizer::fit(&picked_refs);
    let z = scaler.apply(&picked_refs);

    let grid = grid_search(
        &z,
        &y,
        &params.grid,
        params.folds,
        params.fold_seed,
        &params.smo,
    )?;
    let mut model = train_gsvm_with(&z, &y, grid.c, grid.gamma, &params.smo)?;
    model.feature_mean = scaler.mean;
    model.feature_std = scaler.std;
    model.selected_indices = selected;
    model.input_dim = train.dim();
    Ok(FittedClassifier {
        model,
        anova_scores,
        grid,
    })
}
