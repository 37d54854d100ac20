//! The artificial-training-set classifier.
//!
//! For a test set `A`, build `B = s[A]` and `C = s[B]` with the splitting
//! function `s`, train a classifier on `A` (first label) against `C` (second
//! label), classify every element of `B`, and give each `a_i` the label
//! predicted for `b_i`: first maps to cover, second to stego.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_spam, FeatureMatrix, FeatureVector, SpamParams};
use crate::image_io::GrayImage;
use crate::learner::{self, FittedClassifier, LearnerParams};
use crate::stego::{ensure_unique_ids, split_one, EmbedConfig};
use crate::{Label, TrainLabel};

/// Predicted stego fractions outside `[LOW, HIGH]` get a warning: the method
/// is only expected to work when both classes are reasonably represented.
pub const STEGO_FRACTION_LOW: f64 = 0.10;
pub const STEGO_FRACTION_HIGH: f64 = 0.95;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtsParams {
    #[serde(default)]
    pub features: SpamParams,
    #[serde(default)]
    pub learner: LearnerParams,
}

/// Features of one test image and of its first and second embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTriple {
    pub id: String,
    pub a: FeatureVector,
    pub b: FeatureVector,
    pub c: FeatureVector,
}

/// Embed once and twice, then extract features of all three versions.
pub fn image_triple(
    img: &GrayImage,
    split: &EmbedConfig,
    spam: &SpamParams,
) -> Result<ImageTriple> {
    let wrap = |id: &str, e: Error| Error::Extraction {
        id: id.to_string(),
        source: Box::new(e),
    };
    let b = split_one(img, split);
    let c = split_one(&b, split);
    Ok(ImageTriple {
        id: img.id().to_string(),
        a: extract_spam(img, spam).map_err(|e| wrap(img.id(), e))?,
        b: extract_spam(&b, spam).map_err(|e| wrap(b.id(), e))?,
        c: extract_spam(&c, spam).map_err(|e| wrap(c.id(), e))?,
    })
}

pub fn image_triples(
    images: &[GrayImage],
    split: &EmbedConfig,
    spam: &SpamParams,
) -> Result<Vec<ImageTriple>> {
    ensure_unique_ids(images)?;
    images
        .par_iter()
        .map(|img| image_triple(img, split, spam))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub id: String,
    pub label: Label,
    pub decision: f64,
}

/// Confusion counts with stego as the positive class. Stored as reals so
/// averages over repeated experiments fit the same type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl Counts {
    pub fn total(&self) -> f64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) / self.total()
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Stego, Label::Stego) => self.tp += 1.0,
            (Label::Cover, Label::Cover) => self.tn += 1.0,
            (Label::Cover, Label::Stego) => self.fp += 1.0,
            (Label::Stego, Label::Cover) => self.fn_ += 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Best cross-validated accuracy of `A` against `C` during the grid search.
    pub ac_cv_accuracy: f64,
    pub n: usize,
    pub predicted_stego_fraction: f64,
    /// Training set class sizes `(|A|, |C|)`.
    pub class_sizes: (usize, usize),
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub selected_features: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtsReport {
    pub per_image: Vec<ImageVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<Counts>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl AtsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `id,label,decision` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["id", "label", "decision"])?;
        for v in &self.per_image {
            wtr.write_record([v.id.as_str(), v.label.as_str(), &v.decision.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn labels(&self) -> HashMap<&str, Label> {
        self.per_image
            .iter()
            .map(|v| (v.id.as_str(), v.label))
            .collect()
    }
}

/// Id lists of every set touched by one run, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub a_ids: Vec<String>,
    pub b_ids: Vec<String>,
    pub c_ids: Vec<String>,
    pub train_ids: Vec<String>,
    pub train_labels: Vec<TrainLabel>,
    /// Label predicted for each `b_i`, in input order.
    pub b_labels: Vec<TrainLabel>,
}

impl Audit {
    /// Check the structural contract of a run: equal set sizes, a balanced
    /// training set made of `A` and `C` only, no element of `B` used for
    /// training, and labels of `A` translated from those of `B`.
    pub fn verify(&self, report: &AtsReport) -> std::result::Result<(), String> {
        let n = self.a_ids.len();
        if self.b_ids.len() != n || self.c_ids.len() != n {
            return Err(format!(
                "set sizes differ: |A|={n} |B|={} |C|={}",
                self.b_ids.len(),
                self.c_ids.len()
            ));
        }
        let first = self
            .train_labels
            .iter()
            .filter(|&&l| l == TrainLabel::First)
            .count();
        let second = self.train_labels.len() - first;
        if first != n || second != n {
            return Err(format!("unbalanced training set: {first} vs {second}"));
        }
        let train: HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        if let Some(b) = self.b_ids.iter().find(|b| train.contains(b.as_str())) {
            return Err(format!("test element `{b}` found in the training set"));
        }
        let a: HashSet<&str> = self.a_ids.iter().map(String::as_str).collect();
        let c: HashSet<&str> = self.c_ids.iter().map(String::as_str).collect();
        for (id, l) in self.train_ids.iter().zip(&self.train_labels) {
            let ok = match l {
                TrainLabel::First => a.contains(id.as_str()),
                TrainLabel::Second => c.contains(id.as_str()),
            };
            if !ok {
                return Err(format!("training element `{id}` has the wrong origin"));
            }
        }
        if report.per_image.len() != n {
            return Err("report does not cover every input".into());
        }
        for ((v, a_id), b_label) in report.per_image.iter().zip(&self.a_ids).zip(&self.b_labels) {
            if &v.id != a_id {
                return Err(format!(
                    "report id `{}` does not match input `{a_id}`",
                    v.id
                ));
            }
            if v.label != b_label.to_label() {
                return Err(format!(
                    "label of `{a_id}` not translated from its image in B"
                ));
            }
        }
        Ok(())
    }
}

/// Everything a run produces; [`AtsReport`] is the public summary.
#[derive(Debug, Clone)]
pub struct AtsRun {
    pub report: AtsReport,
    pub fitted: FittedClassifier,
    pub audit: Audit,
}

fn check_truth(ids: &[String], truth: &HashMap<String, Label>) -> Result<()> {
    let known: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if let Some(extra) = truth.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::TruthMismatch(format!(
            "`{extra}` is not in the test set"
        )));
    }
    if let Some(missing) = ids.iter().find(|id| !truth.contains_key(*id)) {
        return Err(Error::TruthMismatch(format!(
            "no ground truth for `{missing}`"
        )));
    }
    Ok(())
}

/// Run the pipeline from precomputed feature triples.
///
/// The training set is assembled in id order so the result does not depend
/// on the order of `triples`.
pub fn ats_run_features(
    triples: &[ImageTriple],
    params: &AtsParams,
    truth: Option<&HashMap<String, Label>>,
) -> Result<AtsRun> {
    let n = triples.len();
    if n < 2 {
        return Err(Error::TooFewImages {
            required: 2,
            got: n,
        });
    }
    let a_ids: Vec<String> = triples.iter().map(|t| t.id.clone()).collect();
    {
        let mut seen = HashSet::new();
        if let Some(dup) = a_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
    }
    if let Some(t) = truth {
        check_truth(&a_ids, t)?;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| triples[i].id.cmp(&triples[j].id));
    let mut rows = Vec::with_capacity(2 * n);
    let mut train_labels = Vec::with_capacity(2 * n);
    for &i in &order {
        rows.push(triples[i].a.clone());
        train_labels.push(TrainLabel::First);
    }
    for &i in &order {
        rows.push(triples[i].c.clone());
        train_labels.push(TrainLabel::Second);
    }
    let train_ids: Vec<String> = rows.iter().map(|r| r.image_id.clone()).collect();
    let train = FeatureMatrix::new(rows)?.with_labels(train_labels.clone())?;
    // each class holds n samples, so tiny sets fall back to fewer folds
    let learner_params = LearnerParams {
        folds: params.learner.folds.min(n).max(2),
        ..params.learner.clone()
    };
    let fitted = learner::fit(&train, &learner_params)?;

    let mut per_image = Vec::with_capacity(n);
    let mut b_labels = Vec::with_capacity(n);
    for t in triples {
        let (label, decision) = fitted.predict(&t.b.values)?;
        b_labels.push(label);
        per_image.push(ImageVerdict {
            id: t.id.clone(),
            label: label.to_label(),
            decision,
        });
    }

    let stego = per_image.iter().filter(|v| v.label == Label::Stego).count();
    let fraction = stego as f64 / n as f64;
    let warning = if fraction < STEGO_FRACTION_LOW {
        Some(format!(
            "predicted stego fraction {fraction:.3} is below {STEGO_FRACTION_LOW}: the set may be (almost) all cover and labels are unreliable"
        ))
    } else if fraction > STEGO_FRACTION_HIGH {
        Some(format!(
            "predicted stego fraction {fraction:.3} is above {STEGO_FRACTION_HIGH}: labels are unreliable"
        ))
    } else {
        None
    };

    let (counts, accuracy) = match truth {
        Some(t) => {
            let mut c = Counts::default();
            for v in &per_image {
                c.record(t[&v.id], v.label);
            }
            (Some(c), Some(c.accuracy()))
        }
        None => (None, None),
    };

    let report = AtsReport {
        per_image,
        counts,
        accuracy,
        diagnostics: Diagnostics {
            ac_cv_accuracy: fitted.grid.cv_accuracy,
            n,
            predicted_stego_fraction: fraction,
            class_sizes: (n, n),
            c: fitted.grid.c,
            gamma: fitted.grid.gamma,
            selected_features: fitted.model.selected_indices.len(),
            warning,
        },
    };
    let audit = Audit {
        a_ids,
        b_ids: triples.iter().map(|t| t.b.image_id.clone()).collect(),
        c_ids: triples.iter().map(|t| t.c.image_id.clone()).collect(),
        train_ids,
        train_labels,
        b_labels,
    };
    debug_assert_eq!(audit.verify(&report), Ok(()));
    Ok(AtsRun {
        report,
        fitted,
        audit,
    })
}

pub fn ats_run(
    images: &[GrayImage],
    split: &EmbedConfig,
    params: &AtsParams,
    truth: Option<&HashMap<String, Label>>,
) -> Result<AtsRun> {
    if images.len() < 2 {
        return Err(Error::TooFewImages {
            required: 2,
            got: images.len(),
        });
    }
    let triples = image_triples(images, split, &params.features)?;
    ats_run_features(&triples, params, truth)
}

/// Classify every image of `images` as cover or stego without any external
/// training data. `truth`, when given, only fills the confusion counts.
pub fn ats_classify(
    images: &[GrayImage],
    split: &EmbedConfig,
    params: &AtsParams,
    truth: Option<&HashMap<String, Label>>,
) -> Result<AtsReport> {
    ats_run(images, split, params, truth).map(|r| r.report)
}

/// Cross-validated separability of the three pairs built from `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub a_vs_c: f64,
    pub a_vs_b: f64,
    pub b_vs_c: f64,
}

/// Best grid-search CV accuracy of the learner stack on `first` vs `second`.
pub fn pair_cv_accuracy(
    first: &[FeatureVector],
    second: &[FeatureVector],
    learner: &LearnerParams,
) -> Result<f64> {
    let rows: Vec<FeatureVector> = first.iter().chain(second).cloned().collect();
    let labels = std::iter::repeat_n(TrainLabel::First, first.len())
        .chain(std::iter::repeat_n(TrainLabel::Second, second.len()))
        .collect();
    let m = FeatureMatrix::new(rows)?.with_labels(labels)?;
    let folds = learner.folds.min(first.len()).min(second.len()).max(2);
    let params = LearnerParams {
        folds,
        ..learner.clone()
    };
    Ok(learner::fit(&m, &params)?.grid.cv_accuracy)
}

/// Empirical check that `A`, `s[A]` and `s[s[A]]` are mutually separable.
pub fn disjointness_probe(
    images: &[GrayImage],
    split: &EmbedConfig,
    params: &AtsParams,
) -> Result<ProbeResult> {
    if images.len() < 4 {
        return Err(Error::TooFewImages {
            required: 4,
            got: images.len(),
        });
    }
    let triples = image_triples(images, split, &params.features)?;
    let a: Vec<_> = triples.iter().map(|t| t.a.clone()).collect();
    let b: Vec<_> = triples.iter().map(|t| t.b.clone()).collect();
    let c: Vec<_> = triples.iter().map(|t| t.c.clone()).collect();
    Ok(ProbeResult {
        a_vs_c: pair_cv_accuracy(&a, &c, &params.learner)?,
        a_vs_b: pair_cv_accuracy(&a, &b, &params.learner)?,
        b_vs_c: pair_cv_accuracy(&b, &c, &params.learner)?,
    })
}
