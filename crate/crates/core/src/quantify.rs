//! Unknown bit rate search by centroid score, and streaming classification
//! with a per-image confidence level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ats::{
    ats_run_features, image_triple, image_triples, AtsParams, AtsReport, AtsRun, ImageTriple,
};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::image_io::GrayImage;
use crate::learner::select_top_k;
use crate::stego::{Algorithm, EmbedConfig};
use crate::Label;

/// Number of top-ranked ANOVA features the centroid distances use.
pub const CENTROID_FEATURES: usize = 50;

/// Per-dimension mean of a non-empty list of vectors.
pub fn centroid(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for v in vectors {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub fn centroid_of(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let refs: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    Ok(FeatureVector::new("centroid", centroid(&refs)?))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `d(A_stego, B_stego) / d(A_cover, A_stego)` with Euclidean `d`.
///
/// Small when the stego part of `A` looks like the embedded covers of `B`
/// while staying far from the cover part of `A`.
pub fn score_s(a_cover: &[f64], a_stego: &[f64], b_stego: &[f64]) -> Result<f64> {
    if a_cover.len() != a_stego.len() || a_stego.len() != b_stego.len() {
        return Err(Error::DimensionMismatch {
            expected: a_cover.len(),
            got: if a_cover.len() != a_stego.len() {
                a_stego.len()
            } else {
                b_stego.len()
            },
        });
    }
    let den = euclid(a_cover, a_stego);
    if den == 0.0 {
        return Err(Error::DegeneratePartition);
    }
    Ok(euclid(a_stego, b_stego) / den)
}

/// Score of a finished run, computed over the top [`CENTROID_FEATURES`]
/// ANOVA features of its own training set, standardized with the run's
/// scaler. The stego part of `B` is the set of `b_i` whose preimage was
/// labeled cover.
pub fn run_score(run: &AtsRun, triples: &[ImageTriple]) -> Result<f64> {
    let model = &run.fitted.model;
    let top = select_top_k(
        &run.fitted.anova_scores,
        CENTROID_FEATURES.min(model.selected_indices.len()),
    );
    let project = |v: &FeatureVector| -> Vec<f64> {
        top.iter()
            .map(|&i| {
                let pos = model
                    .selected_indices
                    .binary_search(&i)
                    .expect("top features are among the selected ones");
                (v.values[i] - model.feature_mean[pos]) / model.feature_std[pos]
            })
            .collect()
    };
    let (mut a_cover, mut a_stego, mut b_stego) = (Vec::new(), Vec::new(), Vec::new());
    for (t, v) in triples.iter().zip(&run.report.per_image) {
        debug_assert_eq!(t.id, v.id);
        match v.label {
            Label::Cover => {
                a_cover.push(project(&t.a));
                b_stego.push(project(&t.b));
            }
            Label::Stego => a_stego.push(project(&t.a)),
        }
    }
    if a_cover.is_empty() || a_stego.is_empty() {
        return Err(Error::DegeneratePartition);
    }
    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }
    score_s(
        &centroid(&refs(&a_cover))?,
        &centroid(&refs(&a_stego))?,
        &centroid(&refs(&b_stego))?,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub tentative_rate: f64,
    /// `+inf` when the run produced a degenerate partition.
    pub score: f64,
    pub report: AtsReport,
}

/// Run the pipeline once per tentative rate and rank the runs by score,
/// lowest first (ties to the lower rate; degenerate runs last).
pub fn search_bitrate(
    images: &[GrayImage],
    algorithm: Algorithm,
    key: u64,
    candidates: &[f64],
    params: &AtsParams,
    truth: Option<&HashMap<String, Label>>,
) -> Result<Vec<ScoreEntry>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for &rate in candidates {
        let split = EmbedConfig::new(algorithm, rate, key)?;
        let triples = image_triples(images, &split, &params.features)?;
        let run = ats_run_features(&triples, params, truth)?;
        let score = match run_score(&run, &triples) {
            Ok(s) => s,
            Err(Error::DegeneratePartition) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        entries.push(ScoreEntry {
            tentative_rate: rate,
            score,
            report: run.report,
        });
    }
    if entries.iter().all(|e| e.score.is_infinite()) {
        return Err(Error::DegeneratePartition);
    }
    entries.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.tentative_rate.total_cmp(&b.tentative_rate))
    });
    Ok(entries)
}

/// Minimum collected images before the first round.
pub const DEFAULT_N_MIN: usize = 10;

/// Number of labels image `k` (1-based arrival index) holds once `n` images
/// have arrived, when every arrival from `n_min` on triggers a round.
pub fn expected_history_len(n: usize, k: usize, n_min: usize) -> usize {
    if k <= n_min {
        (n + 1).saturating_sub(n_min)
    } else {
        (n + 1).saturating_sub(k)
    }
}

/// Output of one classification round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub round: usize,
    pub n: usize,
    /// `(id, label, confidence)` in arrival order.
    pub verdicts: Vec<(String, Label, f64)>,
}

impl Round {
    /// `{"round":..,"n":..,"labels":{id:label},"confidence":{id:c}}`
    pub fn to_json_line(&self) -> String {
        let labels: serde_json::Map<String, serde_json::Value> = self
            .verdicts
            .iter()
            .map(|(id, l, _)| (id.clone(), l.as_str().into()))
            .collect();
        let confidence: serde_json::Map<String, serde_json::Value> = self
            .verdicts
            .iter()
            .map(|(id, _, c)| (id.clone(), (*c).into()))
            .collect();
        serde_json::json!({
            "round": self.round,
            "n": self.n,
            "labels": labels,
            "confidence": confidence,
        })
        .to_string()
    }
}

/// Growing test set for images that arrive one at a time.
///
/// Once `n_min` images are collected, every arrival (or every
/// `batch_every`-th) reclassifies the whole set and appends the new label of
/// each image to its history.
#[derive(Debug, Clone)]
pub struct StreamState {
    n_min: usize,
    batch_every: usize,
    split: EmbedConfig,
    params: AtsParams,
    order: Vec<String>,
    triples: Vec<ImageTriple>,
    history: HashMap<String, Vec<Label>>,
    rounds: usize,
    last_report: Option<AtsReport>,
}

impl StreamState {
    pub fn new(split: EmbedConfig, params: AtsParams, n_min: usize) -> Result<Self> {
        if n_min < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_min must be >= 2, got {n_min}"
            )));
        }
        Ok(Self {
            n_min,
            batch_every: 1,
            split,
            params,
            order: Vec::new(),
            triples: Vec::new(),
            history: HashMap::new(),
            rounds: 0,
            last_report: None,
        })
    }

    /// Only run a round every `every` arrivals after the first one.
    pub fn with_batch_every(mut self, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::InvalidParameter("batch_every must be >= 1".into()));
        }
        self.batch_every = every;
        Ok(self)
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn history(&self, id: &str) -> Option<&[Label]> {
        self.history.get(id).map(Vec::as_slice)
    }

    pub fn last_report(&self) -> Option<&AtsReport> {
        self.last_report.as_ref()
    }

    fn round_due(&self, n: usize) -> bool {
        n >= self.n_min && (n - self.n_min).is_multiple_of(self.batch_every)
    }

    /// Add an image and, when a round is due, reclassify the whole set.
    pub fn add(&mut self, img: &GrayImage) -> Result<Option<Round>> {
        if self.order.iter().any(|id| id == img.id()) {
            return Err(Error::DuplicateId(img.id().to_string()));
        }
        let triple = image_triple(img, &self.split, &self.params.features)?;
        self.add_triple(triple)
    }

    /// Same as [`StreamState::add`] for features already extracted with this
    /// state's splitting function.
    pub fn add_triple(&mut self, triple: ImageTriple) -> Result<Option<Round>> {
        if self.order.contains(&triple.id) {
            return Err(Error::DuplicateId(triple.id));
        }
        let id = triple.id.clone();
        self.triples.push(triple);
        let params = self.params.clone();
        let result = self.add_classified_by(&id, |_ids, triples| {
            let run = ats_run_features(triples, &params, None)?;
            let labels = run.report.per_image.iter().map(|v| v.label).collect();
            Ok((labels, Some(run.report)))
        });
        if result.is_err() {
            self.triples.pop();
        }
        result
    }

    pub fn split(&self) -> &EmbedConfig {
        &self.split
    }

    /// Bookkeeping core of [`StreamState::add`] with a caller-supplied
    /// classifier, which receives ids and cached triples in arrival order and
    /// returns one label per image.
    pub fn add_classified_by<F>(&mut self, id: &str, classify: F) -> Result<Option<Round>>
    where
        F: FnOnce(&[String], &[ImageTriple]) -> Result<(Vec<Label>, Option<AtsReport>)>,
    {
        if self.history.contains_key(id) || self.order.iter().any(|x| x == id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.order.push(id.to_string());
        let n = self.order.len();
        if !self.round_due(n) {
            return Ok(None);
        }
        let (labels, report) = match classify(&self.order, &self.triples) {
            Ok(r) => r,
            Err(e) => {
                self.order.pop();
                return Err(e);
            }
        };
        if labels.len() != n {
            self.order.pop();
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        for (id, &l) in self.order.iter().zip(&labels) {
            self.history.entry(id.clone()).or_default().push(l);
        }
        self.rounds += 1;
        if report.is_some() {
            self.last_report = report;
        }
        let verdicts = self
            .order
            .iter()
            .zip(&labels)
            .map(|(id, &l)| {
                let c = confidence(self, id).expect("just classified");
                (id.clone(), l, c)
            })
            .collect();
        Ok(Some(Round {
            round: self.rounds,
            n,
            verdicts,
        }))
    }
}

/// Fraction of an image's past rounds that agree with its latest label.
pub fn confidence(state: &StreamState, id: &str) -> Result<f64> {
    let h = state
        .history
        .get(id)
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::NeverClassified(id.to_string()))?;
    Ok(confidence_of(h))
}

/// `m_l / n_l` for one label history (latest label last).
pub fn confidence_of(history: &[Label]) -> f64 {
    let last = *history.last().expect("non-empty history");
    let agree = history.iter().filter(|&&l| l == last).count();
    agree as f64 / history.len() as f64
}
