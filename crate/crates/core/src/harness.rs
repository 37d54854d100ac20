//! Experiment orchestration: build testing sets with known ground truth from
//! a corpus, run the pipeline repeatedly and average the confusion tables.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ats::{ats_run, image_triples, AtsParams, Counts};
use crate::error::{Error, Result};
use crate::image_io::{clip_center, load_image, synth_cover, GrayImage};
use crate::quantify::StreamState;
use crate::stego::{derive_subkey, ensure_unique_ids, lsbm_embed, EmbedConfig};
use crate::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    pub smoothness: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    /// Every PGM/PNG file directly inside `path`.
    Directory { path: PathBuf },
    /// Fresh synthetic covers; each testing set draws the mixture components
    /// in proportion to their weights.
    Synthetic {
        width: usize,
        height: usize,
        components: Vec<SynthComponent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub corpus: CorpusSource,
    pub n_cover: usize,
    pub n_stego: usize,
    /// Embedding that produces the ground-truth stego images.
    pub embed: EmbedConfig,
    /// When set, stego image `j` is embedded at `embed_rates[j % len]`.
    #[serde(default)]
    pub embed_rates: Option<Vec<f64>>,
    /// Splitting function used by the steganalyst.
    pub split: EmbedConfig,
    #[serde(default = "one_usize")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clip: Option<(usize, usize)>,
    #[serde(default)]
    pub params: AtsParams,
}

fn one_usize() -> usize {
    1
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cover + self.n_stego < 2 {
            return Err(Error::InvalidParameter(
                "n_cover + n_stego must be at least 2".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be >= 1".into()));
        }
        if self.embed.key == self.split.key {
            return Err(Error::InvalidParameter(
                "the ground-truth embedding key must differ from the splitting key".into(),
            ));
        }
        if let Some(rates) = &self.embed_rates {
            if rates.is_empty() {
                return Err(Error::InvalidParameter("embed_rates is empty".into()));
            }
            for &r in rates {
                self.embed.with_rate(r)?;
            }
        }
        if let CorpusSource::Synthetic { components, .. } = &self.corpus {
            if components.is_empty()
                || components
                    .iter()
                    .any(|c| c.weight.is_nan() || c.weight <= 0.0)
            {
                return Err(Error::InvalidParameter(
                    "synthetic corpus needs components with positive weights".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parse TOML, or JSON when the path ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let spec: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn total(&self) -> usize {
        self.n_cover + self.n_stego
    }
}

/// Sorted list of image files in a directory.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|e| {
                    let e = e.to_string_lossy().to_ascii_lowercase();
                    e == "pgm" || e == "png"
                })
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Load every image of a directory (sorted by file name), optionally
/// center-clipped.
pub fn load_corpus(dir: impl AsRef<Path>, clip: Option<(usize, usize)>) -> Result<Vec<GrayImage>> {
    let images = list_images(dir)?
        .par_iter()
        .map(|p| {
            let img = load_image(p)?;
            match clip {
                Some((w, h)) => clip_center(&img, w, h),
                None => Ok(img),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_unique_ids(&images)?;
    Ok(images)
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut x = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        x ^= p;
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

/// Component index for each of `n` slots, in proportion to the weights.
fn component_slots(components: &[SynthComponent], n: usize) -> Vec<usize> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (ci, c) in components.iter().enumerate() {
        acc += c.weight;
        let upto = if ci + 1 == components.len() {
            n
        } else {
            ((acc / total) * n as f64).round() as usize
        };
        while out.len() < upto.min(n) {
            out.push(ci);
        }
    }
    out
}

/// Draw `n` distinct covers for one testing set.
pub fn draw_covers(spec: &ExperimentSpec, repeat: usize, n: usize) -> Result<Vec<GrayImage>> {
    let covers = match &spec.corpus {
        CorpusSource::Synthetic {
            width,
            height,
            components,
        } => {
            let slots = component_slots(components, n);
            slots
                .par_iter()
                .enumerate()
                .map(|(j, &ci)| {
                    let seed = mix_seed(&[spec.seed, repeat as u64, j as u64]);
                    let id = format!("r{repeat}-s{j:05}");
                    synth_cover(seed, *width, *height, components[ci].smoothness)
                        .map(|img| img.with_id(id))
                })
                .collect::<Result<Vec<_>>>()?
        }
        CorpusSource::Directory { path } => {
            let mut files = list_images(path)?;
            if files.len() < n {
                return Err(Error::CorpusExhausted {
                    needed: n,
                    available: files.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, repeat as u64]));
            files.shuffle(&mut rng);
            files.truncate(n);
            files
                .par_iter()
                .map(load_image)
                .collect::<Result<Vec<_>>>()?
        }
    };
    match spec.clip {
        Some((w, h)) => covers.iter().map(|c| clip_center(c, w, h)).collect(),
        None => Ok(covers),
    }
}

/// One testing set: `n_cover` covers plus `n_stego` stego images whose
/// originals are removed, shuffled, with ground truth.
pub fn build_testing_set(
    spec: &ExperimentSpec,
    repeat: usize,
    n_cover: usize,
    n_stego: usize,
) -> Result<(Vec<GrayImage>, HashMap<String, Label>)> {
    let n = n_cover + n_stego;
    let mut images = draw_covers(spec, repeat, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, repeat as u64, 0x5e60]));
    images.shuffle(&mut rng);
    let mut truth = HashMap::with_capacity(n);
    for (j, img) in images.iter_mut().enumerate() {
        if j < n_stego {
            let rate = match &spec.embed_rates {
                Some(r) => r[j % r.len()],
                None => spec.embed.rate(),
            };
            let cfg = spec.embed.with_rate(rate)?.with_key(derive_subkey(
                spec.embed.key,
                img.id(),
                repeat as u32,
            ));
            let id = img.id().to_string();
            *img = lsbm_embed(img, &cfg).with_id(id);
            truth.insert(img.id().to_string(), Label::Stego);
        } else {
            truth.insert(img.id().to_string(), Label::Cover);
        }
    }
    images.sort_by(|a, b| a.id().cmp(b.id()));
    Ok((images, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub accuracy: f64,
    pub counts: Counts,
    pub ac_cv_accuracy: f64,
    pub predicted_stego_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub n_cover: usize,
    pub n_stego: usize,
    /// Arithmetic mean over repeats.
    pub accuracy: f64,
    pub counts: Counts,
    pub repeats: Vec<RepeatResult>,
    pub warnings: Vec<String>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_with_split(spec, spec.n_cover, spec.n_stego)
}

fn run_with_split(
    spec: &ExperimentSpec,
    n_cover: usize,
    n_stego: usize,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let repeats = (0..spec.repeats)
        .map(|r| {
            let (images, truth) = build_testing_set(spec, r, n_cover, n_stego)?;
            let run = ats_run(&images, &spec.split, &spec.params, Some(&truth))?;
            run.audit
                .verify(&run.report)
                .map_err(|e| Error::InvalidParameter(format!("structural check failed: {e}")))?;
            let counts = run.report.counts.expect("truth supplied");
            Ok(RepeatResult {
                repeat: r,
                accuracy: counts.accuracy(),
                counts,
                ac_cv_accuracy: run.report.diagnostics.ac_cv_accuracy,
                predicted_stego_fraction: run.report.diagnostics.predicted_stego_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = repeats.len() as f64;
    let mut counts = Counts::default();
    for r in &repeats {
        counts.tp += r.counts.tp;
        counts.tn += r.counts.tn;
        counts.fp += r.counts.fp;
        counts.fn_ += r.counts.fn_;
    }
    counts.tp /= k;
    counts.tn /= k;
    counts.fp /= k;
    counts.fn_ /= k;
    let accuracy = repeats.iter().map(|r| r.accuracy).sum::<f64>() / k;

    let mut warnings = Vec::new();
    if n_stego == 0 {
        warnings.push("all-cover regime: the testing set holds no stego images".to_string());
    }
    Ok(ExperimentResult {
        n_cover,
        n_stego,
        accuracy,
        counts,
        repeats,
        warnings,
    })
}

/// Experiments from `(N, 0)` to `(0, N)` covers/stego in steps of `step`.
pub fn ratio_sweep(spec: &ExperimentSpec, step: usize) -> Result<Vec<ExperimentResult>> {
    let total = spec.total();
    if step == 0 || !total.is_multiple_of(step) {
        return Err(Error::InvalidParameter(format!(
            "step {step} does not divide the testing set size {total}"
        )));
    }
    (0..=total)
        .step_by(step)
        .map(|n_stego| run_with_split(spec, total - n_stego, n_stego))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamPoint {
    pub n: usize,
    pub accuracy: f64,
    pub confidence: f64,
}

/// Feed one testing set image by image through [`StreamState`] and record
/// the accuracy and mean confidence after every round, averaged over `runs`
/// random arrival orders of that same set.
pub fn stream_experiment(
    spec: &ExperimentSpec,
    order_seed: u64,
    runs: usize,
    n_min: usize,
    batch_every: usize,
) -> Result<Vec<StreamPoint>> {
    spec.validate()?;
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be >= 1".into()));
    }
    let (images, truth) = build_testing_set(spec, 0, spec.n_cover, spec.n_stego)?;
    let triples = image_triples(&images, &spec.split, &spec.params.features)?;
    let mut sums: Vec<(usize, f64, f64)> = Vec::new();
    for run in 0..runs {
        let mut order = triples.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[order_seed, run as u64]));
        order.shuffle(&mut rng);
        let mut state = StreamState::new(spec.split, spec.params.clone(), n_min)?
            .with_batch_every(batch_every)?;
        let mut idx = 0;
        for t in order {
            if let Some(round) = state.add_triple(t)? {
                let n = round.n as f64;
                let correct = round
                    .verdicts
                    .iter()
                    .filter(|(id, l, _)| truth[id] == *l)
                    .count() as f64;
                let conf = round.verdicts.iter().map(|v| v.2).sum::<f64>() / n;
                if run == 0 {
                    sums.push((round.n, 0.0, 0.0));
                }
                let slot = &mut sums[idx];
                debug_assert_eq!(slot.0, round.n);
                slot.1 += correct / n;
                slot.2 += conf;
                idx += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(n, a, c)| StreamPoint {
            n,
            accuracy: a / runs as f64,
            confidence: c / runs as f64,
        })
        .collect())
}

/// Write `cover,stego,Acc,TP,TN,FP,FN` rows after `# key: value` metadata.
pub fn write_table_csv<W: Write>(
    mut w: W,
    meta: &[(&str, String)],
    rows: &[ExperimentResult],
) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "cover,stego,Acc,TP,TN,FP,FN")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.4},{},{},{},{}",
            r.n_cover, r.n_stego, r.accuracy, r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn_
        )?;
    }
    Ok(())
}

pub fn write_stream_csv<W: Write>(mut w: W, points: &[StreamPoint]) -> Result<()> {
    writeln!(w, "n,accuracy,confidence")?;
    for p in points {
        writeln!(w, "{},{:.6},{:.6}", p.n, p.accuracy, p.confidence)?;
    }
    Ok(())
}
