//! Unsupervised targeted steganalysis with artificial training sets.
//!
//! Given only a set of images under test and knowledge of the embedding
//! algorithm (and roughly its bit rate), the pipeline embeds the test set
//! once (`B`) and twice (`C`), trains a classifier to separate the original
//! set `A` from `C`, classifies `B`, and maps each label back to `A` through
//! the one-to-one correspondence between the sets.
//!
//! Modules, bottom-up:
//!
//! * [`image_io`]: grayscale rasters, PGM/PNG loading, synthetic covers.
//! * [`stego`]: keyed LSB-matching embedding (the splitting function).
//! * [`features`]: SPAM-style Markov transition features.
//! * [`learner`]: ANOVA selection, standardization, Gaussian SVM, grid search.
//! * [`ats`]: the artificial-training-set classifier.
//! * [`quantify`]: bit-rate search by centroid score and streaming mode.
//! * [`harness`]: experiment orchestration and table output.

pub mod ats;
pub mod error;
pub mod features;
pub mod harness;
pub mod image_io;
pub mod learner;
pub mod quantify;
pub mod stego;

pub use ats::{ats_classify, disjointness_probe, AtsParams, AtsReport, Counts, Diagnostics};
pub use error::{Error, Result};
pub use features::{extract_corpus, extract_spam, FeatureMatrix, FeatureVector, SpamParams};
pub use image_io::{clip_center, load_image, synth_cover, GrayImage};
pub use learner::{LearnerParams, SvmModel};
pub use quantify::{confidence, search_bitrate, ScoreEntry, StreamState};
pub use stego::{
    apply_splitting, change_rate, key_fingerprint, lsbm_embed, Algorithm, EmbedConfig,
};

use serde::{Deserialize, Serialize};

/// Class of an image under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Cover,
    Stego,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cover => "cover",
            Label::Stego => "stego",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cover" | "0" => Ok(Label::Cover),
            "stego" | "1" => Ok(Label::Stego),
            other => Err(Error::Parse(format!("unknown label `{other}`"))),
        }
    }
}

/// Label of the artificial training set: `First` is the unmodified side
/// (`A`), `Second` the twice-embedded side (`C`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainLabel {
    First,
    Second,
}

impl TrainLabel {
    /// SVM target in {-1, +1}.
    pub fn sign(self) -> f64 {
        match self {
            TrainLabel::First => -1.0,
            TrainLabel::Second => 1.0,
        }
    }

    /// Translate a label predicted for an element of `B` into the label of
    /// its preimage in `A`.
    pub fn to_label(self) -> Label {
        match self {
            TrainLabel::First => Label::Cover,
            TrainLabel::Second => Label::Stego,
        }
    }
}
