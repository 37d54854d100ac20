//! Keyed LSB-matching (±1) embedding simulator.
//!
//! An [`EmbedConfig`] with a fixed algorithm and rate is the splitting
//! function used by the pipeline: applying it to a cover yields a stego
//! image, applying it again yields a "double stego" image, and so on. The key
//! only seeds the pseudorandom pixel selection and payload.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image_io::GrayImage;

const GENERATION_TAG: &str = ":g";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// LSB matching: mismatching LSBs are fixed by a random ±1 change.
    #[default]
    Lsbm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Lsbm => f.write_str("lsbm"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsbm" | "lsb-matching" | "pm1" => Ok(Algorithm::Lsbm),
            other => Err(Error::InvalidParameter(format!(
                "unknown embedding algorithm `{other}`"
            ))),
        }
    }
}

/// Algorithm, bit rate (bits per pixel, in `(0, 1]`) and key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedConfig")]
pub struct EmbedConfig {
    pub algorithm: Algorithm,
    rate: f64,
    pub key: u64,
}

#[derive(Deserialize)]
struct RawEmbedConfig {
    #[serde(default)]
    algorithm: Algorithm,
    rate: f64,
    #[serde(default)]
    key: u64,
}

impl TryFrom<RawEmbedConfig> for EmbedConfig {
    type Error = Error;

    fn try_from(raw: RawEmbedConfig) -> Result<Self> {
        EmbedConfig::new(raw.algorithm, raw.rate, raw.key)
    }
}

impl EmbedConfig {
    pub fn new(algorithm: Algorithm, rate: f64, key: u64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidRate(rate));
        }
        Ok(Self {
            algorithm,
            rate,
            key,
        })
    }

    pub fn lsbm(rate: f64, key: u64) -> Result<Self> {
        Self::new(Algorithm::Lsbm, rate, key)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn with_key(self, key: u64) -> Self {
        Self { key, ..self }
    }

    pub fn with_rate(self, rate: f64) -> Result<Self> {
        Self::new(self.algorithm, rate, self.key)
    }

    /// Number of pixels selected for embedding in an image of `n` pixels.
    pub fn payload_pixels(&self, n: usize) -> usize {
        // the epsilon absorbs products like 0.1 * 100 = 10.000000000000002
        let m = (self.rate * n as f64 - 1e-9).ceil().max(0.0) as usize;
        m.min(n)
    }
}

/// Split an id into its base and embedding generation (`"x:g2"` → `("x", 2)`).
pub fn generation_of(id: &str) -> (&str, u32) {
    if let Some(pos) = id.rfind(GENERATION_TAG) {
        let digits = &id[pos + GENERATION_TAG.len()..];
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(g) = digits.parse() {
                return (&id[..pos], g);
            }
        }
    }
    (id, 0)
}

/// Id of the image produced by one more embedding generation.
pub fn next_generation_id(id: &str) -> String {
    let (base, gen) = generation_of(id);
    format!("{base}{GENERATION_TAG}{}", gen + 1)
}

fn rng_for(key: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"lsbm-select");
    h.update(key.to_le_bytes());
    h.update(id.as_bytes());
    let seed: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(seed)
}

/// Per-image, per-generation key derived from a master key.
pub fn derive_subkey(master: u64, id: &str, generation: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"ats-subkey");
    h.update(master.to_le_bytes());
    h.update((id.len() as u64).to_le_bytes());
    h.update(id.as_bytes());
    h.update(generation.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Short public fingerprint of a key, safe to write into manifests.
pub fn key_fingerprint(key: u64) -> String {
    let mut h = Sha256::new();
    h.update(b"ats-key-fingerprint");
    h.update(key.to_le_bytes());
    h.finalize()[..6]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Embed a pseudorandom payload of `ceil(rate * n)` bits by LSB matching.
///
/// Pixel selection, message bits and ±1 directions are all drawn from a
/// stream seeded by `(cfg.key, img.id)`. The output id carries one more
/// generation tag than the input.
pub fn lsbm_embed(img: &GrayImage, cfg: &EmbedConfig) -> GrayImage {
    let n = img.len();
    let m = cfg.payload_pixels(n);
    let mut rng = rng_for(cfg.key, img.id());
    let mut data = img.data().to_vec();
    let selected = index::sample(&mut rng, n, m);
    for i in selected.iter() {
        let bit = rng.random::<bool>() as u8;
        let p = data[i];
        if p & 1 != bit {
            data[i] = match p {
                0 => 1,
                255 => 254,
                _ if rng.random::<bool>() => p + 1,
                _ => p - 1,
            };
        }
    }
    img.with_data(next_generation_id(img.id()), data)
}

/// Apply the splitting function to every image, preserving order.
///
/// Image `i` of the output is derived from image `i` of the input with a key
/// derived from `(cfg.key, id, generation)`, so two successive applications
/// use independent selections and results do not depend on scheduling.
pub fn apply_splitting(images: &[GrayImage], cfg: &EmbedConfig) -> Result<Vec<GrayImage>> {
    ensure_unique_ids(images)?;
    Ok(images.par_iter().map(|img| split_one(img, cfg)).collect())
}

/// One image's share of [`apply_splitting`].
pub fn split_one(img: &GrayImage, cfg: &EmbedConfig) -> GrayImage {
    let (_, gen) = generation_of(img.id());
    let sub = cfg.with_key(derive_subkey(cfg.key, img.id(), gen + 1));
    match cfg.algorithm {
        Algorithm::Lsbm => lsbm_embed(img, &sub),
    }
}

pub(crate) fn ensure_unique_ids(images: &[GrayImage]) -> Result<()> {
    let mut seen = HashSet::with_capacity(images.len());
    for img in images {
        if !seen.insert(img.id()) {
            return Err(Error::DuplicateId(img.id().to_string()));
        }
    }
    Ok(())
}

/// Fraction of pixel positions where the two images differ.
pub fn change_rate(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .filter(|(x, y)| x != y)
        .count();
    Ok(diff as f64 / a.len() as f64)
}
