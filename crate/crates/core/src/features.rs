//! SPAM-style features: empirical Markov transition probabilities of
//! truncated pixel-difference chains, averaged over axis and diagonal
//! directions.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::GrayImage;
use crate::TrainLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            image_id: image_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Rows of feature vectors with optional per-row labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub labels: Option<Vec<TrainLabel>>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<FeatureVector>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let d = first.dim();
            if let Some(bad) = rows.iter().find(|r| r.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.dim(),
                });
            }
        }
        Ok(Self { rows, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<TrainLabel>) -> Result<Self> {
        if labels.len() != self.rows.len() {
            return Err(Error::DimensionMismatch {
                expected: self.rows.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, FeatureVector::dim)
    }

    pub fn values(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    /// Write `image_id,f0,...,f{D-1}` CSV. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header = Vec::with_capacity(d + 1);
        header.push("image_id".to_string());
        header.extend((0..d).map(|i| format!("f{i}")));
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(d + 1);
            rec.push(row.image_id.clone());
            rec.extend(row.values.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("image_id") {
            return Err(Error::Parse(
                "feature CSV must start with `image_id`".into(),
            ));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad float `{s}` in row `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureVector::new(id, values));
        }
        Self::new(rows)
    }
}

/// Truncation threshold `T` and Markov order of the transition model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpamParams {
    pub truncation: usize,
    pub order: usize,
}

impl Default for SpamParams {
    fn default() -> Self {
        Self {
            truncation: 3,
            order: 2,
        }
    }
}

impl SpamParams {
    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(Error::InvalidParameter("truncation must be >= 1".into()));
        }
        if !(1..=2).contains(&self.order) {
            return Err(Error::InvalidParameter(format!(
                "Markov order must be 1 or 2, got {}",
                self.order
            )));
        }
        Ok(())
    }

    /// Entries per direction block: `(2T+1)^(order+1)`.
    pub fn block_len(&self) -> usize {
        (2 * self.truncation + 1).pow(self.order as u32 + 1)
    }

    /// Feature dimension: two blocks (axis and diagonal).
    pub fn dim(&self) -> usize {
        2 * self.block_len()
    }
}

/// Step along which difference chains are taken, `(dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction(pub isize, pub isize);

impl Direction {
    pub const RIGHT: Direction = Direction(1, 0);
    pub const LEFT: Direction = Direction(-1, 0);
    pub const DOWN: Direction = Direction(0, 1);
    pub const UP: Direction = Direction(0, -1);
    pub const AXIS: [Direction; 4] = [Self::RIGHT, Self::LEFT, Self::DOWN, Self::UP];
    pub const DIAGONAL: [Direction; 4] = [
        Direction(1, 1),
        Direction(-1, -1),
        Direction(1, -1),
        Direction(-1, 1),
    ];
}

/// Conditional transition probabilities along one direction.
///
/// Along the direction, the chain of differences is `d_j = I(p_{j+1}) -
/// I(p_j)`, truncated to `[-T, T]`. Entry index is the base-`(2T+1)` number
/// with digits `(d_1 + T, ..., d_{order+1} + T)`, most significant first; the
/// value is `P(d_{order+1} | d_1..d_order)`. Contexts never observed give 0.
///
/// The image only needs `order + 2` pixels along the direction's axis.
pub fn direction_transitions(img: &GrayImage, dir: Direction, params: &SpamParams) -> Vec<f64> {
    let t = params.truncation as i32;
    let q = (2 * t + 1) as usize;
    let len = params.order + 2;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let span = (len - 1) as isize;
    let mut counts = vec![0u64; params.block_len()];

    // start pixels whose whole chain lies inside the image
    let (x_lo, x_hi) = if dir.0 >= 0 {
        (0, w - dir.0 * span)
    } else {
        (-dir.0 * span, w)
    };
    let (y_lo, y_hi) = if dir.1 >= 0 {
        (0, h - dir.1 * span)
    } else {
        (-dir.1 * span, h)
    };
    let data = img.data();
    let stride = dir.1 * w + dir.0;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let mut p = (y * w + x) as usize;
            let mut prev = data[p] as i32;
            let mut idx = 0usize;
            for _ in 0..len - 1 {
                p = (p as isize + stride) as usize;
                let cur = data[p] as i32;
                let d = (cur - prev).clamp(-t, t);
                idx = idx * q + (d + t) as usize;
                prev = cur;
            }
            counts[idx] += 1;
        }
    }

    let mut out = vec![0.0; counts.len()];
    for (ctx_counts, ctx_out) in counts.chunks(q).zip(out.chunks_mut(q)) {
        let total: u64 = ctx_counts.iter().sum();
        if total > 0 {
            for (o, &c) in ctx_out.iter_mut().zip(ctx_counts) {
                *o = c as f64 / total as f64;
            }
        }
    }
    out
}

/// Feature vector of `2 * (2T+1)^(order+1)` entries: the mean transition
/// matrix over the four axis directions, then over the four diagonals.
pub fn extract_spam(img: &GrayImage, params: &SpamParams) -> Result<FeatureVector> {
    params.validate()?;
    let need = params.order + 2;
    if img.width() < need || img.height() < need {
        return Err(Error::ImageTooSmall {
            id: img.id().to_string(),
            width: img.width(),
            height: img.height(),
            order: params.order,
        });
    }
    let mut values = Vec::with_capacity(params.dim());
    for group in [Direction::AXIS, Direction::DIAGONAL] {
        let mut block = vec![0.0; params.block_len()];
        for dir in group {
            for (acc, v) in block
                .iter_mut()
                .zip(direction_transitions(img, dir, params))
            {
                *acc += v;
            }
        }
        values.extend(block.into_iter().map(|v| v / 4.0));
    }
    Ok(FeatureVector::new(img.id(), values))
}

/// One row per image, in input order.
pub fn extract_corpus(images: &[GrayImage], params: &SpamParams) -> Result<FeatureMatrix> {
    params.validate()?;
    let rows = images
        .par_iter()
        .map(|img| {
            extract_spam(img, params).map_err(|e| Error::Extraction {
                id: img.id().to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::synth_cover;
    use crate::stego::{lsbm_embed, EmbedConfig};
    use proptest::prelude::*;

    #[test]
    fn default_dimension_is_686() {
        assert_eq!(SpamParams::default().dim(), 686);
        assert_eq!(
            SpamParams {
                truncation: 4,
                order: 1
            }
            .dim(),
            162
        );
    }

    #[test]
    fn constant_image_has_single_unit_entry_per_block() {
        let img = GrayImage::filled("c", 8, 8, 77).unwrap();
        let p = SpamParams::default();
        let f = extract_spam(&img, &p).unwrap();
        assert_eq!(f.dim(), 686);
        // (0, 0 -> 0) sits at digits (3,3,3)
        let zero = (3 * 7 + 3) * 7 + 3;
        for block in f.values.chunks(343) {
            for (i, &v) in block.iter().enumerate() {
                assert_eq!(v, if i == zero { 1.0 } else { 0.0 }, "index {i}");
            }
        }
    }

    #[test]
    fn ramp_first_order_right_transition() {
        let img = GrayImage::new("ramp", 5, 1, vec![0, 1, 2, 3, 4]).unwrap();
        let p = SpamParams {
            truncation: 3,
            order: 1,
        };
        let m = direction_transitions(&img, Direction::RIGHT, &p);
        assert_eq!(m.len(), 49);
        let one_to_one = (1 + 3) * 7 + (1 + 3);
        assert_eq!(m[one_to_one], 1.0);
        assert_eq!(m.iter().sum::<f64>(), 1.0);
        // leftward chain of the same ramp only sees -1 -> -1
        let l = direction_transitions(&img, Direction::LEFT, &p);
        assert_eq!(l[2 * 7 + 2], 1.0);
    }

    #[test]
    fn truncation_clamps_large_steps() {
        let img = GrayImage::new("steps", 4, 1, vec![0, 100, 200, 250]).unwrap();
        let p = SpamParams::default();
        let m = direction_transitions(&img, Direction::RIGHT, &p);
        assert_eq!(m[(6 * 7 + 6) * 7 + 6], 1.0);
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = GrayImage::filled("s", 3, 10, 0).unwrap();
        assert!(matches!(
            extract_spam(&img, &SpamParams::default()),
            Err(Error::ImageTooSmall { .. })
        ));
        let ok = GrayImage::filled("s", 4, 4, 0).unwrap();
        assert!(extract_spam(&ok, &SpamParams::default()).is_ok());
    }

    #[test]
    fn embedding_moves_features() {
        let img = synth_cover(9, 512, 512, 4.0).unwrap();
        let stego = lsbm_embed(&img, &EmbedConfig::lsbm(0.25, 1).unwrap());
        let p = SpamParams::default();
        let a = extract_spam(&img, &p).unwrap();
        let b = extract_spam(&stego, &p).unwrap();
        let d: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d > 0.0);
    }

    #[test]
    fn corpus_order_and_errors() {
        let p = SpamParams::default();
        assert!(extract_corpus(&[], &p).unwrap().is_empty());
        let imgs: Vec<_> = (0..3)
            .map(|i| {
                synth_cover(i, 16, 16, 1.0)
                    .unwrap()
                    .with_id(format!("i{i}"))
            })
            .collect();
        let m = extract_corpus(&imgs, &p).unwrap();
        let ids: Vec<_> = m.rows.iter().map(|r| r.image_id.as_str()).collect();
        assert_eq!(ids, ["i0", "i1", "i2"]);

        let rev: Vec<_> = imgs.iter().rev().cloned().collect();
        let mr = extract_corpus(&rev, &p).unwrap();
        assert_eq!(mr.rows[0], m.rows[2]);
        assert_eq!(mr.rows[2], m.rows[0]);

        let mut bad = imgs.clone();
        bad.push(GrayImage::filled("tiny", 2, 2, 0).unwrap());
        match extract_corpus(&bad, &p) {
            Err(Error::Extraction { id, .. }) => assert_eq!(id, "tiny"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let imgs: Vec<_> = (0..2)
            .map(|i| {
                synth_cover(i, 20, 20, 1.5)
                    .unwrap()
                    .with_id(format!("x{i}"))
            })
            .collect();
        let m = extract_corpus(&imgs, &SpamParams::default()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("image_id,f0,f1,"));
        assert!(header.ends_with(",f685"));
        assert_eq!(FeatureMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shift_invariance_and_ranges(seed in any::<u64>(), shift in 1u8..40) {
            let base = synth_cover(seed, 24, 24, 1.0).unwrap();
            // squeeze into [0, 200] so adding `shift` never saturates
            let squeezed: Vec<u8> = base.data().iter().map(|&p| (p as u32 * 200 / 255) as u8).collect();
            let img = GrayImage::new("s", 24, 24, squeezed.clone()).unwrap();
            let shifted = GrayImage::new("s", 24, 24, squeezed.iter().map(|p| p + shift).collect()).unwrap();
            let p = SpamParams::default();
            let a = extract_spam(&img, &p).unwrap();
            let b = extract_spam(&shifted, &p).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.values.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            // every observed context is a distribution
            for ctx in a.values.chunks(7) {
                let s: f64 = ctx.iter().sum();
                prop_assert!(s <= 1.0 + 1e-12);
            }
        }
    }
}
