//! Grayscale rasters: PGM/PNG loading, PGM writing, center clipping and a
//! deterministic synthetic cover generator.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    id: String,
}

impl GrayImage {
    pub fn new(id: impl Into<String>, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea);
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            id: id.into(),
        })
    }

    pub fn filled(id: impl Into<String>, width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(id, width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same raster with new pixel data; length must match.
    pub(crate) fn with_data(&self, id: String, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            width: self.width,
            height: self.height,
            data,
            id,
        }
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Serialize as binary PGM (P5, maxval 255).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Load a PGM (P5, maxval 255) or 8-bit PNG as grayscale. Color PNGs are
/// collapsed with integer luma `round(0.299R + 0.587G + 0.114B)`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if bytes.is_empty() {
        return Err(Error::Unreadable {
            path: path.to_path_buf(),
            reason: "empty file".into(),
        });
    }
    let id = stem(path);
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, id)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes, id)
    } else if bytes.starts_with(b"P") && bytes.len() > 1 && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} (only P5 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(Error::Unreadable {
            path: path.to_path_buf(),
            reason: "not a PGM or PNG file".into(),
        })
    }
}

/// Parse a binary P5 PGM buffer.
pub fn decode_pgm(bytes: &[u8], id: impl Into<String>) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let s = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = s
            .parse()
            .map_err(|_| Error::Parse(format!("bad PGM header field `{s}`")))?;
    }
    // exactly one whitespace byte separates header and raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Parse("truncated PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::ZeroArea);
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Parse("PGM dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Parse(format!("PGM raster truncated: need {n} bytes")))?;
    GrayImage::new(id, width, height, raster.to_vec())
}

/// Integer luma with round-half-up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn decode_png(bytes: &[u8], id: String) -> Result<GrayImage> {
    use image::{DynamicImage, ImageFormat};

    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::UnsupportedFormat(format!("PNG decode: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroArea);
    }
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p[0], p[1], p[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(p[0], p[1], p[2])).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG color type {:?} (only 8-bit gray or RGB)",
                other.color()
            )))
        }
    };
    GrayImage::new(id, w, h, data)
}

/// Centered `w`×`h` window with offsets `floor((W-w)/2)`, `floor((H-h)/2)`.
pub fn clip_center(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w > img.width || h > img.height {
        return Err(Error::ClipTooLarge {
            req_w: w,
            req_h: h,
            src_w: img.width,
            src_h: img.height,
        });
    }
    if w == 0 || h == 0 {
        return Err(Error::ZeroArea);
    }
    let x0 = (img.width - w) / 2;
    let y0 = (img.height - h) / 2;
    let data = (y0..y0 + h)
        .flat_map(|y| &img.data[y * img.width + x0..y * img.width + x0 + w])
        .copied()
        .collect();
    GrayImage::new(img.id.clone(), w, h, data)
}

/// Deterministic synthetic cover: uniform 8-bit noise box-filtered with
/// radius `ceil(smoothness)`; each pixel is the rounded window mean.
pub fn synth_cover(seed: u64, width: usize, height: usize, smoothness: f64) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroArea);
    }
    if smoothness.is_nan() || smoothness < 0.0 || smoothness.is_infinite() {
        return Err(Error::InvalidParameter(format!(
            "smoothness must be a finite non-negative number, got {smoothness}"
        )));
    }
    let r = smoothness.ceil() as usize;
    let (nw, nh) = (width + 2 * r, height + 2 * r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // summed-area table over the padded noise field, one extra row/column of zeros
    let stride = nw + 1;
    let mut sat = vec![0u64; stride * (nh + 1)];
    for y in 0..nh {
        let mut row = 0u64;
        for x in 0..nw {
            row += rng.random::<u8>() as u64;
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }

    let side = 2 * r + 1;
    let mut sums = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (x1, y1) = (x + side, y + side);
            let s = sat[y1 * stride + x1] + sat[y * stride + x]
                - sat[y * stride + x1]
                - sat[y1 * stride + x];
            sums.push(s);
        }
    }
    // box mean of 8-bit samples, rounded; stays in [0, 255]
    let area = (side * side) as u64;
    let data = sums
        .iter()
        .map(|&s| ((2 * s + area) / (2 * area)) as u8)
        .collect();
    GrayImage::new(format!("synth-{seed}"), width, height, data)
}
