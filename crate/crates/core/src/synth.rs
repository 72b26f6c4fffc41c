//! Procedural labeled sprites with an exact attribute oracle.
//!
//! Each image is a `side × side` grid (optionally three identical channels)
//! with pixels in `[−1, 1]`:
//!
//! * background level set by the *intensity* class (`−0.3` high, `−0.7` low),
//! * square-wave *stripes* (period 4, amplitude 0.2), horizontal or vertical,
//! * an optional bright 6×6 *marker* patch near the top-left corner.
//!
//! Stripes are kept out of the marker box so each oracle reads one generator.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::rng::{self, tag};

const DATASET_MAGIC: &[u8; 4] = b"BDDS";
const DATASET_VERSION: u32 = 1;

const MARKER_SIZE: usize = 6;
const MARKER_ORIGIN: usize = 3;
const MIN_SIDE: usize = MARKER_ORIGIN + MARKER_SIZE + 1;
const MARKER_LEVEL: f64 = 0.8;
const INTENSITY_HIGH: f64 = -0.3;
const INTENSITY_LOW: f64 = -0.7;
const INTENSITY_NONE: f64 = -0.5;
const STRIPE_AMPLITUDE: f64 = 0.2;
const STRIPE_PERIOD: usize = 4;
/// Default per-pixel sensor noise.
pub const DEFAULT_PIXEL_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    /// Bright patch present.
    Marker,
    /// Horizontal (positive) vs vertical stripes.
    Stripes,
    /// Bright (positive) vs dark background.
    Intensity,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Marker, Attribute::Stripes, Attribute::Intensity];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Marker => "marker",
            Attribute::Stripes => "stripes",
            Attribute::Intensity => "intensity",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marker" => Ok(Attribute::Marker),
            "stripes" => Ok(Attribute::Stripes),
            "intensity" => Ok(Attribute::Intensity),
            other => Err(Error::invalid(format!("unknown attribute '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Marker placement offset, uniform in `−position..=position` pixels.
    pub position: usize,
    /// Half-width of the uniform level jitter.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpriteConfig {
    pub side: usize,
    pub channels: usize,
    pub attributes: Vec<Attribute>,
    pub jitter: Jitter,
    /// Standard deviation of independent Gaussian noise added to every
    /// pixel, like sensor noise. It gives the data full-dimensional support.
    #[serde(default)]
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for SpriteConfig {
    fn default() -> Self {
        Self {
            side: 16,
            channels: 1,
            attributes: Attribute::ALL.to_vec(),
            jitter: Jitter { position: 1, amplitude: 0.05 },
            pixel_noise: DEFAULT_PIXEL_NOISE,
            seed: 0,
        }
    }
}

impl SpriteConfig {
    pub fn dim(&self) -> usize {
        self.side * self.side * self.channels
    }

    pub fn geometry(&self) -> SpriteGeometry {
        SpriteGeometry { side: self.side, channels: self.channels }
    }

    fn validate(&self) -> Result<()> {
        // Room for the marker at its largest offset.
        if self.side < MIN_SIDE {
            return Err(Error::invalid(format!("side must be at least {MIN_SIDE}")));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid("channels must be 1 or 3"));
        }
        if self.attributes.is_empty() {
            return Err(Error::invalid("at least one attribute is required"));
        }
        if self.jitter.position > 1 || !(0.0..=0.1).contains(&self.jitter.amplitude) {
            return Err(Error::invalid("jitter must satisfy position <= 1 and amplitude in [0, 0.1]"));
        }
        if !(0.0..=0.2).contains(&self.pixel_noise) {
            return Err(Error::invalid("pixel_noise must lie in [0, 0.2]"));
        }
        Ok(())
    }
}

/// Image layout needed to read an attribute back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpriteGeometry {
    pub side: usize,
    pub channels: usize,
}

impl SpriteGeometry {
    pub fn dim(&self) -> usize {
        self.side * self.side * self.channels
    }

    /// Channel-averaged pixel at `(row, col)`.
    fn pixel(&self, image: &[f64], row: usize, col: usize) -> f64 {
        let plane = self.side * self.side;
        let idx = row * self.side + col;
        (0..self.channels).map(|c| image[c * plane + idx]).sum::<f64>() / self.channels as f64
    }
}

/// Pixels that may hold the marker under any placement jitter.
fn in_marker_box(row: usize, col: usize) -> bool {
    let lo = MARKER_ORIGIN - 1;
    let hi = MARKER_ORIGIN + MARKER_SIZE + 1;
    (lo..hi).contains(&row) && (lo..hi).contains(&col)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteDataset {
    pub config: SpriteConfig,
    pub images: Vec<Vec<f64>>,
    /// `labels[a][i]` is attribute `config.attributes[a]` of image `i`.
    pub labels: Vec<Vec<bool>>,
}

impl SpriteDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels_for(&self, attribute: Attribute) -> Result<&[bool]> {
        self.config
            .attributes
            .iter()
            .position(|&a| a == attribute)
            .map(|i| self.labels[i].as_slice())
            .ok_or_else(|| Error::NotFound(format!("attribute '{attribute}' not in dataset")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DATASET_MAGIC, DATASET_VERSION);
        let header = serde_json::to_vec(&self.config).expect("config serializes");
        w.u32(header.len() as u32);
        w.bytes(&header);
        w.u64(self.images.len() as u64);
        w.u64(self.config.dim() as u64);
        for img in &self.images {
            for &v in img {
                w.f32(v as f32);
            }
        }
        w.u32(self.labels.len() as u32);
        for column in &self.labels {
            let bytes: Vec<u8> = column.iter().map(|&b| b as u8).collect();
            w.bytes(&bytes);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, DATASET_MAGIC, "BDDS", DATASET_VERSION)?;
        let header_len = r.u32()? as usize;
        let config: SpriteConfig = serde_json::from_slice(r.bytes(header_len)?)
            .map_err(|e| Error::Malformed(format!("dataset header: {e}")))?;
        let n = r.u64()? as usize;
        let d = r.u64()? as usize;
        check_dim(config.dim(), d)?;
        let mut images = Vec::with_capacity(n);
        for _ in 0..n {
            let mut img = Vec::with_capacity(d);
            for _ in 0..d {
                img.push(r.f32()? as f64);
            }
            images.push(img);
        }
        let n_attr = r.u32()? as usize;
        if n_attr != config.attributes.len() {
            return Err(Error::Malformed("label block does not match attributes".into()));
        }
        let mut labels = Vec::with_capacity(n_attr);
        for _ in 0..n_attr {
            labels.push(r.bytes(n)?.iter().map(|&b| b != 0).collect());
        }
        r.finish()?;
        Ok(Self { config, images, labels })
    }
}

/// Exactly balanced labels, shuffled.
fn balanced_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<bool> {
    let mut labels: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    if n % 2 == 1 {
        labels[n - 1] = rng.random_bool(0.5);
    }
    labels.shuffle(rng);
    labels
}

/// Render one sprite. Missing attributes keep their neutral layout.
pub fn render_sprite<R: Rng>(config: &SpriteConfig, has: impl Fn(Attribute) -> Option<bool>, rng: &mut R) -> Vec<f64> {
    let side = config.side;
    let amp = config.jitter.amplitude;
    let jit = |rng: &mut R| if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };

    let background = match has(Attribute::Intensity) {
        Some(true) => INTENSITY_HIGH,
        Some(false) => INTENSITY_LOW,
        None => INTENSITY_NONE,
    } + jit(rng);
    let mut plane = vec![background; side * side];

    if let Some(horizontal) = has(Attribute::Stripes) {
        let phase = rng.random_range(0..STRIPE_PERIOD);
        let level = STRIPE_AMPLITUDE + jit(rng) * 0.5;
        for row in 0..side {
            for col in 0..side {
                if in_marker_box(row, col) {
                    continue;
                }
                let coord = if horizontal { row } else { col };
                let up = ((coord + phase) / (STRIPE_PERIOD / 2)).is_multiple_of(2);
                plane[row * side + col] += if up { level } else { -level };
            }
        }
    }

    if has(Attribute::Marker) == Some(true) {
        let p = config.jitter.position as i64;
        let dr = if p > 0 { rng.random_range(-p..=p) } else { 0 };
        let dc = if p > 0 { rng.random_range(-p..=p) } else { 0 };
        let level = MARKER_LEVEL + 2.0 * jit(rng);
        let r0 = (MARKER_ORIGIN as i64 + dr) as usize;
        let c0 = (MARKER_ORIGIN as i64 + dc) as usize;
        for row in r0..r0 + MARKER_SIZE {
            for col in c0..c0 + MARKER_SIZE {
                plane[row * side + col] = level;
            }
        }
    }

    let mut image = Vec::with_capacity(config.dim());
    for _ in 0..config.channels {
        for &v in &plane {
            let n = if config.pixel_noise > 0.0 { config.pixel_noise * rng::gaussian(rng) } else { 0.0 };
            image.push(((v + n).clamp(-1.0, 1.0) as f32) as f64);
        }
    }
    image
}

/// Generate `n` labeled sprites; every attribute is exactly balanced.
pub fn generate_sprite_dataset(config: &SpriteConfig, n: usize) -> Result<SpriteDataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be positive"));
    }
    config.validate()?;
    let labels: Vec<Vec<bool>> = config
        .attributes
        .iter()
        .enumerate()
        .map(|(a, _)| balanced_labels(&mut rng::stream(config.seed, tag::SPLIT, a as u64), n))
        .collect();
    let images = (0..n)
        .map(|i| {
            let mut r = rng::stream(config.seed, tag::DATA, i as u64);
            let has = |attr: Attribute| config.attributes.iter().position(|&a| a == attr).map(|a| labels[a][i]);
            render_sprite(config, has, &mut r)
        })
        .collect();
    Ok(SpriteDataset { config: config.clone(), images, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Positive,
    Negative,
    Undecided,
}

impl Verdict {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Verdict::Positive => Some(true),
            Verdict::Negative => Some(false),
            Verdict::Undecided => None,
        }
    }
}

/// Statistic read by the oracle for `attribute`.
///
/// * marker: mean of the 2×2 core covered by every marker placement,
/// * stripes: `(V − H)/(V + H + 0.05)` over vertical and horizontal neighbour
///   differences outside the marker box,
/// * intensity: mean level outside the marker box.
pub fn attribute_statistic(image: &[f64], geometry: SpriteGeometry, attribute: Attribute) -> Result<f64> {
    check_dim(geometry.dim(), image.len())?;
    let side = geometry.side;
    let px = |r: usize, c: usize| geometry.pixel(image, r, c);
    Ok(match attribute {
        Attribute::Marker => {
            let c = MARKER_ORIGIN + MARKER_SIZE / 2 - 1;
            (px(c, c) + px(c, c + 1) + px(c + 1, c) + px(c + 1, c + 1)) / 4.0
        }
        Attribute::Stripes => {
            let (mut v, mut nv, mut h, mut nh) = (0.0, 0usize, 0.0, 0usize);
            for row in 0..side {
                for col in 0..side {
                    if in_marker_box(row, col) {
                        continue;
                    }
                    if row + 1 < side && !in_marker_box(row + 1, col) {
                        v += (px(row + 1, col) - px(row, col)).abs();
                        nv += 1;
                    }
                    if col + 1 < side && !in_marker_box(row, col + 1) {
                        h += (px(row, col + 1) - px(row, col)).abs();
                        nh += 1;
                    }
                }
            }
            let (v, h) = (v / nv as f64, h / nh as f64);
            (v - h) / (v + h + 0.05)
        }
        Attribute::Intensity => {
            let (mut sum, mut n) = (0.0, 0usize);
            for row in 0..side {
                for col in 0..side {
                    if !in_marker_box(row, col) {
                        sum += px(row, col);
                        n += 1;
                    }
                }
            }
            sum / n as f64
        }
    })
}

/// Thresholded read-back of `attribute`; statistics in the dead band (or
/// outside the generator's range) are undecided.
pub fn attribute_oracle(image: &[f64], geometry: SpriteGeometry, attribute: Attribute) -> Result<Verdict> {
    let s = attribute_statistic(image, geometry, attribute)?;
    let (neg, pos) = match attribute {
        Attribute::Marker => (-1.0..-0.1, 0.3..1.0 + f64::EPSILON),
        Attribute::Stripes => (-1.0..-0.25, 0.25..1.0 + f64::EPSILON),
        Attribute::Intensity => (-0.9..-0.55, -0.45..-0.1),
    };
    Ok(if pos.contains(&s) {
        Verdict::Positive
    } else if neg.contains(&s) {
        Verdict::Negative
    } else {
        Verdict::Undecided
    })
}
