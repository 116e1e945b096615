//! Training augmentations and inference-time degradations.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{clamp_pixel, gaussian_blur, jpeg_recompress, reflect_index, ImagePlane};
use crate::error::{Error, Result};

pub fn horizontal_flip(img: &ImagePlane) -> ImagePlane {
    let (w, h) = (img.width(), img.height());
    img.map_channels(|c| {
        let mut out = Vec::with_capacity(c.len());
        for y in 0..h {
            out.extend(c[y * w..(y + 1) * w].iter().rev());
        }
        out
    })
}

/// Adds i.i.d. N(0, sigma²) noise, then clamps.
pub fn gaussian_noise(img: &ImagePlane, sigma: f64, seed: u64) -> Result<ImagePlane> {
    check_range("noise sigma", sigma, 0.0, 64.0)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_pixel(v + normal.sample(&mut rng)))
        .collect();
    Ok(img.with_data(data))
}

/// Rotates about the image center by `degrees` (counter-clockwise on screen)
/// using bilinear sampling; samples falling outside are reflected back in.
pub fn rotate(img: &ImagePlane, degrees: f64) -> Result<ImagePlane> {
    check_range("rotation", degrees, -180.0, 180.0)?;
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    Ok(img.map_channels(|c| {
        let at = |x: isize, y: isize| c[reflect_index(y, h) * w + reflect_index(x, w)];
        let mut out = Vec::with_capacity(c.len());
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                // Inverse map: output pixel -> source location.
                let sx = cos * dx - sin * dy + cx;
                let sy = sin * dx + cos * dy + cy;
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
                let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
                out.push(clamp_pixel(top * (1.0 - fy) + bottom * fy));
            }
        }
        out
    }))
}

/// `clamp(gain * (v - 128) + 128 + offset)`.
pub fn brightness_contrast(img: &ImagePlane, offset: f64, gain: f64) -> Result<ImagePlane> {
    check_range("brightness offset", offset, -128.0, 128.0)?;
    check_range("contrast gain", gain, 0.0, 4.0)?;
    if offset == 0.0 && gain == 1.0 {
        return Ok(img.clone());
    }
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_pixel(gain * (v - 128.0) + 128.0 + offset))
        .collect();
    Ok(img.with_data(data))
}

/// Zeroes a regular grid of square cells covering roughly `ratio` of the
/// image area. The grid phase is drawn from `seed`.
pub fn grid_dropout(img: &ImagePlane, ratio: f64, seed: u64) -> Result<ImagePlane> {
    check_range("dropout ratio", ratio, 0.0, 0.9)?;
    if ratio == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let unit = (w.min(h) / 4).max(4);
    let side = ((unit as f64 * ratio.sqrt()).round() as usize).clamp(1, unit - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ox, oy) = (rng.random_range(0..unit), rng.random_range(0..unit));
    let n = img.channels().count();
    let mut data = img.data().to_vec();
    for y in 0..h {
        if (y + oy) % unit >= side {
            continue;
        }
        for x in 0..w {
            if (x + ox) % unit < side {
                data[(y * w + x) * n..(y * w + x + 1) * n].fill(0.0);
            }
        }
    }
    Ok(img.with_data(data))
}

fn check_range(what: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} {v} outside [{lo}, {hi}]")))
    }
}

/// Per-op probability of being applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Probabilities {
    pub flip: f64,
    pub rotate: f64,
    pub color: f64,
    pub blur: f64,
    pub noise: f64,
    pub dropout: f64,
    pub jpeg: f64,
}

impl Probabilities {
    pub fn uniform(p: f64) -> Self {
        Probabilities {
            flip: p,
            rotate: p,
            color: p,
            blur: p,
            noise: p,
            dropout: p,
            jpeg: p,
        }
    }

    fn all(&self) -> [(&'static str, f64); 7] {
        [
            ("flip", self.flip),
            ("rotate", self.rotate),
            ("color", self.color),
            ("blur", self.blur),
            ("noise", self.noise),
            ("dropout", self.dropout),
            ("jpeg", self.jpeg),
        ]
    }
}

impl Default for Probabilities {
    fn default() -> Self {
        Self::uniform(0.3)
    }
}

/// Randomized training augmentation. Ranges are inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub probabilities: Probabilities,
    pub blur_sigma: (f64, f64),
    pub jpeg_quality: (u32, u32),
    pub noise_sigma: (f64, f64),
    pub rotation_degrees: (f64, f64),
    pub brightness_offset: (f64, f64),
    pub contrast_gain: (f64, f64),
    pub dropout_ratio: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            probabilities: Probabilities::default(),
            blur_sigma: (0.1, 3.0),
            jpeg_quality: (30, 95),
            noise_sigma: (0.0, 12.0),
            rotation_degrees: (-10.0, 10.0),
            brightness_offset: (-20.0, 20.0),
            contrast_gain: (0.8, 1.2),
            dropout_ratio: 0.1,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// A policy that never changes its input.
    pub fn identity() -> Self {
        AugmentPolicy {
            probabilities: Probabilities::uniform(0.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.probabilities.all() {
            check_range(&format!("probability {name}"), p, 0.0, 1.0)?;
        }
        let ranges = [
            ("blur sigma", self.blur_sigma, 1e-3, 20.0),
            ("noise sigma", self.noise_sigma, 0.0, 64.0),
            ("rotation", self.rotation_degrees, -180.0, 180.0),
            ("brightness offset", self.brightness_offset, -128.0, 128.0),
            ("contrast gain", self.contrast_gain, 1e-3, 4.0),
        ];
        for (name, (lo, hi), min, max) in ranges {
            check_range(name, lo, min, max)?;
            check_range(name, hi, min, max)?;
            if lo > hi {
                return Err(Error::InvalidArgument(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        let (qlo, qhi) = self.jpeg_quality;
        if !(1..=100).contains(&qlo) || !(1..=100).contains(&qhi) || qlo > qhi {
            return Err(Error::InvalidArgument(format!(
                "JPEG quality range [{qlo}, {qhi}] invalid"
            )));
        }
        check_range("dropout ratio", self.dropout_ratio, 0.0, 0.9)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Applies each augmentation with its probability, in the fixed order
/// flip, rotate, brightness/contrast, blur, noise, grid dropout, JPEG.
///
/// The random stream is selected by `draw` (typically a hash of the record
/// id) within the policy seed, so results do not depend on processing order.
pub fn apply_policy(img: &ImagePlane, policy: &AugmentPolicy, draw: u64) -> Result<ImagePlane> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    rng.set_stream(draw);
    let p = &policy.probabilities;
    let mut out = img.clone();
    if rng.random::<f64>() < p.flip {
        out = horizontal_flip(&out);
    }
    if rng.random::<f64>() < p.rotate {
        out = rotate(&out, uniform(&mut rng, policy.rotation_degrees))?;
    }
    if rng.random::<f64>() < p.color {
        let offset = uniform(&mut rng, policy.brightness_offset);
        let gain = uniform(&mut rng, policy.contrast_gain);
        out = brightness_contrast(&out, offset, gain)?;
    }
    if rng.random::<f64>() < p.blur {
        out = gaussian_blur(&out, uniform(&mut rng, policy.blur_sigma))?;
    }
    if rng.random::<f64>() < p.noise {
        let sigma = uniform(&mut rng, policy.noise_sigma);
        out = gaussian_noise(&out, sigma, rng.random())?;
    }
    if rng.random::<f64>() < p.dropout {
        out = grid_dropout(&out, policy.dropout_ratio, rng.random())?;
    }
    if rng.random::<f64>() < p.jpeg {
        let (lo, hi) = policy.jpeg_quality;
        out = jpeg_recompress(&out, rng.random_range(lo..=hi))?;
    }
    Ok(out)
}

/// A single named degradation at a fixed level, e.g. `blur:2` or `jpeg:50`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Blur(f64),
    Jpeg(u32),
}

impl Degradation {
    pub fn name(&self) -> &'static str {
        match self {
            Degradation::Blur(_) => "blur",
            Degradation::Jpeg(_) => "jpeg",
        }
    }

    pub fn level(&self) -> String {
        match self {
            Degradation::Blur(s) => s.to_string(),
            Degradation::Jpeg(q) => q.to_string(),
        }
    }

    pub fn apply(&self, img: &ImagePlane) -> Result<ImagePlane> {
        match *self {
            Degradation::Blur(sigma) => gaussian_blur(img, sigma),
            Degradation::Jpeg(qf) => jpeg_recompress(img, qf),
        }
    }

    /// Parses `name:level[,level...]` into one degradation per level.
    pub fn parse_sweep(text: &str) -> Result<Vec<Degradation>> {
        let (name, levels) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("degradation {text:?} is not name:levels")))?;
        levels
            .split(',')
            .map(|l| format!("{}:{}", name.trim(), l.trim()).parse())
            .collect()
    }

    /// Blur sigma 1..5 then JPEG quality 90..30.
    pub fn default_sweep() -> Vec<Vec<Degradation>> {
        vec![
            (1..=5).map(|s| Degradation::Blur(s as f64)).collect(),
            (3..=9).rev().map(|q| Degradation::Jpeg(q * 10)).collect(),
        ]
    }
}

impl fmt::Display for Degradation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.level())
    }
}

impl FromStr for Degradation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse degradation {s:?}"));
        let (name, level) = s.split_once(':').ok_or_else(bad)?;
        match name.trim() {
            "blur" => {
                let sigma: f64 = level.trim().parse().map_err(|_| bad())?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(bad());
                }
                Ok(Degradation::Blur(sigma))
            }
            "jpeg" => {
                let qf: u32 = level.trim().parse().map_err(|_| bad())?;
                if !(1..=100).contains(&qf) {
                    return Err(bad());
                }
                Ok(Degradation::Jpeg(qf))
            }
            _ => Err(bad()),
        }
    }
}
