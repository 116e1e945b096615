//! Procedural fixtures: natural-looking images, toy corpora, and Gaussian
//! feature blobs. Used by tests, the acceptance suite, and the CLI `demo`
//! command.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{FeatureRecord, FeatureSet};
use crate::imaging::{median_filter, save_png, Channels, ImagePlane};
use crate::manifest::{save_manifest, Label, Manifest, SampleRecord, SampleType, Split};

/// RGB image with 1/f-weighted oriented gratings, a few hard-edged shapes and
/// mild sensor noise.
pub fn natural_image(width: usize, height: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let size = width.max(height) as f64;
    let mut field = [vec![0.0; n], vec![0.0; n]];
    for f in field.iter_mut() {
        for _ in 0..14 {
            let freq: f64 = rng.random_range(0.5..size / 5.0);
            let theta: f64 = rng.random_range(0.0..PI);
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let amp = 1.0 / freq;
            let (kx, ky) = (
                2.0 * PI * freq * theta.cos() / size,
                2.0 * PI * freq * theta.sin() / size,
            );
            for y in 0..height {
                for x in 0..width {
                    f[y * width + x] += amp * (kx * x as f64 + ky * y as f64 + phase).sin();
                }
            }
        }
    }
    let [mut lum, tint] = field;
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let (lo, range) = span(&lum);
    for v in lum.iter_mut() {
        *v = 30.0 + 160.0 * (*v - lo) / range;
    }
    for _ in 0..rng.random_range(3..7) {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let r = rng.random_range(size / 16.0..size / 5.0);
        let shade = rng.random_range(-50.0..50.0);
        let disc = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if disc {
                    dx * dx + dy * dy < r * r
                } else {
                    dx.abs() < r && dy.abs() < 0.6 * r
                };
                if inside {
                    lum[y * width + x] += shade;
                }
            }
        }
    }
    let (tlo, trange) = span(&tint);
    let mix = [
        rng.random_range(-25.0..25.0),
        rng.random_range(-25.0..25.0),
        rng.random_range(-25.0..25.0),
    ];
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let t = (tint[i] - tlo) / trange - 0.5;
        for m in mix {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(lum[i] + m * t + 2.0 * noise);
        }
    }
    ImagePlane::from_clamped(width, height, Channels::Rgb3, data).expect("fixture dimensions are valid")
}

/// Split assignment for index `i` of `n`: 60% train, 20% val, 20% test.
fn split_for(i: usize, n: usize) -> Split {
    let frac = i as f64 / n as f64;
    if frac < 0.6 {
        Split::Train
    } else if frac < 0.8 {
        Split::Val
    } else {
        Split::Test
    }
}

/// Writes `pairs` procedural "photos" and their median-filtered counterparts
/// as PNGs under `dir`, plus `manifest.json`. Even pairs use a 3x3 median and
/// generator tag `median3`; odd pairs a 5x5 median and tag `median5`.
pub fn write_toy_corpus(dir: &Path, pairs: usize, side: usize, seed: u64) -> Result<Manifest> {
    fs::create_dir_all(dir.join("real")).map_err(|e| Error::io(dir, e))?;
    fs::create_dir_all(dir.join("fake")).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(2 * pairs);
    for i in 0..pairs {
        let (radius, generator) = if i % 2 == 0 { (1, "median3") } else { (2, "median5") };
        let split = split_for(i, pairs);
        let real = natural_image(side, side, seed.wrapping_add(i as u64));
        let fake = median_filter(&real, radius);
        for (label, st, img) in [
            (Label::Real, SampleType::Real, &real),
            (Label::Fake, SampleType::Fake, &fake),
        ] {
            let rel = format!("{}/{:04}.png", label.as_str(), i);
            save_png(img, dir.join(&rel))?;
            records.push(SampleRecord {
                id: format!("{}-{:04}", label.as_str(), i),
                path: rel,
                label,
                sample_type: st,
                generator: generator.to_string(),
                split,
            });
        }
    }
    let mut manifest = Manifest::new("toy-median", records);
    manifest.source_note = format!("procedural photos vs median-filtered counterparts, seed {seed}");
    let path = dir.join("manifest.json");
    save_manifest(&manifest, &path)?;
    manifest.base_dir = Some(dir.to_path_buf());
    Ok(manifest)
}

/// Two isotropic Gaussian classes in `dim` dimensions whose means are
/// `separation` standard deviations apart along a random direction.
pub fn gaussian_blobs(per_class: usize, dim: usize, separation: f64, seed: u64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut records = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
        let sign = if label == Label::Fake { 0.5 } else { -0.5 };
        let features = (0..dim)
            .map(|d| (offset[d] + sign * separation * dir[d] + normal.sample(&mut rng)) as f32)
            .collect();
        records.push(FeatureRecord {
            id: format!("blob-{i:05}"),
            label,
            sample_type: if label == Label::Fake {
                SampleType::Fake
            } else {
                SampleType::Real
            },
            generator: "blob".into(),
            split: Split::Train,
            features,
        });
    }
    FeatureSet::new("synthetic-blobs", dim, records).expect("blob fixture is consistent")
}
