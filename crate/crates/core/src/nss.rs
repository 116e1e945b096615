//! Native natural-scene-statistics features.
//!
//! Luma is normalized into MSCN coefficients (local Gaussian-weighted mean
//! subtraction and contrast division). A generalized Gaussian is fit to the
//! coefficients and asymmetric generalized Gaussians to the products of
//! horizontally, vertically and diagonally adjacent coefficients. The same is
//! repeated at half resolution, giving 36 values:
//!
//! | index (scale s = 0, 1) | value |
//! |---|---|
//! | 18s + 0, 1 | GGD alpha, sigma² of MSCN |
//! | 18s + 2 + 4k .. +4 | AGGD alpha, eta, beta_l², beta_r² for orientation k = H, V, D1, D2 |

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::imaging::{reflect_index, to_luma, ImagePlane, MIN_SIDE};

pub const NSS_DIM: usize = 36;
pub const MIN_FIT_SAMPLES: usize = 64;
pub const ALPHA_MIN: f64 = 0.05;
pub const ALPHA_MAX: f64 = 10.0;

const WINDOW_RADIUS: isize = 3;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const STABILITY_C: f64 = 1.0;

const ORIENTATIONS: [(&str, isize, isize); 4] = [("h", 1, 0), ("v", 0, 1), ("d1", 1, 1), ("d2", -1, 1)];

/// Outcome of a distribution fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    /// The moment ratio fell outside the alpha search interval; alpha was
    /// pinned to the nearest bound.
    Clamped,
    /// Input carried no usable spread; sentinel parameters were returned.
    Degenerate,
}

/// Row-major single-channel coefficient plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl CoefficientPlane {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Products of each coefficient with its neighbour at offset `(dx, dy)`,
    /// over all positions where both lie inside the plane.
    pub fn neighbour_products(&self, dx: isize, dy: isize) -> Vec<f64> {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (x + dx, y + dy);
                if (0..w).contains(&nx) && (0..h).contains(&ny) {
                    out.push(self.data[(y * w + x) as usize] * self.data[(ny * w + nx) as usize]);
                }
            }
        }
        out
    }
}

/// MSCN coefficients of the luma of `img`.
pub fn mscn(img: &ImagePlane) -> Result<CoefficientPlane> {
    let luma = to_luma(img);
    Ok(mscn_raw(luma.data(), luma.width(), luma.height()))
}

// Local moments are accumulated relative to the center pixel, so flat
// windows give exactly zero numerator and variance.
fn mscn_raw(data: &[f64], width: usize, height: usize) -> CoefficientPlane {
    use crate::imaging::filters::kernel_with_radius;
    let taps = kernel_with_radius(WINDOW_SIGMA, WINDOW_RADIUS);
    let r = WINDOW_RADIUS;
    let mut coeffs = Vec::with_capacity(data.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            let center = data[y as usize * width + x as usize];
            let (mut s1, mut s2) = (0.0, 0.0);
            for (ky, wy) in taps.iter().enumerate() {
                let row = reflect_index(y + ky as isize - r, height) * width;
                for (kx, wx) in taps.iter().enumerate() {
                    let d = data[row + reflect_index(x + kx as isize - r, width)] - center;
                    let w = wy * wx;
                    s1 += w * d;
                    s2 += w * d * d;
                }
            }
            let sigma = (s2 - s1 * s1).max(0.0).sqrt();
            coeffs.push(-s1 / (sigma + STABILITY_C));
        }
    }
    CoefficientPlane {
        width,
        height,
        data: coeffs,
    }
}

/// Moment ratio `Γ(2/α)² / (Γ(1/α) Γ(3/α))` of a generalized Gaussian;
/// increasing in α.
pub fn ggd_ratio(alpha: f64) -> f64 {
    (2.0 * ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp()
}

/// Bisection on [ALPHA_MIN, ALPHA_MAX] for `ggd_ratio(alpha) = target`.
fn solve_alpha(target: f64) -> (f64, FitStatus) {
    let (mut lo, mut hi) = (ALPHA_MIN, ALPHA_MAX);
    if target <= ggd_ratio(lo) {
        return (lo, FitStatus::Clamped);
    }
    if target >= ggd_ratio(hi) {
        return (hi, FitStatus::Clamped);
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let r = ggd_ratio(mid);
        if (r - target).abs() < 1e-12 || hi - lo < 1e-15 {
            break;
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, FitStatus::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub alpha: f64,
    pub sigma2: f64,
    pub status: FitStatus,
}

impl GgdFit {
    pub const SENTINEL: GgdFit = GgdFit {
        alpha: 2.0,
        sigma2: 0.0,
        status: FitStatus::Degenerate,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub alpha: f64,
    pub eta: f64,
    pub beta_l2: f64,
    pub beta_r2: f64,
    pub status: FitStatus,
}

impl AggdFit {
    pub const SENTINEL: AggdFit = AggdFit {
        alpha: 2.0,
        eta: 0.0,
        beta_l2: 0.0,
        beta_r2: 0.0,
        status: FitStatus::Degenerate,
    };

    /// Shape-scale parameters of the fitted density
    /// `exp(-(|x|/β)^α)` on each side, derived from the per-side RMS values.
    pub fn shape_scales(&self) -> (f64, f64) {
        let k = (0.5 * (ln_gamma(1.0 / self.alpha) - ln_gamma(3.0 / self.alpha))).exp();
        (self.beta_l2.sqrt() * k, self.beta_r2.sqrt() * k)
    }
}

fn check_len(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "distribution fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {v}")));
    }
    Ok(())
}

/// Moment-matching generalized Gaussian fit.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    check_len(samples)?;
    let n = samples.len() as f64;
    let mean_abs = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = samples.iter().map(|v| v * v).sum::<f64>() / n;
    if mean_sq == 0.0 {
        log::debug!("GGD fit on all-zero input; returning sentinel");
        return Ok(GgdFit::SENTINEL);
    }
    let (alpha, status) = solve_alpha(mean_abs * mean_abs / mean_sq);
    Ok(GgdFit {
        alpha,
        sigma2: mean_sq,
        status,
    })
}

/// Moment-matching asymmetric generalized Gaussian fit.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit> {
    check_len(samples)?;
    let (mut sum_l, mut n_l, mut sum_r, mut n_r) = (0.0, 0usize, 0.0, 0usize);
    for &v in samples {
        if v < 0.0 {
            sum_l += v * v;
            n_l += 1;
        } else if v > 0.0 {
            sum_r += v * v;
            n_r += 1;
        }
    }
    if n_l == 0 || n_r == 0 {
        log::debug!("AGGD fit on one-sided input; returning sentinel");
        return Ok(AggdFit::SENTINEL);
    }
    let beta_l = (sum_l / n_l as f64).sqrt();
    let beta_r = (sum_r / n_r as f64).sqrt();
    let gamma = beta_l / beta_r;
    let n = samples.len() as f64;
    let mean_abs = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let big_r = r_hat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let (alpha, status) = solve_alpha(big_r);
    let eta = (beta_r - beta_l) * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
    Ok(AggdFit {
        alpha,
        eta,
        beta_l2: beta_l * beta_l,
        beta_r2: beta_r * beta_r,
        status,
    })
}

// Small planes (the second scale of a minimum-size image) may not provide
// enough samples; those fits degrade to sentinels like empty ones.
fn ggd_or_sentinel(samples: &[f64]) -> GgdFit {
    if samples.len() < MIN_FIT_SAMPLES {
        return GgdFit::SENTINEL;
    }
    fit_ggd(samples).unwrap_or(GgdFit::SENTINEL)
}

fn aggd_or_sentinel(samples: &[f64]) -> AggdFit {
    if samples.len() < MIN_FIT_SAMPLES {
        return AggdFit::SENTINEL;
    }
    fit_aggd(samples).unwrap_or(AggdFit::SENTINEL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NssFeatures {
    pub values: [f64; NSS_DIM],
    /// One entry per fit: per scale the GGD fit then the four AGGD fits.
    pub status: [FitStatus; 10],
}

impl NssFeatures {
    pub fn degenerate_fits(&self) -> usize {
        self.status.iter().filter(|s| **s == FitStatus::Degenerate).count()
    }

    pub fn names() -> Vec<String> {
        let mut names = Vec::with_capacity(NSS_DIM);
        for scale in 1..=2 {
            names.push(format!("s{scale}_mscn_alpha"));
            names.push(format!("s{scale}_mscn_sigma2"));
            for (o, _, _) in ORIENTATIONS {
                for p in ["alpha", "eta", "beta_l2", "beta_r2"] {
                    names.push(format!("s{scale}_{o}_{p}"));
                }
            }
        }
        names
    }
}

fn box_downsample(data: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * width + 2 * x;
            out.push(0.25 * (data[i] + data[i + 1] + data[i + width] + data[i + width + 1]));
        }
    }
    (out, w2, h2)
}

/// Two-scale NSS feature vector of an image at its native resolution.
pub fn extract_nss(img: &ImagePlane) -> Result<NssFeatures> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::Undersized {
            width: img.width(),
            height: img.height(),
            min: MIN_SIDE,
        });
    }
    let luma = to_luma(img);
    let mut data = luma.data().to_vec();
    let (mut w, mut h) = (luma.width(), luma.height());
    let mut values = [0.0; NSS_DIM];
    let mut status = [FitStatus::Ok; 10];
    for scale in 0..2 {
        if scale > 0 {
            (data, w, h) = box_downsample(&data, w, h);
        }
        let plane = mscn_raw(&data, w, h);
        let base = 18 * scale;
        let ggd = ggd_or_sentinel(&plane.data);
        values[base] = ggd.alpha;
        values[base + 1] = ggd.sigma2;
        status[5 * scale] = ggd.status;
        for (k, (_, dx, dy)) in ORIENTATIONS.iter().enumerate() {
            let fit = aggd_or_sentinel(&plane.neighbour_products(*dx, *dy));
            let at = base + 2 + 4 * k;
            values[at..at + 4].copy_from_slice(&[fit.alpha, fit.eta, fit.beta_l2, fit.beta_r2]);
            status[5 * scale + 1 + k] = fit.status;
        }
    }
    let features = NssFeatures { values, status };
    if features.degenerate_fits() > 0 {
        log::warn!("{} of 10 NSS fits degenerate", features.degenerate_fits());
    }
    Ok(features)
}
