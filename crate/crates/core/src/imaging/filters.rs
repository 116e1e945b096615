use super::{clamp_pixel, reflect_index, to_luma, ImagePlane};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    kernel_with_radius(sigma, radius)
}

pub(crate) fn kernel_with_radius(sigma: f64, radius: isize) -> Vec<f64> {
    let taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable convolution of a single-channel row-major buffer with
/// reflect padding.
pub(crate) fn convolve_separable(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[reflect_index(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * tmp[reflect_index(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn gaussian_blur(img: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    Ok(img.map_channels(|c| {
        convolve_separable(c, w, h, &kernel)
            .into_iter()
            .map(clamp_pixel)
            .collect()
    }))
}

/// Variance of the 4-neighbour Laplacian of the luma plane, a sharpness
/// measure.
pub fn laplacian_variance(img: &ImagePlane) -> f64 {
    let luma = to_luma(img);
    let (w, h) = (luma.width(), luma.height());
    let at = |x: isize, y: isize| luma.get(reflect_index(x, w), reflect_index(y, h), 0);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            values.push(at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y));
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Per-channel median over a `(2r+1)²` window with reflect padding.
pub fn median_filter(img: &ImagePlane, radius: usize) -> ImagePlane {
    let (w, h) = (img.width(), img.height());
    let r = radius as isize;
    img.map_channels(|c| {
        let mut window = Vec::with_capacity((2 * radius + 1).pow(2));
        let mut out = Vec::with_capacity(c.len());
        for y in 0..h as isize {
            for x in 0..w as isize {
                window.clear();
                for dy in -r..=r {
                    for dx in -r..=r {
                        window.push(c[reflect_index(y + dy, h) * w + reflect_index(x + dx, w)]);
                    }
                }
                window.sort_by(f64::total_cmp);
                out.push(window[window.len() / 2]);
            }
        }
        out
    })
}
